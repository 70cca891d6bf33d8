//! Per-run manifests. A manifest is itself a valid config file: the
//! configuration lines come first, and seeds and digests follow as comments.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};
use weibo_cnn::seed::{stage, stage_seed};

use crate::config::RunConfig;

const STAGES: &[&str] = &[
    stage::PREBALANCE,
    stage::SPLIT,
    stage::OVERSAMPLE,
    stage::INIT,
    stage::VALIDATION,
    stage::EPOCH_SHUFFLE,
    stage::DROPOUT,
];

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {} for hashing", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn render(command: &str, cfg: &RunConfig, inputs: &[PathBuf], artifacts: &[PathBuf]) -> Result<String> {
    let mut s = format!("# weibo-cnn manifest\n# command: {command}\n");
    s.push_str(&cfg.to_text());
    for name in STAGES {
        s.push_str(&format!("# seed {name} {}\n", stage_seed(cfg.seed, name)));
    }
    for p in inputs {
        s.push_str(&format!("# input {} sha256={}\n", p.display(), sha256_file(p)?));
    }
    for p in artifacts {
        s.push_str(&format!("# artifact {} sha256={}\n", p.display(), sha256_file(p)?));
    }
    Ok(s)
}

pub fn write(path: &Path, command: &str, cfg: &RunConfig, inputs: &[PathBuf], artifacts: &[PathBuf]) -> Result<()> {
    let text = render(command, cfg, inputs, artifacts)?;
    fs::write(path, text).with_context(|| format!("cannot write manifest {}", path.display()))
}
