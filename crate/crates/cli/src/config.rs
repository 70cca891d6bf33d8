//! Run configuration: built-in defaults, a key-value config file, and
//! command-line flags, applied in that order.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use weibo_cnn::model::ModelConfig;
use weibo_cnn::sampler::DEFAULT_SPLIT_RATIO;
use weibo_cnn::trainer::TrainConfig;

use crate::args::Options;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub dict: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub out: PathBuf,
    pub model_path: Option<PathBuf>,
    pub seed: u64,
    pub split_ratio: f64,
    pub reconstruct_counts: bool,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            dict: None,
            stopwords: None,
            out: PathBuf::from("out"),
            model_path: None,
            seed: 0,
            split_ratio: DEFAULT_SPLIT_RATIO,
            reconstruct_counts: false,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Keys accepted in config files, in the order manifests list them.
pub const KEYS: &[&str] = &[
    "corpus",
    "dict",
    "stopwords",
    "out",
    "model",
    "seed",
    "max-words",
    "maxlen",
    "embed-dim",
    "filters",
    "kernel",
    "hidden",
    "dropout",
    "epochs",
    "batch-size",
    "patience",
    "val-split",
    "split-ratio",
    "reconstruct-counts",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("invalid value {value:?} for {key}: {e}"))
}

impl RunConfig {
    /// Resolves defaults, then `options.config` if given, then the flags.
    pub fn resolve(options: &Options) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &options.config {
            cfg.apply_file(path)?;
        }
        cfg.apply_flags(options);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        self.apply_text(&text)
            .with_context(|| format!("in config file {}", path.display()))
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`", n + 1);
            };
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = Some(value.into()),
            "dict" => self.dict = Some(value.into()),
            "stopwords" => self.stopwords = Some(value.into()),
            "out" => self.out = value.into(),
            "model" => self.model_path = Some(value.into()),
            "seed" => self.seed = parse_value(key, value)?,
            "max-words" => self.model.vocab_size = parse_value(key, value)?,
            "maxlen" => self.model.maxlen = parse_value(key, value)?,
            "embed-dim" => self.model.embed_dim = parse_value(key, value)?,
            "filters" => self.model.filters = parse_value(key, value)?,
            "kernel" => self.model.kernel_size = parse_value(key, value)?,
            "hidden" => self.model.hidden = parse_value(key, value)?,
            "dropout" => self.model.dropout = parse_value(key, value)?,
            "epochs" => self.train.epochs = parse_value(key, value)?,
            "batch-size" => self.train.batch_size = parse_value(key, value)?,
            "patience" => self.train.patience = parse_value(key, value)?,
            "val-split" => self.train.val_fraction = parse_value(key, value)?,
            "split-ratio" => self.split_ratio = parse_value(key, value)?,
            "reconstruct-counts" => self.reconstruct_counts = parse_value(key, value)?,
            _ => bail!("unknown config key {key:?}"),
        }
        Ok(())
    }

    pub fn apply_flags(&mut self, o: &Options) {
        fn take<T: Clone>(slot: &mut T, flag: &Option<T>) {
            if let Some(v) = flag {
                *slot = v.clone();
            }
        }
        if o.corpus.is_some() {
            self.corpus = o.corpus.clone();
        }
        if o.dict.is_some() {
            self.dict = o.dict.clone();
        }
        if o.stopwords.is_some() {
            self.stopwords = o.stopwords.clone();
        }
        if o.model.is_some() {
            self.model_path = o.model.clone();
        }
        take(&mut self.out, &o.out);
        take(&mut self.seed, &o.seed);
        take(&mut self.model.vocab_size, &o.max_words);
        take(&mut self.model.maxlen, &o.maxlen);
        take(&mut self.model.embed_dim, &o.embed_dim);
        take(&mut self.model.filters, &o.filters);
        take(&mut self.model.kernel_size, &o.kernel);
        take(&mut self.model.hidden, &o.hidden);
        take(&mut self.model.dropout, &o.dropout);
        take(&mut self.train.epochs, &o.epochs);
        take(&mut self.train.batch_size, &o.batch_size);
        take(&mut self.train.patience, &o.patience);
        take(&mut self.train.val_fraction, &o.val_split);
        take(&mut self.split_ratio, &o.split_ratio);
        take(&mut self.reconstruct_counts, &o.reconstruct_counts);
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let t = &self.train;
        for (flag, v) in [
            ("--embed-dim", m.embed_dim),
            ("--filters", m.filters),
            ("--kernel", m.kernel_size),
            ("--hidden", m.hidden),
            ("--maxlen", m.maxlen),
            ("--epochs", t.epochs),
            ("--batch-size", t.batch_size),
        ] {
            if v == 0 {
                bail!("{flag} must be positive");
            }
        }
        if m.vocab_size < 2 {
            bail!("--max-words must be at least 2, got {}", m.vocab_size);
        }
        if m.kernel_size > m.maxlen {
            bail!("--kernel {} exceeds --maxlen {}", m.kernel_size, m.maxlen);
        }
        if !(0.0..1.0).contains(&m.dropout) {
            bail!("--dropout must lie in [0, 1), got {}", m.dropout);
        }
        if !(t.val_fraction > 0.0 && t.val_fraction < 1.0) {
            bail!("--val-split must lie in (0, 1), got {}", t.val_fraction);
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            bail!("--split-ratio must lie in (0, 1), got {}", self.split_ratio);
        }
        m.validate().context("invalid model configuration")?;
        t.validate().context("invalid training configuration")?;
        Ok(())
    }

    pub fn model_file(&self) -> PathBuf {
        self.model_path.clone().unwrap_or_else(|| self.out.join("model.wscnn"))
    }

    /// `key = value` lines in config-file syntax; unset paths are omitted.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let m = &self.model;
        let t = &self.train;
        let values: Vec<Option<String>> = vec![
            path(&self.corpus),
            path(&self.dict),
            path(&self.stopwords),
            Some(self.out.display().to_string()),
            path(&self.model_path),
            Some(self.seed.to_string()),
            Some(m.vocab_size.to_string()),
            Some(m.maxlen.to_string()),
            Some(m.embed_dim.to_string()),
            Some(m.filters.to_string()),
            Some(m.kernel_size.to_string()),
            Some(m.hidden.to_string()),
            Some(format!("{:?}", m.dropout)),
            Some(t.epochs.to_string()),
            Some(t.batch_size.to_string()),
            Some(t.patience.to_string()),
            Some(format!("{:?}", t.val_fraction)),
            Some(format!("{:?}", self.split_ratio)),
            Some(self.reconstruct_counts.to_string()),
        ];
        KEYS.iter()
            .zip(values)
            .filter_map(|(k, v)| v.map(|v| format!("{k} = {v}\n")))
            .collect()
    }
}

/// Fails with the flag name when a required path was not supplied.
pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str, command: &str) -> Result<&'a Path> {
    match path {
        Some(p) => Ok(p),
        None => bail!("{command} requires --{flag}"),
    }
}
