//! Per-stage random streams derived from one master seed.
//!
//! Every stage that needs randomness asks for its own stream by name. The
//! stream seed is the first eight bytes (little-endian) of
//! `SHA-256("weibo-cnn/seed/v1/" ++ stage ++ "/" ++ master_le_bytes)`, and
//! the generator is ChaCha8 seeded from that value. Renaming or adding a
//! stage never shifts another stage's stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator used for every seeded stream in the crate.
pub type StageRng = ChaCha8Rng;

/// Stream names used by the pipeline.
pub mod stage {
    pub const PREBALANCE: &str = "prebalance";
    pub const SPLIT: &str = "split";
    pub const OVERSAMPLE: &str = "oversample";
    pub const INIT: &str = "init";
    pub const VALIDATION: &str = "validation";
    pub const EPOCH_SHUFFLE: &str = "epoch-shuffle";
    pub const DROPOUT: &str = "dropout";
}

pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(b"weibo-cnn/seed/v1/");
    hasher.update(stage.as_bytes());
    hasher.update(b"/");
    hasher.update(master.to_le_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

pub fn stage_rng(master: u64, stage: &str) -> StageRng {
    StageRng::seed_from_u64(stage_seed(master, stage))
}
