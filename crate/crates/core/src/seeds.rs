//! Root-seed expansion.
//!
//! Every stage draws from its own generator seeded with the first eight bytes
//! (little endian) of `SHA-256("{root}/{stage}")`. Stage names are the
//! constants below; per-item streams (one tree of a forest) append
//! `"/{index}"` to the stage name.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub const STAGE_SYNTH: &str = "synth";
pub const STAGE_CODEBOOK: &str = "codebook";
pub const STAGE_SPLIT: &str = "split";
pub const STAGE_LINEAR: &str = "linear";
pub const STAGE_KNN: &str = "knn";
pub const STAGE_RANDOM_FOREST: &str = "random_forest";
pub const STAGE_EXTRA_TREES: &str = "extra_trees";
pub const STAGE_TEXT: &str = "text";

pub fn derive_seed(root: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(format!("{root}/{stage}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stage_rng(root: u64, stage: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, stage))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
