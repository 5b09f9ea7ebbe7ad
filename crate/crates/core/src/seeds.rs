//! Seed fan-out. Every random stage draws from its own generator whose seed is
//! derived from the master seed and a stage label, so adding or reordering
//! stages never perturbs the draws of another stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// First 8 bytes (little endian) of `sha256(le(seed) || label)`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn stage_rng(master: u64, label: &str) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, label))
}
