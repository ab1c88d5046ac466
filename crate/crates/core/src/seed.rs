//! Seed derivation.
//!
//! A sub-seed is the first eight bytes (little endian) of
//! `SHA-256(master_le_bytes || 0x00 || tag_1 || 0x00 || tag_2 ...)`. Stages
//! use a stage tag and, for per-instance decisions, the instance id, so the
//! value drawn for an instance does not depend on where it sits in a file or
//! which worker handles it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SeededRng = ChaCha8Rng;

pub fn derive_seed(master: u64, tags: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    for tag in tags {
        hasher.update([0u8]);
        hasher.update(tag.as_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_for(master: u64, tags: &[&str]) -> SeededRng {
    SeededRng::seed_from_u64(derive_seed(master, tags))
}

pub fn rng(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

/// Hex SHA-256 of a string; used for prompt digests and content ids.
pub fn digest_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}
