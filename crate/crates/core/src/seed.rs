//! Sub-seed derivation.
//!
//! One top-level `u64` seed fans out to every sampling step: the sub-seed for
//! a purpose label is the first eight bytes (little endian) of
//! `sha256(seed.to_le_bytes() ‖ label)`.

use sha2::{Digest, Sha256};

pub fn derive_seed(seed: u64, purpose: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut first = [0u8; 8];
    first.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(first)
}
