//! Seeded randomness.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`], which produces the
//! same sequence on every platform. Independent streams are derived from a
//! root seed and a role string: the sub-seed is the first 8 bytes
//! (little-endian) of `SHA-256(seed.to_le_bytes() || role)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type Rng = ChaCha8Rng;

/// Derives a sub-seed for `role` from `seed`.
pub fn derive_seed(seed: u64, role: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(role.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shorthand for `rng_from_seed(derive_seed(seed, role))`.
pub fn rng_for(seed: u64, role: &str) -> Rng {
    rng_from_seed(derive_seed(seed, role))
}
