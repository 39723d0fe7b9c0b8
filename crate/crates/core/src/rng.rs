//! Named random sub-streams.
//!
//! A single experiment seed is fanned out into independent ChaCha8 streams
//! keyed by a stream name and a tuple of indices, e.g.
//! `stream(seed, "sampling", &[speaker, epoch, step])`. The derivation is a
//! fixed FNV-1a hash, so streams are identical across platforms and runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Derives the 64-bit seed of a named sub-stream.
pub fn derive_seed(seed: u64, name: &str, indices: &[u64]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a(h, name.as_bytes());
    for i in indices {
        h = fnv1a(h, &i.to_le_bytes());
    }
    h
}

pub fn stream(seed: u64, name: &str, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, name, indices))
}

/// Stable 64-bit hash of a string id (used to key per-speaker streams).
pub fn hash_id(id: &str) -> u64 {
    fnv1a(FNV_OFFSET, id.as_bytes())
}
