//! Seeded random streams.
//!
//! Every stochastic step (initialisation, shuffling, dropout, synthetic data)
//! draws from ChaCha8, a counter-based generator whose output is identical
//! across platforms. Independent streams are derived from one seed plus a
//! stream label so that adding a consumer never shifts another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Generator for `seed` on the named stream.
pub fn stream(seed: u64, label: &str) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(label.as_bytes()));
    rng
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
