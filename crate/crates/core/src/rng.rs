//! Seeded random streams. Every stochastic step draws from a [`KgRng`]
//! derived from one user seed, so runs are reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type KgRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> KgRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn derive_rng(seed: u64, stream: u64) -> KgRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream ids reserved for specific consumers.
pub mod streams {
    pub const TRAINING: u64 = 0;
    pub const PARAMETER_INIT: u64 = 1;
    pub const SPLIT_ASSIGNMENT: u64 = 2;
    pub const SNAPSHOT_SAMPLING: u64 = 3;
    pub const CLASSIFICATION: u64 = 4;
    /// Base for per-snapshot streams; snapshot `i` uses `PER_SNAPSHOT + i`.
    pub const PER_SNAPSHOT: u64 = 1 << 16;
}
