//! Seeded random streams. Every stochastic component draws from its own
//! ChaCha stream so that runs are reproducible regardless of call order elsewhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type StdRng = ChaCha8Rng;

/// Independent stream `stream` of generator `seed`.
pub fn stream(seed: u64, stream: u64) -> StdRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Well-known stream identifiers.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const PERMUTE: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const PREDICTOR: u64 = 6;
    pub const DISCRIMINATOR: u64 = 7;
    pub const SUBSAMPLE: u64 = 8;
}
