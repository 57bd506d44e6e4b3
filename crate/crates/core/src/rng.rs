//! Seeded random streams.
//!
//! Every random quantity in a run (ground truth, measurement noise, initial
//! latent, probe points) draws from its own ChaCha stream so that changing one
//! consumer never perturbs another.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::Scalar;

/// Well-known stream identifiers.
pub mod streams {
    pub const INITIAL_LATENT: u64 = 0;
    pub const GROUND_TRUTH: u64 = 1;
    pub const MEASUREMENT_NOISE: u64 = 2;
    pub const MASK: u64 = 3;
    pub const PROBES: u64 = 4;
}

pub fn stream(seed: u64, stream_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

pub fn standard_normal<S: Scalar, R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Array1<S> {
    Array1::from_iter((0..dim).map(|_| S::lit(rng.sample::<f64, _>(StandardNormal))))
}
