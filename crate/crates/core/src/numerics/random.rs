//! Seeded sampling. Every trial owns a ChaCha8 stream selected by
//! `(seed, stream)`, so results do not depend on thread scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Inverse-CDF exponential draw, `-ln(1 - u) / rate` with `u ∈ [0, 1)`.
pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> Result<f64> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::param(format!("exponential rate {rate} must be positive")));
    }
    let u: f64 = rng.random();
    Ok(-(-u).ln_1p() / rate)
}

pub fn sample_bernoulli<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<bool> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::param(format!("Bernoulli probability {p} outside [0, 1]")));
    }
    let u: f64 = rng.random();
    Ok(u < p)
}

/// Uniform index in `0..n`.
pub fn sample_uniform_node<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Result<usize> {
    if n == 0 {
        return Err(Error::param("cannot draw a node from an empty network"));
    }
    Ok(rng.random_range(0..n))
}
