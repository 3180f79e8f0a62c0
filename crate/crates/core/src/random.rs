//! Random stream derivation and complex Gaussian draws.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, batch, index, domain)`,
//! so any sample can be regenerated on its own, in any order, on any thread.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent purposes get disjoint key spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamDomain {
    Params = 0x5041_5241_4d53_0001,
    Signal = 0x5349_474e_414c_0002,
    Validation = 0x5641_4c49_4400_0003,
}

pub fn stream(seed: u64, batch: u64, index: u64, domain: StreamDomain) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&batch.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    key[24..32].copy_from_slice(&(domain as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Circular complex Gaussian with unit variance: real and imaginary parts
/// independent, each of variance 1/2.
#[inline]
pub fn standard_complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Circular complex Gaussian `CN(0, variance)`.
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    standard_complex_normal(rng) * variance.sqrt()
}
