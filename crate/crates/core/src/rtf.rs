//! Room transfer function realizations: unit-modulus direct path plus a
//! spatially correlated, circular complex Gaussian reverberant part.

use num_complex::Complex64;
use rand::Rng;

use crate::coherence::CoherenceFactors;
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, SourcePosition};
use crate::matrix::BinMatrix;
use crate::random::standard_complex_normal;

/// One `K x M` draw of `H_i(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RtfRealization {
    pub h: BinMatrix<Complex64>,
}

pub(crate) fn check_dimensions(factors: &CoherenceFactors, geom: &ArrayGeometry) -> Result<()> {
    if factors.bins() != geom.bins() || factors.num_mics() != geom.num_mics() {
        return Err(Error::Dimension(format!(
            "factors are {} bins x {} mics, geometry is {} bins x {} mics",
            factors.bins(),
            factors.num_mics(),
            geom.bins(),
            geom.num_mics()
        )));
    }
    Ok(())
}

/// Writes `e^{-j phi_i(k)}` for every bin and microphone into `out` (`K x M`).
pub fn direct_path(geom: &ArrayGeometry, source: &SourcePosition, out: &mut [Complex64]) {
    let m = geom.num_mics();
    debug_assert_eq!(out.len(), geom.bins() * m);
    let scale = geom.phase_per_meter_bin();
    let omega: Vec<f64> = (0..m)
        .map(|i| geom.mic_source_distance(i, source) * scale)
        .collect();
    for (row, k) in out.chunks_exact_mut(m).zip(1..) {
        for (h, w) in row.iter_mut().zip(&omega) {
            let (s, c) = (w * k as f64).sin_cos();
            *h = Complex64::new(c, -s);
        }
    }
}

/// Draws the reverberant part `sqrt(sigma_r2) * L(k) z(k)` for every bin into
/// `out` (`K x M`), with `z(k)` a vector of independent `CN(0, 1)` entries.
///
/// Draw order is bin-major, mic-minor.
pub fn draw_reverb<R: Rng + ?Sized>(
    rng: &mut R,
    factors: &CoherenceFactors,
    sigma_r2: f64,
    out: &mut [Complex64],
) {
    let m = factors.num_mics();
    debug_assert_eq!(out.len(), factors.bins() * m);
    let gain = sigma_r2.sqrt();
    let mut z = vec![Complex64::default(); m];
    for (row, l) in out
        .chunks_exact_mut(m)
        .zip(factors.as_slice().chunks_exact(m * m))
    {
        for zi in z.iter_mut() {
            *zi = standard_complex_normal(rng);
        }
        for (i, h) in row.iter_mut().enumerate() {
            let li = &l[i * m..(i + 1) * m];
            let acc = li
                .iter()
                .zip(&z)
                .fold(Complex64::default(), |acc, (a, b)| acc + b * *a);
            *h = acc * gain;
        }
    }
}

/// Generates one RTF realization `H = H_dir + H_rev`.
pub fn gen_rtf<R: Rng + ?Sized>(
    rng: &mut R,
    factors: &CoherenceFactors,
    sigma_r2: f64,
    geom: &ArrayGeometry,
    source: &SourcePosition,
) -> Result<RtfRealization> {
    check_dimensions(factors, geom)?;
    if !(sigma_r2.is_finite() && sigma_r2 >= 0.0) {
        return Err(Error::Domain(format!(
            "reverberation variance must be >= 0, got {sigma_r2}"
        )));
    }
    let (bins, m) = (geom.bins(), geom.num_mics());
    let mut h = BinMatrix::zeros(bins, m);
    draw_reverb(rng, factors, sigma_r2, h.as_mut_slice());
    let mut dir = vec![Complex64::default(); bins * m];
    direct_path(geom, source, &mut dir);
    for (a, b) in h.as_mut_slice().iter_mut().zip(&dir) {
        *a += b;
    }
    Ok(RtfRealization { h })
}
