//! Diffuse-field spatial coherence and its per-bin square-root factors.
//!
//! For an isotropic reverberant field the coherence between two microphones
//! a distance `d` apart is `sinc(d / c * pi * fs * k / K)`. Sampling a
//! correlated circular complex Gaussian vector needs a factor `L(k)` with
//! `L(k) L(k)^H = Gamma(k)`. At low bins `Gamma(k)` tends to the all-ones
//! matrix and is numerically rank deficient, so the factor comes from a
//! symmetric eigendecomposition with negative eigenvalues clipped to zero
//! rather than a Cholesky decomposition.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;

/// `sin(x) / x`, with the removable singularity at 0 filled in as 1.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Real symmetric coherence matrices `Gamma(k)` for bins `1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSet {
    bins: usize,
    mics: usize,
    gammas: Vec<f64>,
}

impl CoherenceSet {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_mics(&self) -> usize {
        self.mics
    }

    /// Row-major `M x M` coherence matrix at bin `k` (1-based).
    pub fn matrix(&self, k: usize) -> &[f64] {
        let mm = self.mics * self.mics;
        &self.gammas[(k - 1) * mm..k * mm]
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.matrix(k)[i * self.mics + j]
    }
}

pub fn build_coherence(geom: &ArrayGeometry) -> CoherenceSet {
    let m = geom.num_mics();
    let bins = geom.bins();
    let scale = geom.phase_per_meter_bin();
    let mut gammas = vec![0.0; bins * m * m];
    for (idx, block) in gammas.chunks_exact_mut(m * m).enumerate() {
        let k = (idx + 1) as f64;
        for i in 0..m {
            block[i * m + i] = 1.0;
            for j in (i + 1)..m {
                let g = sinc(geom.distance(i, j) * scale * k);
                block[i * m + j] = g;
                block[j * m + i] = g;
            }
        }
    }
    CoherenceSet {
        bins,
        mics: m,
        gammas,
    }
}

/// Per-bin factors `L(k)` of the PSD-projected coherence matrices.
///
/// Built once per geometry and shared read-only by every sampler.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceFactors {
    bins: usize,
    mics: usize,
    factors: Vec<f64>,
    projected: Vec<f64>,
}

impl CoherenceFactors {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_mics(&self) -> usize {
        self.mics
    }

    /// Row-major `M x M` factor at bin `k` (1-based).
    pub fn factor(&self, k: usize) -> &[f64] {
        let mm = self.mics * self.mics;
        &self.factors[(k - 1) * mm..k * mm]
    }

    /// PSD projection of the symmetrized coherence matrix at bin `k`.
    pub fn projected(&self, k: usize) -> &[f64] {
        let mm = self.mics * self.mics;
        &self.projected[(k - 1) * mm..k * mm]
    }

    /// All factors, bin-major then row-major.
    pub fn as_slice(&self) -> &[f64] {
        &self.factors
    }

    /// `L(k) L(k)^T` at bin `k`, row-major.
    pub fn gram(&self, k: usize) -> Vec<f64> {
        let m = self.mics;
        let l = self.factor(k);
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = (0..m).map(|c| l[i * m + c] * l[j * m + c]).sum();
            }
        }
        out
    }

    /// Frobenius norm of `L(k) L(k)^T - target`.
    pub fn reconstruction_error(&self, k: usize, target: &[f64]) -> f64 {
        self.gram(k)
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn from_parts(bins: usize, mics: usize, factors: Vec<f64>) -> Result<Self> {
        if factors.len() != bins * mics * mics {
            return Err(Error::Dimension(format!(
                "expected {} factor entries, got {}",
                bins * mics * mics,
                factors.len()
            )));
        }
        let mut cf = Self {
            bins,
            mics,
            projected: Vec::new(),
            factors,
        };
        let projected = (1..=bins).flat_map(|k| cf.gram(k)).collect();
        cf.projected = projected;
        Ok(cf)
    }
}

pub fn factorize(coh: &CoherenceSet) -> Result<CoherenceFactors> {
    let m = coh.mics;
    let mut factors = Vec::with_capacity(coh.gammas.len());
    let mut projected = Vec::with_capacity(coh.gammas.len());
    for k in 1..=coh.bins {
        let g = DMatrix::from_row_slice(m, m, coh.matrix(k));
        let sym = (&g + g.transpose()) * 0.5;
        let eig =
            SymmetricEigen::try_new(sym, f64::EPSILON, 0).ok_or(Error::Factorization { bin: k })?;
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization { bin: k });
        }
        let sqrt_lambda = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let mut l = eig.eigenvectors.clone();
        for (c, s) in sqrt_lambda.iter().enumerate() {
            l.column_mut(c).scale_mut(*s);
        }
        let proj = &l * l.transpose();
        for i in 0..m {
            for j in 0..m {
                factors.push(l[(i, j)]);
            }
        }
        for i in 0..m {
            for j in 0..m {
                projected.push(proj[(i, j)]);
            }
        }
    }
    Ok(CoherenceFactors {
        bins: coh.bins,
        mics: m,
        factors,
        projected,
    })
}
