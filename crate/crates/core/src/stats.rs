//! Monte Carlo checks that generated data follows its declared laws.
//!
//! Tolerances are explicit functions of the number of draws:
//!
//! * mean powers: `3 * sigma^2 / sqrt(n)`, since `|Z|^2` of a `CN(0, sigma^2)`
//!   draw has standard deviation `sigma^2`;
//! * normalized correlations and coherences: `3.3 / sqrt(n)`; under the null
//!   hypothesis `n |rho|^2` is close to a unit exponential, so the bound is
//!   exceeded with probability `exp(-10.9)`.
//!
//! Draws are split into fixed-size chunks with their own streams and reduced in
//! chunk order, so results are bit-identical whatever the thread count.

use std::fmt;

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coherence::{build_coherence, CoherenceFactors};
use crate::error::{Error, Result};
use crate::geometry::ArrayGeometry;
use crate::random::{stream, StreamDomain};
use crate::rtf::draw_reverb;
use crate::signalgen::{
    sample_components, sample_params, Generator, ScenarioDistributions, ScenarioParams,
    SignalComponents,
};

pub const CORRELATION_SIGMAS: f64 = 3.3;
pub const POWER_SIGMAS: f64 = 3.0;
pub const MIN_DRAWS: usize = 100;

const CHUNK: usize = 2048;

// stream tags, one per check
const TAG_COHERENCE: u64 = 1;
const TAG_VARIANCE: u64 = 2;
const TAG_INDEPENDENCE: u64 = 3;
const TAG_PARAMS: u64 = 4;

pub fn correlation_tolerance(n: usize) -> f64 {
    CORRELATION_SIGMAS / (n as f64).sqrt()
}

/// Source of signal components under test.
///
/// [`Generator`] is the production implementation; tests substitute broken
/// samplers to make sure the checks catch them.
pub trait ComponentSampler: Sync {
    fn geometry(&self) -> &ArrayGeometry;

    fn draw_reverb(&self, rng: &mut ChaCha8Rng, sigma_r2: f64, out: &mut [Complex64]);

    fn draw_components(
        &self,
        rng: &mut ChaCha8Rng,
        params: &ScenarioParams,
    ) -> Result<SignalComponents>;
}

impl ComponentSampler for Generator {
    fn geometry(&self) -> &ArrayGeometry {
        Generator::geometry(self)
    }

    fn draw_reverb(&self, rng: &mut ChaCha8Rng, sigma_r2: f64, out: &mut [Complex64]) {
        draw_reverb(rng, self.factors(), sigma_r2, out)
    }

    fn draw_components(
        &self,
        rng: &mut ChaCha8Rng,
        params: &ScenarioParams,
    ) -> Result<SignalComponents> {
        sample_components(rng, params, Generator::geometry(self), self.factors())
    }
}

/// Direct geometry/factors pair, for callers that do not need a full generator.
pub struct ModelSampler<'a> {
    pub geom: &'a ArrayGeometry,
    pub factors: &'a CoherenceFactors,
}

impl ComponentSampler for ModelSampler<'_> {
    fn geometry(&self) -> &ArrayGeometry {
        self.geom
    }

    fn draw_reverb(&self, rng: &mut ChaCha8Rng, sigma_r2: f64, out: &mut [Complex64]) {
        draw_reverb(rng, self.factors, sigma_r2, out)
    }

    fn draw_components(
        &self,
        rng: &mut ChaCha8Rng,
        params: &ScenarioParams,
    ) -> Result<SignalComponents> {
        sample_components(rng, params, self.geom, self.factors)
    }
}

/// One verdict: `|estimate - target| <= tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub target: f64,
    pub estimate: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckResult {
    pub fn new(check: impl Into<String>, target: f64, estimate: f64, tolerance: f64) -> Self {
        let pass = (estimate - target).abs() <= tolerance;
        Self {
            check: check.into(),
            target,
            estimate,
            tolerance,
            pass,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:<40} target {:>12.6e}  estimate {:>12.6e}  tol {:.3e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.check,
            self.target,
            self.estimate,
            self.tolerance
        )
    }
}

/// Sample coherence and normalized pseudo-variance of the reverberant part.
#[derive(Debug, Clone)]
pub struct CoherenceEstimate {
    bins: usize,
    mics: usize,
    coherence: Vec<Complex64>,
    pseudo: Vec<Complex64>,
    pub n_draws: usize,
}

impl CoherenceEstimate {
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_mics(&self) -> usize {
        self.mics
    }

    /// Sample coherence between mics `i` and `j` at bin `k` (1-based).
    pub fn get(&self, k: usize, i: usize, j: usize) -> Complex64 {
        self.coherence[((k - 1) * self.mics + i) * self.mics + j]
    }

    /// `mean(H^2) / mean(|H|^2)` at bin `k`, mic `i`.
    pub fn pseudo_variance(&self, k: usize, i: usize) -> Complex64 {
        self.pseudo[(k - 1) * self.mics + i]
    }
}

fn chunks(n: usize) -> Vec<(u64, usize)> {
    (0..n.div_ceil(CHUNK))
        .map(|c| (c as u64, CHUNK.min(n - c * CHUNK)))
        .collect()
}

fn check_draws(n: usize) -> Result<()> {
    if n < MIN_DRAWS {
        return Err(Error::Config(format!(
            "need at least {MIN_DRAWS} draws, got {n}"
        )));
    }
    Ok(())
}

/// Estimates the spatial coherence of `n_draws` independent reverberant parts.
pub fn estimate_coherence<S: ComponentSampler + ?Sized>(
    sampler: &S,
    seed: u64,
    n_draws: usize,
) -> Result<CoherenceEstimate> {
    check_draws(n_draws)?;
    let geom = sampler.geometry();
    let (bins, m) = (geom.bins(), geom.num_mics());

    struct Acc {
        cross: Vec<Complex64>,
        pseudo: Vec<Complex64>,
    }

    let partial: Vec<Acc> = chunks(n_draws)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = stream(seed, TAG_COHERENCE, c, StreamDomain::Validation);
            let mut h = vec![Complex64::default(); bins * m];
            let mut acc = Acc {
                cross: vec![Complex64::default(); bins * m * m],
                pseudo: vec![Complex64::default(); bins * m],
            };
            for _ in 0..len {
                sampler.draw_reverb(&mut rng, 1.0, &mut h);
                for (kb, row) in h.chunks_exact(m).enumerate() {
                    let cross = &mut acc.cross[kb * m * m..(kb + 1) * m * m];
                    for i in 0..m {
                        acc.pseudo[kb * m + i] += row[i] * row[i];
                        for j in i..m {
                            cross[i * m + j] += row[i] * row[j].conj();
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut cross = vec![Complex64::default(); bins * m * m];
    let mut pseudo = vec![Complex64::default(); bins * m];
    for acc in &partial {
        cross.iter_mut().zip(&acc.cross).for_each(|(a, b)| *a += b);
        pseudo
            .iter_mut()
            .zip(&acc.pseudo)
            .for_each(|(a, b)| *a += b);
    }

    let mut coherence = vec![Complex64::default(); bins * m * m];
    for kb in 0..bins {
        let block = &cross[kb * m * m..(kb + 1) * m * m];
        let power: Vec<f64> = (0..m).map(|i| block[i * m + i].re).collect();
        for i in 0..m {
            pseudo[kb * m + i] /= power[i];
            coherence[(kb * m + i) * m + i] = Complex64::new(1.0, 0.0);
            for j in (i + 1)..m {
                let g = block[i * m + j] / (power[i] * power[j]).sqrt();
                coherence[(kb * m + i) * m + j] = g;
                coherence[(kb * m + j) * m + i] = g.conj();
            }
        }
    }
    Ok(CoherenceEstimate {
        bins,
        mics: m,
        coherence,
        pseudo,
        n_draws,
    })
}

/// Compares sample coherence against the sinc law at the given bins, all pairs.
pub fn check_coherence(
    est: &CoherenceEstimate,
    geom: &ArrayGeometry,
    bins: &[usize],
) -> Vec<CheckResult> {
    let target = build_coherence(geom);
    let tol = correlation_tolerance(est.n_draws);
    let m = est.mics;
    let mut out = Vec::new();
    for &k in bins {
        for i in 0..m {
            for j in (i + 1)..m {
                let g = est.get(k, i, j);
                out.push(CheckResult::new(
                    format!("coherence k={k} ({i},{j}) re"),
                    target.get(k, i, j),
                    g.re,
                    tol,
                ));
                out.push(CheckResult::new(
                    format!("coherence k={k} ({i},{j}) im"),
                    0.0,
                    g.im,
                    tol,
                ));
            }
        }
    }
    out
}

/// Pseudo-variance of the reverberant part, every mic, at the given bins.
pub fn check_circular_symmetry(est: &CoherenceEstimate, bins: &[usize]) -> Vec<CheckResult> {
    let tol = correlation_tolerance(est.n_draws);
    let mut out = Vec::new();
    for &k in bins {
        for i in 0..est.mics {
            let p = est.pseudo_variance(k, i).norm();
            out.push(CheckResult::new(
                format!("pseudo-variance h_rev k={k} mic {i}"),
                0.0,
                p,
                tol,
            ));
        }
    }
    out
}

/// Mean powers of source, noise and reverberation against `1`, `sigma_n2`
/// and `sigma_r2`.
///
/// `n` is the number of scalar observations per quantity. Bins are independent
/// by construction, so `ceil(n / K)` samples are drawn and pooled over bins.
/// Noise is also pooled over microphones. Reverberation is pooled over
/// microphones too but, since microphones are correlated, its tolerance
/// uses only the per-microphone count.
pub fn check_variances<S: ComponentSampler + ?Sized>(
    sampler: &S,
    params: &ScenarioParams,
    seed: u64,
    n: usize,
    label: &str,
) -> Result<Vec<CheckResult>> {
    check_draws(n)?;
    let geom = sampler.geometry();
    let (bins, m) = (geom.bins(), geom.num_mics());
    let samples = n.div_ceil(bins);
    let salt = params.sigma_r2.to_bits() ^ params.sigma_n2.to_bits().rotate_left(17);

    let partial: Vec<Result<[f64; 3]>> = chunks(samples)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = stream(seed ^ salt, TAG_VARIANCE, c, StreamDomain::Validation);
            let mut acc = [0.0; 3];
            for _ in 0..len {
                let s = sampler.draw_components(&mut rng, params)?;
                acc[0] += s.source.iter().map(|x| x.norm_sqr()).sum::<f64>();
                acc[1] += s.noise.as_slice().iter().map(|x| x.norm_sqr()).sum::<f64>();
                acc[2] += s.h_rev.as_slice().iter().map(|x| x.norm_sqr()).sum::<f64>();
            }
            Ok(acc)
        })
        .collect();
    let mut sums = [0.0; 3];
    for p in partial {
        let p = p?;
        sums.iter_mut().zip(p).for_each(|(s, v)| *s += v);
    }

    let per_mic = (samples * bins) as f64;
    let pooled = per_mic * m as f64;
    let tol = |var: f64, count: f64| POWER_SIGMAS * var / count.sqrt();
    Ok(vec![
        CheckResult::new(
            format!("E|X|^2 {label}"),
            1.0,
            sums[0] / per_mic,
            tol(1.0, per_mic),
        ),
        CheckResult::new(
            format!("E|N|^2 {label}"),
            params.sigma_n2,
            sums[1] / pooled,
            tol(params.sigma_n2, pooled),
        ),
        CheckResult::new(
            format!("E|H_rev|^2 {label}"),
            params.sigma_r2,
            sums[2] / pooled,
            tol(params.sigma_r2, per_mic),
        ),
    ])
}

/// Default bin pairs `(1, 2)`, `(1, K/2)`, `(K/2 - 1, K/2)`, clamped for small `K`.
pub fn default_bin_pairs(bins: usize) -> Vec<(usize, usize)> {
    let half = (bins / 2).max(2).min(bins);
    let mut pairs = vec![
        (1, 2.min(bins)),
        (1, half),
        (half.saturating_sub(1).max(1), half),
    ];
    pairs.retain(|(a, b)| a != b);
    pairs.dedup();
    pairs
}

/// Cross-bin correlation of source, noise (mic 0) and reverberation (mic 0),
/// plus the pseudo-variance of source and noise at bin 1.
pub fn check_bin_independence<S: ComponentSampler + ?Sized>(
    sampler: &S,
    params: &ScenarioParams,
    seed: u64,
    n: usize,
    pairs: &[(usize, usize)],
) -> Result<Vec<CheckResult>> {
    check_draws(n)?;
    let bins = sampler.geometry().bins();
    if let Some(&(a, b)) = pairs
        .iter()
        .find(|(a, b)| *a == 0 || *b == 0 || *a > bins || *b > bins)
    {
        return Err(Error::Index {
            what: "bin",
            value: a.max(b),
            lo: 1,
            hi: bins,
        });
    }

    #[derive(Clone)]
    struct Series {
        cross: Vec<Complex64>,
        power: Vec<f64>,
        pseudo: Complex64,
    }
    let empty = Series {
        cross: vec![Complex64::default(); pairs.len()],
        power: vec![0.0; bins],
        pseudo: Complex64::default(),
    };

    let partial: Vec<Result<Vec<Series>>> = chunks(n)
        .into_par_iter()
        .map(|(c, len)| {
            let mut rng = stream(seed, TAG_INDEPENDENCE, c, StreamDomain::Validation);
            let mut acc = vec![empty.clone(); 3];
            for _ in 0..len {
                let s = sampler.draw_components(&mut rng, params)?;
                let series = [
                    |k: usize, s: &SignalComponents| s.source[k - 1],
                    |k: usize, s: &SignalComponents| s.noise[(k, 0)],
                    |k: usize, s: &SignalComponents| s.h_rev[(k, 0)],
                ];
                for (a, get) in acc.iter_mut().zip(series) {
                    for (p, &(k1, k2)) in pairs.iter().enumerate() {
                        a.cross[p] += get(k1, &s) * get(k2, &s).conj();
                    }
                    for k in 1..=bins {
                        a.power[k - 1] += get(k, &s).norm_sqr();
                    }
                    let v = get(1, &s);
                    a.pseudo += v * v;
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = vec![empty; 3];
    for p in partial {
        for (t, a) in total.iter_mut().zip(p?) {
            t.cross.iter_mut().zip(&a.cross).for_each(|(x, y)| *x += y);
            t.power.iter_mut().zip(&a.power).for_each(|(x, y)| *x += y);
            t.pseudo += a.pseudo;
        }
    }

    let tol = correlation_tolerance(n);
    let mut out = Vec::new();
    for (name, t) in ["x", "n", "h_rev"].iter().zip(&total) {
        for (p, &(k1, k2)) in pairs.iter().enumerate() {
            let rho = t.cross[p] / (t.power[k1 - 1] * t.power[k2 - 1]).sqrt();
            out.push(CheckResult::new(
                format!("bin correlation {name} ({k1},{k2})"),
                0.0,
                rho.norm(),
                tol,
            ));
        }
        if *name != "h_rev" {
            let pseudo = t.pseudo.norm() / t.power[0];
            out.push(CheckResult::new(
                format!("pseudo-variance {name} k=1"),
                0.0,
                pseudo,
                tol,
            ));
        }
    }
    Ok(out)
}

/// Parameters of the full validation suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub n_draws: usize,
    /// Number of random scenario draws for the power checks.
    pub variance_scenarios: usize,
    pub coherence_bins: Vec<usize>,
    pub pseudo_bins: Vec<usize>,
}

impl SuiteConfig {
    pub fn for_bins(seed: u64, n_draws: usize, bins: usize) -> Self {
        let mut coherence_bins = vec![1, bins / 4, bins / 2, bins];
        coherence_bins.retain(|&k| k >= 1);
        coherence_bins.dedup();
        let mut pseudo_bins = vec![1, bins / 2, bins];
        pseudo_bins.retain(|&k| k >= 1);
        pseudo_bins.dedup();
        Self {
            seed,
            n_draws,
            variance_scenarios: 5,
            coherence_bins,
            pseudo_bins,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Runs every check. Independence checks use 0 dB DRR and 30 dB SNR.
pub fn run_suite<S: ComponentSampler + ?Sized>(
    sampler: &S,
    dists: &ScenarioDistributions,
    config: &SuiteConfig,
) -> Result<SuiteReport> {
    let geom = sampler.geometry();
    let mut checks = Vec::new();

    let est = estimate_coherence(sampler, config.seed, config.n_draws)?;
    checks.extend(check_coherence(&est, geom, &config.coherence_bins));
    checks.extend(check_circular_symmetry(&est, &config.pseudo_bins));

    for s in 0..config.variance_scenarios {
        let params = sample_params(
            &mut stream(config.seed, TAG_PARAMS, s as u64, StreamDomain::Validation),
            dists,
        );
        let label = format!(
            "(scenario {s}: snr {:.2} dB, drr {:.2} dB)",
            params.snr_db, params.drr_db
        );
        checks.extend(check_variances(
            sampler,
            &params,
            config.seed,
            config.n_draws,
            &label,
        )?);
    }

    let params = ScenarioParams::new(dists.theta_classes[0], 0, dists.r_range[0], 30.0, 0.0);
    checks.extend(check_bin_independence(
        sampler,
        &params,
        config.seed,
        config.n_draws,
        &default_bin_pairs(geom.bins()),
    )?);
    Ok(SuiteReport { checks })
}
