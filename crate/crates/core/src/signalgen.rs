//! Scenario parameter sampling and microphone signal synthesis.
//!
//! A sample is `Y_i(k) = X(k) H_i(k) + N_i(k)` with a unit-variance source
//! `X`, sensor noise `N_i` of variance `sigma_n2`, and an RTF `H` from
//! [`crate::rtf`]. Everything is drawn independently per bin.

use std::f64::consts::LN_10;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coherence::{build_coherence, factorize, CoherenceFactors};
use crate::error::{Error, Result};
use crate::geometry::{source_position, ArrayGeometry, GeometrySpec};
use crate::io::{fnv1a64, DatasetBatch, Provenance};
use crate::matrix::BinMatrix;
use crate::phasemap::{phase_to_f32, principal_phase};
use crate::random::{complex_normal, standard_complex_normal, stream, StreamDomain};
use crate::rtf::{check_dimensions, direct_path, draw_reverb};

/// `10^(-db / 10)`, accurate to within one ulp of the exact value.
///
/// `db / 10` is split into a rounded quotient and its exact remainder so the
/// rounding of the quotient does not get amplified by the exponential.
pub fn db_to_variance(db: f64) -> f64 {
    let q = db / 10.0;
    let rem = q.mul_add(-10.0, db) / 10.0;
    let p = 10f64.powf(-q);
    p.mul_add(-LN_10 * rem, p)
}

/// Evenly spaced class angles `start, start + step, ..., end` in degrees.
pub fn class_grid(start: f64, step: f64, end: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || end < start {
        return Err(Error::Config(format!(
            "bad class grid {start} {step} {end}"
        )));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| start + step * i as f64).collect())
}

/// Source and noise laws. Only the circular Gaussian is implemented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalLaw {
    #[default]
    Gaussian,
}

/// Ranges and classes the scenario parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDistributions {
    pub theta_classes: Vec<f64>,
    pub r_range: [f64; 2],
    pub snr_range_db: [f64; 2],
    pub drr_range_db: [f64; 2],
}

impl Default for ScenarioDistributions {
    /// Training-set defaults: 37 classes from 0 to 180 degrees, r in [1, 3] m,
    /// SNR in [0, 30] dB, DRR in [-9, 0] dB.
    fn default() -> Self {
        Self {
            theta_classes: class_grid(0.0, 5.0, 180.0).expect("valid default grid"),
            r_range: [1.0, 3.0],
            snr_range_db: [0.0, 30.0],
            drr_range_db: [-9.0, 0.0],
        }
    }
}

impl ScenarioDistributions {
    pub fn validate(&self) -> Result<()> {
        if self.theta_classes.is_empty() {
            return Err(Error::Config("theta_classes must not be empty".into()));
        }
        if self.theta_classes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "theta_classes must be strictly increasing".into(),
            ));
        }
        if self
            .theta_classes
            .iter()
            .any(|t| !(0.0..=180.0).contains(t))
        {
            return Err(Error::Config(
                "theta_classes must lie within [0, 180]".into(),
            ));
        }
        for (name, [lo, hi]) in [
            ("r", self.r_range),
            ("snr", self.snr_range_db),
            ("drr", self.drr_range_db),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!(
                    "{name} range [{lo}, {hi}] is invalid"
                )));
            }
        }
        if self.r_range[0] <= 0.0 {
            return Err(Error::Config("r range must be strictly positive".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.theta_classes.len()
    }
}

/// One draw of the scenario parameters plus the derived variances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub theta: f64,
    pub class_index: usize,
    pub r: f64,
    pub snr_db: f64,
    pub drr_db: f64,
    pub sigma_r2: f64,
    pub sigma_n2: f64,
}

impl ScenarioParams {
    pub fn new(theta: f64, class_index: usize, r: f64, snr_db: f64, drr_db: f64) -> Self {
        Self {
            theta,
            class_index,
            r,
            snr_db,
            drr_db,
            sigma_r2: db_to_variance(drr_db),
            sigma_n2: db_to_variance(snr_db),
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws class, distance, SNR and DRR independently (in that order).
pub fn sample_params<R: Rng + ?Sized>(
    rng: &mut R,
    dists: &ScenarioDistributions,
) -> ScenarioParams {
    let class_index = rng.random_range(0..dists.theta_classes.len());
    let r = uniform(rng, dists.r_range);
    let snr_db = uniform(rng, dists.snr_range_db);
    let drr_db = uniform(rng, dists.drr_range_db);
    ScenarioParams::new(
        dists.theta_classes[class_index],
        class_index,
        r,
        snr_db,
        drr_db,
    )
}

/// `K x M` microphone spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct MicSignals {
    pub y: BinMatrix<Complex64>,
}

/// Every intermediate of one sample, for validation.
#[derive(Debug, Clone)]
pub struct SignalComponents {
    pub source: Vec<Complex64>,
    pub noise: BinMatrix<Complex64>,
    pub h_dir: BinMatrix<Complex64>,
    pub h_rev: BinMatrix<Complex64>,
    pub y: BinMatrix<Complex64>,
}

/// Draws every random component of one sample.
///
/// Stream consumption order: reverberation (bin-major), source, noise
/// (bin-major). [`gen_sample`] follows the same order, so both produce the same
/// `y` for the same stream.
pub fn sample_components<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ScenarioParams,
    geom: &ArrayGeometry,
    factors: &CoherenceFactors,
) -> Result<SignalComponents> {
    check_dimensions(factors, geom)?;
    let source_pos = source_position(params.theta, params.r)?;
    let (bins, m) = (geom.bins(), geom.num_mics());

    let mut h_rev = BinMatrix::zeros(bins, m);
    draw_reverb(rng, factors, params.sigma_r2, h_rev.as_mut_slice());
    let mut h_dir = BinMatrix::zeros(bins, m);
    direct_path(geom, &source_pos, h_dir.as_mut_slice());
    let source: Vec<Complex64> = (0..bins).map(|_| standard_complex_normal(rng)).collect();
    let mut noise = BinMatrix::zeros(bins, m);
    for n in noise.as_mut_slice() {
        *n = complex_normal(rng, params.sigma_n2);
    }

    let mut y = BinMatrix::zeros(bins, m);
    for k in 1..=bins {
        let x = source[k - 1];
        for i in 0..m {
            y[(k, i)] = x * (h_dir[(k, i)] + h_rev[(k, i)]) + noise[(k, i)];
        }
    }
    Ok(SignalComponents {
        source,
        noise,
        h_dir,
        h_rev,
        y,
    })
}

/// Scratch buffers reused across samples on one worker.
#[derive(Debug, Default)]
struct Scratch {
    h: Vec<Complex64>,
    dir: Vec<Complex64>,
}

fn synthesize_into<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ScenarioParams,
    geom: &ArrayGeometry,
    factors: &CoherenceFactors,
    scratch: &mut Scratch,
    y: &mut [Complex64],
) -> Result<()> {
    let source_pos = source_position(params.theta, params.r)?;
    let (bins, m) = (geom.bins(), geom.num_mics());
    scratch.h.resize(bins * m, Complex64::default());
    scratch.dir.resize(bins * m, Complex64::default());

    draw_reverb(rng, factors, params.sigma_r2, &mut scratch.h);
    direct_path(geom, &source_pos, &mut scratch.dir);
    // source draws go into y's first column as a temporary
    for row in y.chunks_exact_mut(m) {
        row[0] = standard_complex_normal(rng);
    }
    let noise_std = params.sigma_n2.sqrt();
    for ((row, h), d) in y
        .chunks_exact_mut(m)
        .zip(scratch.h.chunks_exact(m))
        .zip(scratch.dir.chunks_exact(m))
    {
        let x = row[0];
        for i in 0..m {
            row[i] = x * (h[i] + d[i]) + standard_complex_normal(rng) * noise_std;
        }
    }
    Ok(())
}

/// Generates the microphone spectra of one sample.
pub fn gen_sample<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ScenarioParams,
    geom: &ArrayGeometry,
    factors: &CoherenceFactors,
) -> Result<MicSignals> {
    check_dimensions(factors, geom)?;
    let mut y = BinMatrix::zeros(geom.bins(), geom.num_mics());
    synthesize_into(
        rng,
        params,
        geom,
        factors,
        &mut Scratch::default(),
        y.as_mut_slice(),
    )?;
    Ok(MicSignals { y })
}

/// Everything that determines the generated data, apart from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub geometry: GeometrySpec,
    pub distributions: ScenarioDistributions,
    /// Consecutive samples within a batch that share one parameter draw.
    pub frames_per_scenario: usize,
    pub signal_law: SignalLaw,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            geometry: ArrayGeometry::default().to_spec(),
            distributions: ScenarioDistributions::default(),
            frames_per_scenario: 1,
            signal_law: SignalLaw::Gaussian,
        }
    }
}

impl GeneratorConfig {
    /// FNV-1a over the compact JSON serialization.
    pub fn hash(&self) -> u64 {
        fnv1a64(&serde_json::to_vec(self).expect("config serializes"))
    }
}

/// Geometry, factors and distributions bundled for batch generation.
#[derive(Debug, Clone)]
pub struct Generator {
    config: GeneratorConfig,
    geom: ArrayGeometry,
    factors: CoherenceFactors,
    config_hash: u64,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        let geom = ArrayGeometry::from_spec(&config.geometry)?;
        let factors = factorize(&build_coherence(&geom))?;
        Self::with_factors(config, geom, factors)
    }

    pub fn with_factors(
        config: GeneratorConfig,
        geom: ArrayGeometry,
        factors: CoherenceFactors,
    ) -> Result<Self> {
        config.distributions.validate()?;
        if config.frames_per_scenario == 0 {
            return Err(Error::Config("frames_per_scenario must be >= 1".into()));
        }
        check_dimensions(&factors, &geom)?;
        let config_hash = config.hash();
        Ok(Self {
            config,
            geom,
            factors,
            config_hash,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geom
    }

    pub fn factors(&self) -> &CoherenceFactors {
        &self.factors
    }

    pub fn distributions(&self) -> &ScenarioDistributions {
        &self.config.distributions
    }

    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    /// Parameters of sample `index` in batch `batch_index`.
    pub fn params_for(&self, master_seed: u64, batch_index: u64, index: usize) -> ScenarioParams {
        let group = (index / self.config.frames_per_scenario) as u64;
        let mut rng = stream(master_seed, batch_index, group, StreamDomain::Params);
        sample_params(&mut rng, &self.config.distributions)
    }

    /// Microphone spectra of sample `index` in batch `batch_index`.
    pub fn signals_for(
        &self,
        master_seed: u64,
        batch_index: u64,
        index: usize,
    ) -> Result<(ScenarioParams, MicSignals)> {
        let params = self.params_for(master_seed, batch_index, index);
        let mut rng = stream(master_seed, batch_index, index as u64, StreamDomain::Signal);
        let y = gen_sample(&mut rng, &params, &self.geom, &self.factors)?;
        Ok((params, y))
    }

    /// Generates batch `batch_index` of `batch_size` samples.
    ///
    /// Samples are produced in parallel on the current rayon pool; the result
    /// depends only on `(master_seed, batch_index, config)`.
    pub fn gen_batch(
        &self,
        master_seed: u64,
        batch_index: u64,
        batch_size: usize,
    ) -> Result<DatasetBatch> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let (bins, m) = (self.geom.bins(), self.geom.num_mics());
        let per_sample = bins * m;
        let mut phases = vec![0f32; batch_size * per_sample];
        let params: Vec<ScenarioParams> = (0..batch_size)
            .map(|b| self.params_for(master_seed, batch_index, b))
            .collect();

        phases
            .par_chunks_mut(per_sample)
            .enumerate()
            .try_for_each_init(
                || (Scratch::default(), vec![Complex64::default(); per_sample]),
                |(scratch, y), (b, out)| {
                    let mut rng = stream(master_seed, batch_index, b as u64, StreamDomain::Signal);
                    synthesize_into(&mut rng, &params[b], &self.geom, &self.factors, scratch, y)?;
                    for (o, v) in out.iter_mut().zip(y.iter()) {
                        *o = phase_to_f32(principal_phase(*v));
                    }
                    Ok::<(), Error>(())
                },
            )?;

        Ok(DatasetBatch {
            batch_size,
            bins,
            mics: m,
            classes: self.config.distributions.num_classes(),
            phases,
            labels: params.iter().map(|p| p.class_index as i32).collect(),
            params,
            provenance: Provenance {
                master_seed,
                batch_index,
                config_hash: self.config_hash,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::direct_phase;
    use crate::phasemap::{extract_phase, wrap};

    #[test]
    fn variance_mapping_examples() {
        assert_eq!(db_to_variance(0.0), 1.0);
        assert_eq!(db_to_variance(30.0), 0.001);
        assert_eq!(db_to_variance(-10.0), 10.0);
        assert_eq!(db_to_variance(10.0), 0.1);
        let p = ScenarioParams::new(90.0, 18, 2.0, 30.0, 0.0);
        assert_eq!(p.sigma_r2, 1.0);
        assert_eq!(p.sigma_n2, 0.001);
    }

    #[test]
    fn default_distributions_match_training_set() {
        let d = ScenarioDistributions::default();
        assert_eq!(d.num_classes(), 37);
        assert_eq!(d.theta_classes[0], 0.0);
        assert_eq!(d.theta_classes[36], 180.0);
        assert_eq!(d.r_range, [1.0, 3.0]);
        assert_eq!(d.snr_range_db, [0.0, 30.0]);
        assert_eq!(d.drr_range_db, [-9.0, 0.0]);
        d.validate().unwrap();
    }

    #[test]
    fn distribution_validation() {
        let mut d = ScenarioDistributions::default();
        d.r_range = [3.0, 1.0];
        assert!(d.validate().is_err());
        let mut d = ScenarioDistributions::default();
        d.theta_classes = vec![10.0, 5.0];
        assert!(d.validate().is_err());
        let mut d = ScenarioDistributions::default();
        d.theta_classes = vec![];
        assert!(d.validate().is_err());
        let mut d = ScenarioDistributions::default();
        d.theta_classes = vec![0.0, 190.0];
        assert!(d.validate().is_err());
        let mut d = ScenarioDistributions::default();
        d.snr_range_db = [5.0, 5.0];
        assert!(d.validate().is_ok());
    }

    #[test]
    fn params_are_deterministic_and_in_range() {
        let d = ScenarioDistributions::default();
        let a = sample_params(&mut stream(3, 0, 0, StreamDomain::Params), &d);
        let b = sample_params(&mut stream(3, 0, 0, StreamDomain::Params), &d);
        assert_eq!(a, b);
        let mut rng = stream(4, 0, 0, StreamDomain::Params);
        for _ in 0..10_000 {
            let p = sample_params(&mut rng, &d);
            assert!((1.0..=3.0).contains(&p.r));
            assert!((0.0..=30.0).contains(&p.snr_db));
            assert!((-9.0..=0.0).contains(&p.drr_db));
            assert_eq!(d.theta_classes[p.class_index], p.theta);
            assert_eq!(p.sigma_r2, db_to_variance(p.drr_db));
            assert_eq!(p.sigma_n2, db_to_variance(p.snr_db));
        }
    }

    #[test]
    fn parameters_are_uncorrelated() {
        let d = ScenarioDistributions::default();
        let mut rng = stream(11, 0, 0, StreamDomain::Params);
        let n = 50_000;
        let draws: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                let p = sample_params(&mut rng, &d);
                [p.r, p.snr_db, p.drr_db]
            })
            .collect();
        let corr = |a: usize, b: usize| {
            let nf = n as f64;
            let ma = draws.iter().map(|d| d[a]).sum::<f64>() / nf;
            let mb = draws.iter().map(|d| d[b]).sum::<f64>() / nf;
            let cov: f64 = draws.iter().map(|d| (d[a] - ma) * (d[b] - mb)).sum();
            let va: f64 = draws.iter().map(|d| (d[a] - ma).powi(2)).sum();
            let vb: f64 = draws.iter().map(|d| (d[b] - mb).powi(2)).sum();
            cov / (va * vb).sqrt()
        };
        let tol = 3.3 / (n as f64).sqrt();
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!(corr(a, b).abs() <= tol, "pair ({a}, {b}) correlated");
        }
    }

    #[test]
    fn gen_sample_matches_components() {
        let g = ArrayGeometry::default();
        let f = factorize(&build_coherence(&g)).unwrap();
        let p = ScenarioParams::new(40.0, 8, 1.7, 12.0, -4.0);
        let y = gen_sample(&mut stream(8, 1, 2, StreamDomain::Signal), &p, &g, &f).unwrap();
        let c = sample_components(&mut stream(8, 1, 2, StreamDomain::Signal), &p, &g, &f).unwrap();
        for (a, b) in y.y.as_slice().iter().zip(c.y.as_slice()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn clean_sample_keeps_source_magnitude_and_direct_phase_differences() {
        let g = ArrayGeometry::default();
        let f = factorize(&build_coherence(&g)).unwrap();
        let mut p = ScenarioParams::new(65.0, 13, 2.4, 0.0, 0.0);
        p.sigma_n2 = 0.0;
        p.sigma_r2 = 0.0;
        let c = sample_components(&mut stream(1, 0, 0, StreamDomain::Signal), &p, &g, &f).unwrap();
        let s = source_position(65.0, 2.4).unwrap();
        let phi = extract_phase(&MicSignals { y: c.y.clone() });
        for k in 1..=g.bins() {
            for i in 0..4 {
                assert!((c.y[(k, i)].norm() - c.source[k - 1].norm()).abs() < 1e-12);
            }
            let measured = wrap(phi[(k, 0)] - phi[(k, 1)]);
            let want =
                wrap(direct_phase(&g, &s, 1, k).unwrap() - direct_phase(&g, &s, 0, k).unwrap());
            assert!(wrap(measured - want).abs() < 1e-9, "bin {k}");
        }
    }

    #[test]
    fn mic_power_matches_model() {
        let g = ArrayGeometry::default();
        let f = factorize(&build_coherence(&g)).unwrap();
        let p = ScenarioParams::new(120.0, 24, 1.5, 5.0, -3.0);
        let want = 1.0 + p.sigma_r2 + p.sigma_n2;
        let mut rng = stream(21, 0, 0, StreamDomain::Validation);
        let mut acc = [0.0; 4];
        // pooled over all 256 bins: 400 samples give 102,400 draws per mic
        let samples = 400;
        for _ in 0..samples {
            let y = gen_sample(&mut rng, &p, &g, &f).unwrap();
            for row in y.y.rows() {
                for (a, v) in acc.iter_mut().zip(row) {
                    *a += v.norm_sqr();
                }
            }
        }
        for a in acc {
            let e = a / (samples * g.bins()) as f64;
            assert!((e / want - 1.0).abs() <= 0.02, "E|Y|^2 = {e}, want {want}");
        }
    }

    #[test]
    fn batches_are_deterministic_and_distinct() {
        let gen = Generator::new(GeneratorConfig::default()).unwrap();
        let a = gen.gen_batch(7, 0, 8).unwrap();
        let b = gen.gen_batch(7, 0, 8).unwrap();
        assert_eq!(a.phases, b.phases);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.params, b.params);

        let c = gen.gen_batch(7, 1, 8).unwrap();
        let per = 256 * 4;
        let head = |batch: &DatasetBatch, s: usize| -> [u32; 2] {
            [
                batch.phases[s * per].to_bits(),
                batch.phases[s * per + 1].to_bits(),
            ]
        };
        for i in 0..8 {
            for j in 0..8 {
                assert_ne!(head(&a, i), head(&c, j));
            }
        }
    }

    #[test]
    fn batch_sample_matches_single_sample_path() {
        let gen = Generator::new(GeneratorConfig::default()).unwrap();
        let batch = gen.gen_batch(5, 3, 4).unwrap();
        let (params, y) = gen.signals_for(5, 3, 2).unwrap();
        assert_eq!(batch.params[2], params);
        let phi = extract_phase(&y);
        for (a, b) in batch.sample_phases(2).iter().zip(phi.as_slice()) {
            assert_eq!(*a, phase_to_f32(*b));
        }
    }

    #[test]
    fn frames_per_scenario_groups_params() {
        let config = GeneratorConfig {
            frames_per_scenario: 5,
            ..GeneratorConfig::default()
        };
        let gen = Generator::new(config).unwrap();
        let batch = gen.gen_batch(1, 0, 12).unwrap();
        for b in 0..12 {
            assert_eq!(batch.params[b], batch.params[b - b % 5]);
        }
        assert_ne!(batch.params[0], batch.params[5]);
        assert_ne!(batch.phases[0..1024], batch.phases[1024..2048]);
    }

    #[test]
    fn class_grid_matches_default_classes() {
        let g = class_grid(0.0, 5.0, 180.0).unwrap();
        assert_eq!(g.len(), 37);
        assert_eq!(class_grid(0.0, 15.0, 180.0).unwrap().len(), 13);
        assert!(class_grid(0.0, 0.0, 180.0).is_err());
        assert!(class_grid(10.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn config_hash_tracks_changes() {
        let a = GeneratorConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.distributions.drr_range_db = [-12.0, 3.0];
        assert_ne!(a.hash(), b.hash());
    }
}
