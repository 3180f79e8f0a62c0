//! Phase-only steered-response DOA estimator.
//!
//! The estimator only sees phases, exactly like the generated feature. For
//! every candidate class it correlates the unit phasors `e^{j Phi[k][i]}` with
//! the direct-path steering vector of that class at a reference distance and
//! accumulates the coherent power over all bins:
//!
//! `score[c] = sum_k | sum_i e^{j Phi[k][i]} conj(a_c(k)_i) |^2`
//!
//! It is a validation tool for the generator, not a competitive localizer.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{source_position, ArrayGeometry};
use crate::matrix::BinMatrix;
use crate::phasemap::extract_phase;
use crate::rtf::direct_path;
use crate::signalgen::MicSignals;

pub const DEFAULT_REFERENCE_DISTANCE: f64 = 2.0;
pub const PACC_TOLERANCE_DEG: f64 = 5.0;
pub const DEFAULT_BLOCK_LEN: usize = 50;

/// Unit-modulus steering vectors for every class, bin and microphone.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    classes: Vec<f64>,
    bins: usize,
    mics: usize,
    // conjugated steering entries, class-major then bin then mic
    conj: Vec<Complex64>,
}

impl SteeringTable {
    pub fn classes(&self) -> &[f64] {
        &self.classes
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn num_mics(&self) -> usize {
        self.mics
    }

    /// Steering vector `a_c(k)` (1-based bin).
    pub fn vector(&self, class: usize, k: usize) -> Vec<Complex64> {
        let per = self.bins * self.mics;
        let start = class * per + (k - 1) * self.mics;
        self.conj[start..start + self.mics]
            .iter()
            .map(|z| z.conj())
            .collect()
    }

    fn decision(&self, scores: Vec<f64>) -> DoaDecision {
        let argmax_class = argmax(&scores);
        DoaDecision {
            est_theta: self.classes[argmax_class],
            argmax_class,
            scores,
        }
    }

    /// Scores a phase map given as a flat bin-major `K*M` slice.
    pub fn score_phases<T: Copy + Into<f64>>(&self, phases: &[T]) -> Result<DoaDecision> {
        if phases.len() != self.bins * self.mics {
            return Err(Error::Dimension(format!(
                "phase map has {} entries, steering table expects {} x {}",
                phases.len(),
                self.bins,
                self.mics
            )));
        }
        let phasors: Vec<Complex64> = phases
            .iter()
            .map(|&p| Complex64::from_polar(1.0, p.into()))
            .collect();
        let per = self.bins * self.mics;
        let scores = self
            .conj
            .chunks_exact(per)
            .map(|table| {
                table
                    .chunks_exact(self.mics)
                    .zip(phasors.chunks_exact(self.mics))
                    .map(|(a, x)| {
                        a.iter()
                            .zip(x)
                            .map(|(a, x)| a * x)
                            .sum::<Complex64>()
                            .norm_sqr()
                    })
                    .sum()
            })
            .collect();
        Ok(self.decision(scores))
    }

    /// Averages per-frame scores normalized to sum 1, then takes the argmax.
    pub fn block_decision(&self, decisions: &[DoaDecision]) -> Result<DoaDecision> {
        if decisions.is_empty() {
            return Err(Error::Domain(
                "block decision needs at least one frame".into(),
            ));
        }
        let c = self.num_classes();
        if decisions.iter().any(|d| d.scores.len() != c) {
            return Err(Error::Dimension(format!(
                "all score vectors must have {c} classes"
            )));
        }
        if decisions.len() == 1 {
            return Ok(decisions[0].clone());
        }
        let mut mean = vec![0.0; c];
        for d in decisions {
            let total: f64 = d.scores.iter().sum();
            for (m, s) in mean.iter_mut().zip(&d.scores) {
                *m += if total > 0.0 {
                    s / total
                } else {
                    1.0 / c as f64
                };
            }
        }
        let n = decisions.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Ok(self.decision(mean))
    }
}

/// Builds steering vectors for `classes` (degrees) at distance `r_ref`.
pub fn build_steering(geom: &ArrayGeometry, classes: &[f64], r_ref: f64) -> Result<SteeringTable> {
    if classes.is_empty() {
        return Err(Error::Config("steering needs at least one class".into()));
    }
    let (bins, mics) = (geom.bins(), geom.num_mics());
    let mut conj = vec![Complex64::default(); classes.len() * bins * mics];
    for (theta, block) in classes.iter().zip(conj.chunks_exact_mut(bins * mics)) {
        direct_path(geom, &source_position(*theta, r_ref)?, block);
        block.iter_mut().for_each(|z| *z = z.conj());
    }
    Ok(SteeringTable {
        classes: classes.to_vec(),
        bins,
        mics,
        conj,
    })
}

/// Per-frame or per-block decision.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoaDecision {
    pub scores: Vec<f64>,
    pub argmax_class: usize,
    pub est_theta: f64,
}

/// Index of the largest value; ties resolve to the lowest index.
fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn srp_phase(phi: &BinMatrix<f64>, table: &SteeringTable) -> Result<DoaDecision> {
    if phi.shape() != (table.bins, table.mics) {
        return Err(Error::Dimension(format!(
            "phase map is {:?}, steering table is {:?}",
            phi.shape(),
            (table.bins, table.mics)
        )));
    }
    table.score_phases(phi.as_slice())
}

pub fn srp_signals(signals: &MicSignals, table: &SteeringTable) -> Result<DoaDecision> {
    srp_phase(&extract_phase(signals), table)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    /// Mean absolute error in degrees.
    pub mae: f64,
    /// Fraction of estimates within 5 degrees (inclusive).
    pub pacc: f64,
}

pub fn metrics_from_angles(estimates: &[f64], truths: &[f64]) -> Result<Metrics> {
    if estimates.len() != truths.len() {
        return Err(Error::Dimension(format!(
            "{} estimates for {} truths",
            estimates.len(),
            truths.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::Domain("metrics need at least one estimate".into()));
    }
    let n = estimates.len() as f64;
    let errors = estimates.iter().zip(truths).map(|(e, t)| (e - t).abs());
    let (sum, hits) = errors.fold((0.0, 0usize), |(s, h), e| {
        // 1e-9 absorbs rounding in non-integer class grids
        (s + e, h + usize::from(e <= PACC_TOLERANCE_DEG + 1e-9))
    });
    Ok(Metrics {
        mae: sum / n,
        pacc: hits as f64 / n,
    })
}

pub fn metrics(decisions: &[DoaDecision], truths: &[f64]) -> Result<Metrics> {
    let est: Vec<f64> = decisions.iter().map(|d| d.est_theta).collect();
    metrics_from_angles(&est, truths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{build_coherence, factorize};
    use crate::random::{stream, StreamDomain};
    use crate::signalgen::{class_grid, gen_sample, ScenarioParams};

    fn classes() -> Vec<f64> {
        class_grid(0.0, 5.0, 180.0).unwrap()
    }

    #[test]
    fn steering_is_unit_modulus_and_mirror_symmetric() {
        let g = ArrayGeometry::default();
        let t = build_steering(&g, &classes(), DEFAULT_REFERENCE_DISTANCE).unwrap();
        for c in 0..37 {
            for k in [1, 50, 256] {
                assert!(t
                    .vector(c, k)
                    .iter()
                    .all(|z| (z.norm() - 1.0).abs() < 1e-14));
            }
        }
        for k in 1..=256 {
            let a = t.vector(18, k);
            assert!((a[0] - a[3]).norm() < 1e-9);
            assert!((a[1] - a[2]).norm() < 1e-9);
        }
        assert!(build_steering(&g, &[], 2.0).is_err());
    }

    #[test]
    fn matched_clean_sample_recovers_every_class() {
        let g = ArrayGeometry::default();
        let f = factorize(&build_coherence(&g)).unwrap();
        let cls = classes();
        let t = build_steering(&g, &cls, DEFAULT_REFERENCE_DISTANCE).unwrap();
        for (c, theta) in cls.iter().enumerate() {
            let mut p = ScenarioParams::new(*theta, c, DEFAULT_REFERENCE_DISTANCE, 0.0, 0.0);
            p.sigma_n2 = 0.0;
            p.sigma_r2 = 0.0;
            let y = gen_sample(
                &mut stream(3, 0, c as u64, StreamDomain::Signal),
                &p,
                &g,
                &f,
            )
            .unwrap();
            let d = srp_signals(&y, &t).unwrap();
            assert_eq!(d.argmax_class, c);
            let best = d.scores[c];
            assert!((best - 256.0 * 16.0).abs() < 1e-6);
            assert!(d
                .scores
                .iter()
                .enumerate()
                .all(|(i, s)| i == c || *s < best));
        }
    }

    #[test]
    fn common_rotation_leaves_scores() {
        let g = ArrayGeometry::default();
        let t = build_steering(&g, &classes(), 2.0).unwrap();
        let mut rng = stream(4, 0, 0, StreamDomain::Validation);
        let phi: Vec<f64> = (0..1024)
            .map(|_| rand::Rng::random_range(&mut rng, -3.0..3.0))
            .collect();
        let rotated: Vec<f64> = phi
            .chunks_exact(4)
            .enumerate()
            .flat_map(|(k, row)| {
                row.iter()
                    .map(move |p| p + 0.37 * k as f64)
                    .collect::<Vec<_>>()
            })
            .collect();
        let a = t.score_phases(&phi).unwrap();
        let b = t.score_phases(&rotated).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert!((x - y).abs() < 1e-9 * x.max(1.0));
        }
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn block_decision_cases() {
        let g = ArrayGeometry::default();
        let t = build_steering(&g, &[0.0, 90.0, 180.0], 2.0).unwrap();
        let d = |s: [f64; 3]| t.decision(s.to_vec());
        let one = d([1.0, 5.0, 2.0]);
        assert_eq!(t.block_decision(std::slice::from_ref(&one)).unwrap(), one);
        let block = t
            .block_decision(&[d([0.0, 5.0, 1.0]), d([1.0, 9.0, 3.0]), d([0.0, 2.0, 0.0])])
            .unwrap();
        assert_eq!(block.argmax_class, 1);
        assert_eq!(block.est_theta, 90.0);
        assert!((block.scores.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // a single loud frame cannot outvote normalized quiet frames
        let block = t
            .block_decision(&[
                d([1000.0, 0.0, 0.0]),
                d([0.0, 0.6, 0.4]),
                d([0.0, 0.6, 0.4]),
            ])
            .unwrap();
        assert_eq!(block.argmax_class, 1);
        assert!(t.block_decision(&[]).is_err());
        assert!(t
            .block_decision(&[DoaDecision {
                scores: vec![1.0],
                argmax_class: 0,
                est_theta: 0.0
            }])
            .is_err());
    }

    #[test]
    fn metric_examples() {
        let m = metrics_from_angles(&[10.0, 45.0], &[10.0, 45.0]).unwrap();
        assert_eq!((m.mae, m.pacc), (0.0, 1.0));
        let m = metrics_from_angles(&[5.0, 40.0, 180.0], &[0.0, 45.0, 175.0]).unwrap();
        assert_eq!((m.mae, m.pacc), (5.0, 1.0));
        let m = metrics_from_angles(&[0.0, 10.0], &[0.0, 0.0]).unwrap();
        assert_eq!((m.mae, m.pacc), (5.0, 0.5));
        assert!(metrics_from_angles(&[1.0], &[1.0, 2.0]).is_err());
        assert!(metrics_from_angles(&[], &[]).is_err());
    }

    #[test]
    fn metrics_permutation_invariant() {
        let est = [0.0, 15.0, 90.0, 170.0, 35.0];
        let tru = [5.0, 15.0, 60.0, 180.0, 30.0];
        let a = metrics_from_angles(&est, &tru).unwrap();
        let idx = [3, 0, 4, 1, 2];
        let e2: Vec<f64> = idx.iter().map(|&i| est[i]).collect();
        let t2: Vec<f64> = idx.iter().map(|&i| tru[i]).collect();
        let b = metrics_from_angles(&e2, &t2).unwrap();
        assert!((a.mae - b.mae).abs() < 1e-12);
        assert_eq!(a.pacc, b.pacc);
    }

    #[test]
    fn shape_mismatch() {
        let g = ArrayGeometry::default();
        let t = build_steering(&g, &classes(), 2.0).unwrap();
        assert!(t.score_phases(&[0.0f64; 10]).is_err());
        assert!(srp_phase(&BinMatrix::zeros(256, 3), &t).is_err());
    }
}
