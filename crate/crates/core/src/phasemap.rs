//! Phase-map feature: the principal phase of every microphone spectrum entry.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::matrix::BinMatrix;
use crate::signalgen::MicSignals;

/// `K x M` phase map with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMapSample {
    pub phi: BinMatrix<f64>,
    pub class_index: usize,
}

/// Principal phase in `(-pi, pi]`; a zero value maps to 0.
#[inline]
pub fn principal_phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let p = z.im.atan2(z.re);
    if p == -PI {
        PI
    } else {
        p
    }
}

/// Narrows a principal phase to `f32` without landing on `-pi`.
#[inline]
pub fn phase_to_f32(p: f64) -> f32 {
    let v = p as f32;
    if v <= -std::f32::consts::PI {
        std::f32::consts::PI
    } else {
        v
    }
}

/// Wraps any angle into `(-pi, pi]`.
pub fn wrap(x: f64) -> f64 {
    let w = x - TAU * ((x + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else if w > PI {
        w - TAU
    } else {
        w
    }
}

pub fn extract_phase(signals: &MicSignals) -> BinMatrix<f64> {
    signals.y.map(|z| principal_phase(*z))
}

impl PhaseMapSample {
    pub fn from_signals(signals: &MicSignals, class_index: usize) -> Self {
        Self {
            phi: extract_phase(signals),
            class_index,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::{build_coherence, factorize};
    use crate::geometry::ArrayGeometry;
    use crate::random::{stream, StreamDomain};
    use crate::signalgen::{gen_sample, ScenarioParams};
    use proptest::prelude::*;

    fn single(z: Complex64) -> MicSignals {
        MicSignals {
            y: BinMatrix::from_vec(1, 1, vec![z]),
        }
    }

    #[test]
    fn principal_values() {
        assert_eq!(
            extract_phase(&single(Complex64::new(1.0, 0.0)))[(1, 0)],
            0.0
        );
        assert_eq!(
            extract_phase(&single(Complex64::new(0.0, 1.0)))[(1, 0)],
            PI / 2.0
        );
        assert_eq!(
            extract_phase(&single(Complex64::new(-1.0, 0.0)))[(1, 0)],
            PI
        );
        assert_eq!(
            extract_phase(&single(Complex64::new(-1.0, -0.0)))[(1, 0)],
            PI
        );
        assert_eq!(
            extract_phase(&single(Complex64::new(0.0, 0.0)))[(1, 0)],
            0.0
        );
        assert_eq!(
            extract_phase(&single(Complex64::new(-0.0, 0.0)))[(1, 0)],
            0.0
        );
        assert_eq!(phase_to_f32(-PI + 1e-12), std::f32::consts::PI);
    }

    #[test]
    fn broadside_clean_map_is_mirror_symmetric() {
        let g = ArrayGeometry::default();
        let f = factorize(&build_coherence(&g)).unwrap();
        let mut p = ScenarioParams::new(90.0, 18, 2.0, 0.0, 0.0);
        p.sigma_n2 = 0.0;
        p.sigma_r2 = 0.0;
        let y = gen_sample(&mut stream(2, 0, 0, StreamDomain::Signal), &p, &g, &f).unwrap();
        let phi = PhaseMapSample::from_signals(&y, p.class_index);
        assert_eq!(phi.phi.shape(), (256, 4));
        for k in 1..=256 {
            assert!(wrap(phi.phi[(k, 0)] - phi.phi[(k, 3)]).abs() < 1e-9);
            assert!(wrap(phi.phi[(k, 1)] - phi.phi[(k, 2)]).abs() < 1e-9);
        }
    }

    fn arb_complex() -> impl Strategy<Value = Complex64> {
        (-10.0f64..10.0, -10.0f64..10.0).prop_map(|(a, b)| Complex64::new(a, b))
    }

    proptest! {
        #[test]
        fn phases_in_half_open_interval(zs in prop::collection::vec(arb_complex(), 1..64)) {
            for z in zs {
                let p = principal_phase(z);
                prop_assert!(p > -PI && p <= PI);
                let f = phase_to_f32(p);
                prop_assert!(f > -std::f32::consts::PI && f <= std::f32::consts::PI);
            }
        }

        #[test]
        fn conjugation_negates_phase(z in arb_complex()) {
            let p = principal_phase(z);
            let q = principal_phase(z.conj());
            if p == PI {
                prop_assert_eq!(q, PI);
            } else {
                prop_assert_eq!(q, -p);
            }
        }

        #[test]
        fn positive_scaling_keeps_phase(z in arb_complex(), a in 1e-3f64..1e3) {
            prop_assert!((principal_phase(z * a) - principal_phase(z)).abs() < 1e-12
                || wrap(principal_phase(z * a) - principal_phase(z)).abs() < 1e-12);
        }

        #[test]
        fn common_rotation_preserves_differences(
            row in prop::collection::vec(arb_complex(), 4),
            beta in -PI..PI,
        ) {
            let rot = Complex64::from_polar(1.0, beta);
            let before: Vec<f64> = row.iter().map(|z| principal_phase(*z)).collect();
            let after: Vec<f64> = row.iter().map(|z| principal_phase(z * rot)).collect();
            for i in 0..4 {
                prop_assert!(wrap(after[i] - before[i] - beta).abs() < 1e-9);
                for j in 0..4 {
                    prop_assert!(wrap((after[i] - after[j]) - (before[i] - before[j])).abs() < 1e-9);
                }
            }
        }
    }
}
