//! Microphone array description and direct-path propagation quantities.
//!
//! Frequency bins are numbered the physical way: bin `k` in `1..=K` sits at
//! `fs * k / (2K)` Hz. DC (`k = 0`) is excluded. Microphones are indexed from 0.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_SAMPLE_RATE: f64 = 16_000.0;
pub const DEFAULT_DFT_LEN: usize = 512;
pub const DEFAULT_NUM_MICS: usize = 4;
pub const DEFAULT_SPACING: f64 = 0.08;

/// On-disk geometry description, `{"c": .., "fs": .., "dft_len": .., "mics": [[x, y, z], ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    #[serde(default = "default_c")]
    pub c: f64,
    pub fs: f64,
    pub dft_len: usize,
    pub mics: Vec<[f64; 3]>,
}

fn default_c() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

/// A fixed microphone array plus the acoustic constants the model needs.
///
/// Immutable once built; share it by reference across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    mics: Vec<[f64; 3]>,
    speed_of_sound: f64,
    sample_rate: f64,
    bins: usize,
    distances: Vec<f64>,
}

impl ArrayGeometry {
    pub fn new(
        mics: Vec<[f64; 3]>,
        speed_of_sound: f64,
        sample_rate: f64,
        bins: usize,
    ) -> Result<Self> {
        if mics.len() < 2 {
            return Err(Error::Geometry(format!(
                "need at least 2 microphones, got {}",
                mics.len()
            )));
        }
        if mics.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Geometry(
                "microphone coordinates must be finite".into(),
            ));
        }
        if !(speed_of_sound.is_finite() && speed_of_sound > 0.0) {
            return Err(Error::Geometry(format!(
                "speed of sound must be > 0, got {speed_of_sound}"
            )));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Geometry(format!(
                "sampling rate must be > 0, got {sample_rate}"
            )));
        }
        if bins == 0 {
            return Err(Error::Geometry("number of bins must be >= 1".into()));
        }

        let m = mics.len();
        let mut distances = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let d = norm(sub(mics[i], mics[j]));
                distances[i * m + j] = d;
                distances[j * m + i] = d;
            }
        }
        if distances.iter().all(|&d| d == 0.0) {
            return Err(Error::Geometry("all microphone positions coincide".into()));
        }

        Ok(Self {
            mics,
            speed_of_sound,
            sample_rate,
            bins,
            distances,
        })
    }

    /// Uniform linear array on the x-axis, centered at the origin.
    pub fn uniform_linear(
        num_mics: usize,
        spacing: f64,
        speed_of_sound: f64,
        sample_rate: f64,
        bins: usize,
    ) -> Result<Self> {
        let center = (num_mics as f64 - 1.0) / 2.0;
        let mics = (0..num_mics)
            .map(|i| [(i as f64 - center) * spacing, 0.0, 0.0])
            .collect();
        Self::new(mics, speed_of_sound, sample_rate, bins)
    }

    pub fn from_spec(spec: &GeometrySpec) -> Result<Self> {
        if spec.dft_len < 2 || spec.dft_len % 2 != 0 {
            return Err(Error::Geometry(format!(
                "dft_len must be an even number >= 2, got {}",
                spec.dft_len
            )));
        }
        Self::new(spec.mics.clone(), spec.c, spec.fs, spec.dft_len / 2)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: GeometrySpec = serde_json::from_str(s)
            .map_err(|e| Error::Geometry(format!("bad geometry JSON: {e}")))?;
        Self::from_spec(&spec)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_spec(&self) -> GeometrySpec {
        GeometrySpec {
            c: self.speed_of_sound,
            fs: self.sample_rate,
            dft_len: self.bins * 2,
            mics: self.mics.clone(),
        }
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    /// Number of one-sided bins `K` (DC excluded).
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn mics(&self) -> &[[f64; 3]] {
        &self.mics
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.mics.len() + j]
    }

    /// Phase advance per meter of path length per bin: `pi * fs / (c * K)`.
    ///
    /// Multiplying by a distance and a bin number gives the propagation phase
    /// in radians.
    pub fn phase_per_meter_bin(&self) -> f64 {
        PI * self.sample_rate / (self.speed_of_sound * self.bins as f64)
    }

    pub fn mic_source_distance(&self, mic: usize, source: &SourcePosition) -> f64 {
        norm(sub(self.mics[mic], source.position))
    }

    pub(crate) fn check_mic(&self, mic: usize) -> Result<()> {
        if mic >= self.mics.len() {
            return Err(Error::Index {
                what: "mic",
                value: mic,
                lo: 0,
                hi: self.mics.len() - 1,
            });
        }
        Ok(())
    }

    pub(crate) fn check_bin(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.bins {
            return Err(Error::Index {
                what: "bin",
                value: k,
                lo: 1,
                hi: self.bins,
            });
        }
        Ok(())
    }
}

impl Default for ArrayGeometry {
    /// Four microphones, 8 cm apart, 16 kHz, 512-point DFT.
    fn default() -> Self {
        Self::uniform_linear(
            DEFAULT_NUM_MICS,
            DEFAULT_SPACING,
            DEFAULT_SPEED_OF_SOUND,
            DEFAULT_SAMPLE_RATE,
            DEFAULT_DFT_LEN / 2,
        )
        .expect("default geometry is valid")
    }
}

/// Point source in the array's horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePosition {
    pub position: [f64; 3],
    pub theta_deg: f64,
    pub r: f64,
}

/// Places a source at azimuth `theta_deg` and distance `r` from the array center.
pub fn source_position(theta_deg: f64, r: f64) -> Result<SourcePosition> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!(
            "source distance must be > 0, got {r}"
        )));
    }
    if !(0.0..=180.0).contains(&theta_deg) {
        return Err(Error::Domain(format!(
            "theta must lie in [0, 180] degrees, got {theta_deg}"
        )));
    }
    let theta = theta_deg.to_radians();
    Ok(SourcePosition {
        position: [r * theta.cos(), r * theta.sin(), 0.0],
        theta_deg,
        r,
    })
}

/// Unwrapped direct-path phase of microphone `mic` at bin `k`.
pub fn direct_phase(
    geom: &ArrayGeometry,
    source: &SourcePosition,
    mic: usize,
    k: usize,
) -> Result<f64> {
    geom.check_mic(mic)?;
    geom.check_bin(k)?;
    Ok(geom.mic_source_distance(mic, source) * geom.phase_per_meter_bin() * k as f64)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
