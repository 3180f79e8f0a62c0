//! The `PGD1` dataset container and lazy batch streaming.
//!
//! Layout of one container, all integers little-endian:
//!
//! ```text
//! "PGD1" | header_len: u32 | header: UTF-8 JSON
//!        | phases: B*K*M f32 (sample-major, then bin, then mic)
//!        | labels: B i32
//!        | params: JSON array of B scenario records
//! ```
//!
//! The header is `{"B","K","M","C","dtype":"f32","seed","batch_index","config_hash"}`,
//! with `config_hash` written as 16 lowercase hex digits. Containers can be
//! concatenated back to back; [`read_next`] stops cleanly at the end of the
//! stream.
//!
//! Coherence factors can be dumped with the same framing under the magic
//! `PGF1` and an `f64` payload of `K*M*M` values.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coherence::CoherenceFactors;
use crate::signalgen::{Generator, ScenarioParams};

pub const MAGIC: &[u8; 4] = b"PGD1";
pub const FACTORS_MAGIC: &[u8; 4] = b"PGF1";

// header sizes beyond this are treated as corruption
const MAX_HEADER_LEN: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated payload while reading {0}")]
    Truncated(&'static str),

    #[error("header/payload length mismatch: {0}")]
    LengthMismatch(String),

    #[error("malformed header: {0}")]
    Header(String),

    #[error("label {label} of sample {sample} outside [0, {classes})")]
    LabelOutOfRange {
        sample: usize,
        label: i32,
        classes: usize,
    },

    #[error("write failed: {0}")]
    Write(#[source] std::io::Error),

    #[error("read failed: {0}")]
    Read(#[source] std::io::Error),
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    pub master_seed: u64,
    pub batch_index: u64,
    pub config_hash: u64,
}

/// `B` phase maps with labels and the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBatch {
    pub batch_size: usize,
    pub bins: usize,
    pub mics: usize,
    pub classes: usize,
    pub phases: Vec<f32>,
    pub labels: Vec<i32>,
    pub params: Vec<ScenarioParams>,
    pub provenance: Provenance,
}

impl DatasetBatch {
    /// `K*M` phases of sample `b`, bin-major.
    pub fn sample_phases(&self, b: usize) -> &[f32] {
        let per = self.bins * self.mics;
        &self.phases[b * per..(b + 1) * per]
    }

    pub fn validate(&self) -> Result<(), ContainerError> {
        let want = self.batch_size * self.bins * self.mics;
        if self.phases.len() != want {
            return Err(ContainerError::LengthMismatch(format!(
                "{} phases for B*K*M = {want}",
                self.phases.len()
            )));
        }
        if self.labels.len() != self.batch_size || self.params.len() != self.batch_size {
            return Err(ContainerError::LengthMismatch(format!(
                "{} labels and {} params for B = {}",
                self.labels.len(),
                self.params.len(),
                self.batch_size
            )));
        }
        check_labels(&self.labels, self.classes)
    }
}

fn check_labels(labels: &[i32], classes: usize) -> Result<(), ContainerError> {
    match labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l < 0 || l as usize >= classes)
    {
        Some((sample, &label)) => Err(ContainerError::LabelOutOfRange {
            sample,
            label,
            classes,
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    #[serde(rename = "B")]
    batch_size: usize,
    #[serde(rename = "K")]
    bins: usize,
    #[serde(rename = "M")]
    mics: usize,
    #[serde(rename = "C")]
    classes: usize,
    dtype: String,
    seed: u64,
    batch_index: u64,
    config_hash: String,
}

fn write_framed<W: Write + ?Sized>(
    sink: &mut W,
    magic: &[u8; 4],
    header: &[u8],
) -> Result<u64, ContainerError> {
    let len = u32::try_from(header.len())
        .map_err(|_| ContainerError::Header("header too large".into()))?;
    sink.write_all(magic).map_err(ContainerError::Write)?;
    sink.write_all(&len.to_le_bytes())
        .map_err(ContainerError::Write)?;
    sink.write_all(header).map_err(ContainerError::Write)?;
    Ok(8 + header.len() as u64)
}

/// Writes one container and returns the number of bytes written.
pub fn write_batch<W: Write + ?Sized>(
    batch: &DatasetBatch,
    sink: &mut W,
) -> Result<u64, ContainerError> {
    batch.validate()?;
    let header = Header {
        batch_size: batch.batch_size,
        bins: batch.bins,
        mics: batch.mics,
        classes: batch.classes,
        dtype: "f32".into(),
        seed: batch.provenance.master_seed,
        batch_index: batch.provenance.batch_index,
        config_hash: format!("{:016x}", batch.provenance.config_hash),
    };
    let header = serde_json::to_vec(&header).map_err(|e| ContainerError::Header(e.to_string()))?;
    let mut written = write_framed(sink, MAGIC, &header)?;

    let mut payload = Vec::with_capacity(batch.phases.len() * 4 + batch.labels.len() * 4);
    for p in &batch.phases {
        payload.extend_from_slice(&p.to_le_bytes());
    }
    for l in &batch.labels {
        payload.extend_from_slice(&l.to_le_bytes());
    }
    sink.write_all(&payload).map_err(ContainerError::Write)?;
    written += payload.len() as u64;

    let params =
        serde_json::to_vec(&batch.params).map_err(|e| ContainerError::Header(e.to_string()))?;
    sink.write_all(&params).map_err(ContainerError::Write)?;
    written += params.len() as u64;
    Ok(written)
}

fn read_exact_or<R: Read + ?Sized>(
    src: &mut R,
    buf: &mut [u8],
    what: &'static str,
) -> Result<(), ContainerError> {
    src.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => ContainerError::Truncated(what),
        _ => ContainerError::Read(e),
    })
}

/// Reads the magic, or `None` on a clean end of stream.
fn read_magic<R: Read + ?Sized>(
    src: &mut R,
    expected: &[u8; 4],
) -> Result<Option<()>, ContainerError> {
    let mut magic = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        match src.read(&mut magic[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(ContainerError::Truncated("magic")),
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(ContainerError::Read(e)),
        }
    }
    if &magic != expected {
        return Err(ContainerError::BadMagic {
            expected: *expected,
            found: magic,
        });
    }
    Ok(Some(()))
}

fn read_header_bytes<R: Read + ?Sized>(src: &mut R) -> Result<Vec<u8>, ContainerError> {
    let mut len = [0u8; 4];
    read_exact_or(src, &mut len, "header length")?;
    let len = u32::from_le_bytes(len);
    if len > MAX_HEADER_LEN {
        return Err(ContainerError::Header(format!(
            "header length {len} is implausible"
        )));
    }
    let mut header = vec![0u8; len as usize];
    read_exact_or(src, &mut header, "header")?;
    Ok(header)
}

/// Reads the next container from a stream, or `None` at a clean end of stream.
pub fn read_next<R: Read + ?Sized>(src: &mut R) -> Result<Option<DatasetBatch>, ContainerError> {
    if read_magic(src, MAGIC)?.is_none() {
        return Ok(None);
    }
    let header: Header = serde_json::from_slice(&read_header_bytes(src)?)
        .map_err(|e| ContainerError::Header(e.to_string()))?;
    if header.dtype != "f32" {
        return Err(ContainerError::Header(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let config_hash = u64::from_str_radix(&header.config_hash, 16)
        .map_err(|e| ContainerError::Header(format!("bad config_hash: {e}")))?;
    let count = header
        .batch_size
        .checked_mul(header.bins)
        .and_then(|v| v.checked_mul(header.mics))
        .filter(|v| v.checked_mul(4).is_some())
        .ok_or_else(|| ContainerError::Header("B*K*M overflows".into()))?;

    let mut raw = vec![0u8; count * 4];
    read_exact_or(src, &mut raw, "phases")?;
    let phases = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut raw = vec![0u8; header.batch_size * 4];
    read_exact_or(src, &mut raw, "labels")?;
    let labels: Vec<i32> = raw
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
        .collect();

    let mut de = serde_json::Deserializer::from_reader(&mut *src);
    let params = Vec::<ScenarioParams>::deserialize(&mut de).map_err(|e| {
        if e.is_eof() {
            ContainerError::Truncated("params")
        } else if e.is_io() {
            ContainerError::Read(e.into())
        } else {
            ContainerError::Header(format!("bad params record: {e}"))
        }
    })?;
    if params.len() != header.batch_size {
        return Err(ContainerError::LengthMismatch(format!(
            "header declares B = {} but {} params records follow",
            header.batch_size,
            params.len()
        )));
    }
    check_labels(&labels, header.classes)?;

    Ok(Some(DatasetBatch {
        batch_size: header.batch_size,
        bins: header.bins,
        mics: header.mics,
        classes: header.classes,
        phases,
        labels,
        params,
        provenance: Provenance {
            master_seed: header.seed,
            batch_index: header.batch_index,
            config_hash,
        },
    }))
}

/// Reads exactly one container.
pub fn read_batch<R: Read + ?Sized>(src: &mut R) -> Result<DatasetBatch, ContainerError> {
    read_next(src)?.ok_or(ContainerError::Truncated("magic"))
}

/// Reads every container in a concatenated stream.
pub fn read_all<R: Read + ?Sized>(src: &mut R) -> Result<Vec<DatasetBatch>, ContainerError> {
    let mut out = Vec::new();
    while let Some(b) = read_next(src)? {
        out.push(b);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct FactorsHeader {
    #[serde(rename = "K")]
    bins: usize,
    #[serde(rename = "M")]
    mics: usize,
    dtype: String,
}

/// Dumps coherence factors as a `PGF1` container.
pub fn write_factors<W: Write + ?Sized>(
    factors: &CoherenceFactors,
    sink: &mut W,
) -> Result<u64, ContainerError> {
    let header = FactorsHeader {
        bins: factors.bins(),
        mics: factors.num_mics(),
        dtype: "f64".into(),
    };
    let header = serde_json::to_vec(&header).map_err(|e| ContainerError::Header(e.to_string()))?;
    let mut written = write_framed(sink, FACTORS_MAGIC, &header)?;
    let payload: Vec<u8> = factors
        .as_slice()
        .iter()
        .flat_map(|v| v.to_le_bytes())
        .collect();
    sink.write_all(&payload).map_err(ContainerError::Write)?;
    written += payload.len() as u64;
    Ok(written)
}

pub fn read_factors<R: Read + ?Sized>(src: &mut R) -> Result<CoherenceFactors, ContainerError> {
    read_magic(src, FACTORS_MAGIC)?.ok_or(ContainerError::Truncated("magic"))?;
    let header: FactorsHeader = serde_json::from_slice(&read_header_bytes(src)?)
        .map_err(|e| ContainerError::Header(e.to_string()))?;
    if header.dtype != "f64" {
        return Err(ContainerError::Header(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    let mut raw = vec![0u8; header.bins * header.mics * header.mics * 8];
    read_exact_or(src, &mut raw, "factors")?;
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    CoherenceFactors::from_parts(header.bins, header.mics, values)
        .map_err(|e| ContainerError::LengthMismatch(e.to_string()))
}

/// Lazily generated batches with increasing `batch_index` starting at 0.
///
/// Only the batch currently being yielded is held in memory.
#[derive(Debug, Clone)]
pub struct BatchStream {
    generator: Arc<Generator>,
    master_seed: u64,
    batch_size: usize,
    next_index: u64,
    remaining: Option<u64>,
}

impl Iterator for BatchStream {
    type Item = crate::Result<DatasetBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Some(r) = self.remaining.as_mut() {
            if *r == 0 {
                return None;
            }
            *r -= 1;
        }
        let idx = self.next_index;
        self.next_index += 1;
        Some(
            self.generator
                .gen_batch(self.master_seed, idx, self.batch_size),
        )
    }
}

/// Streams `count` batches, or an unbounded stream when `count` is `None`.
pub fn stream_batches(
    generator: Arc<Generator>,
    master_seed: u64,
    batch_size: usize,
    count: Option<u64>,
) -> BatchStream {
    BatchStream {
        generator,
        master_seed,
        batch_size,
        next_index: 0,
        remaining: count,
    }
}
