//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed statistical check, 2 configuration error,
//! 3 I/O error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::coherence::{build_coherence, factorize};
use crate::error::Error;
use crate::geometry::{ArrayGeometry, GeometrySpec};
use crate::io::{read_all, write_batch, write_factors, ContainerError, DatasetBatch};
use crate::oracle::{
    build_steering, metrics_from_angles, DoaDecision, DEFAULT_BLOCK_LEN, DEFAULT_REFERENCE_DISTANCE,
};
use crate::signalgen::{class_grid, Generator, GeneratorConfig, ScenarioDistributions, SignalLaw};
use crate::stats::{run_suite, SuiteConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("{0} statistical check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::ChecksFailed(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => CliError::Io(e.to_string()),
            Error::Container(e) => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<ContainerError> for CliError {
    fn from(e: ContainerError) -> Self {
        CliError::Io(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn out_err(e: std::io::Error) -> CliError {
    CliError::Io(format!("writing report: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "phasegen",
    version,
    about = "Phase-map training data generator for DOA estimation"
)]
pub struct Cli {
    /// Emit reports as line-delimited JSON.
    #[arg(long, global = true)]
    pub json: bool,

    /// Worker threads [default: number of logical cores].
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate dataset batches and write one PGD1 file per batch.
    Generate(GenerateArgs),
    /// Run the statistical validation suite on the generator.
    Validate(ValidateArgs),
    /// Run the steered-response oracle over a dataset and report MAE/PACC.
    Estimate(EstimateArgs),
    /// Measure generation throughput.
    Bench(BenchArgs),
}

/// Scenario and geometry options shared by every command.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Run configuration file (.json or .toml); flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Array geometry JSON {"c", "fs", "dft_len", "mics"} [default: 4-mic ULA, 0.08 m, 16 kHz, 512-point DFT].
    #[arg(long, value_name = "PATH")]
    pub geometry: Option<PathBuf>,

    /// SNR range in dB [default: 0 30].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub snr: Option<Vec<f64>>,

    /// DRR range in dB [default: -9 0].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub drr: Option<Vec<f64>>,

    /// Source distance range in meters [default: 1 3].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    pub r: Option<Vec<f64>>,

    /// Class angle grid in degrees [default: 0 5 180, i.e. 37 classes].
    #[arg(long, num_args = 3, value_names = ["START", "STEP", "END"], allow_negative_numbers = true)]
    pub classes: Option<Vec<f64>>,

    /// Consecutive samples sharing one scenario draw [default: 1].
    #[arg(long)]
    pub frames_per_scenario: Option<usize>,

    /// Master seed [default: 0; env PHASEGEN_SEED].
    #[arg(long, env = "PHASEGEN_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Number of batches [default: 1].
    #[arg(long)]
    pub batches: Option<u64>,

    /// Samples per batch [default: 512].
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Output directory [default: ./dataset].
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Also dump the coherence factors as a PGF1 file.
    #[arg(long, value_name = "PATH")]
    pub dump_factors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Monte Carlo draws per check [default: 100000].
    #[arg(long, default_value_t = 100_000)]
    pub draws: usize,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Dataset file (possibly concatenated containers) or directory of .pgd files.
    pub dataset: PathBuf,

    /// Steering reference distance in meters [default: 2].
    #[arg(long, default_value_t = DEFAULT_REFERENCE_DISTANCE)]
    pub r_ref: f64,

    /// Frames per block for the block-level metrics [default: 50].
    #[arg(long, default_value_t = DEFAULT_BLOCK_LEN)]
    pub block_len: usize,

    /// Also emit one {class_true, class_est, scores} record per frame.
    #[arg(long)]
    pub records: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,

    /// Number of timed batches [default: 4].
    #[arg(long)]
    pub batches: Option<u64>,

    /// Samples per batch [default: 512].
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Also measure throughput for 1..=workers threads.
    #[arg(long)]
    pub scaling: bool,
}

/// Run configuration file. Every field is optional; flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub geometry: Option<GeometrySource>,
    pub snr: Option<[f64; 2]>,
    pub drr: Option<[f64; 2]>,
    pub r: Option<[f64; 2]>,
    pub classes: Option<[f64; 3]>,
    pub frames_per_scenario: Option<usize>,
    pub seed: Option<u64>,
    pub batches: Option<u64>,
    pub batch_size: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeometrySource {
    Path(PathBuf),
    Inline(GeometrySpec),
}

/// Fully resolved settings for one command.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub generator: GeneratorConfig,
    pub seed: u64,
    pub batches: u64,
    pub batch_size: usize,
    pub out: PathBuf,
}

fn load_config_file(path: &Path) -> Result<RunConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let is_toml = path.extension().is_some_and(|e| e == "toml");
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn pair(v: &[f64]) -> [f64; 2] {
    [v[0], v[1]]
}

impl ScenarioArgs {
    pub fn resolve(
        &self,
        batches: Option<u64>,
        batch_size: Option<usize>,
        out: Option<PathBuf>,
    ) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(p) => load_config_file(p)?,
            None => RunConfigFile::default(),
        };

        let geometry = match (&self.geometry, &file.geometry) {
            (Some(p), _) | (None, Some(GeometrySource::Path(p))) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
                ArrayGeometry::from_json_str(&text)?.to_spec()
            }
            (None, Some(GeometrySource::Inline(spec))) => ArrayGeometry::from_spec(spec)?.to_spec(),
            (None, None) => ArrayGeometry::default().to_spec(),
        };

        let defaults = ScenarioDistributions::default();
        let theta_classes = match self
            .classes
            .as_deref()
            .map(|c| [c[0], c[1], c[2]])
            .or(file.classes)
        {
            Some([start, step, end]) => class_grid(start, step, end)?,
            None => defaults.theta_classes,
        };
        let distributions = ScenarioDistributions {
            theta_classes,
            r_range: self
                .r
                .as_deref()
                .map(pair)
                .or(file.r)
                .unwrap_or(defaults.r_range),
            snr_range_db: self
                .snr
                .as_deref()
                .map(pair)
                .or(file.snr)
                .unwrap_or(defaults.snr_range_db),
            drr_range_db: self
                .drr
                .as_deref()
                .map(pair)
                .or(file.drr)
                .unwrap_or(defaults.drr_range_db),
        };
        distributions.validate()?;

        let frames_per_scenario = self
            .frames_per_scenario
            .or(file.frames_per_scenario)
            .unwrap_or(1);
        if frames_per_scenario == 0 {
            return Err(CliError::Config("frames-per-scenario must be >= 1".into()));
        }
        let batches = batches.or(file.batches).unwrap_or(1);
        let batch_size = batch_size.or(file.batch_size).unwrap_or(512);
        if batches == 0 || batch_size == 0 {
            return Err(CliError::Config(
                "batches and batch-size must be >= 1".into(),
            ));
        }

        Ok(RunConfig {
            generator: GeneratorConfig {
                geometry,
                distributions,
                frames_per_scenario,
                signal_law: SignalLaw::Gaussian,
            },
            seed: self.seed.or(file.seed).unwrap_or(0),
            batches,
            batch_size,
            out: out.or(file.out).unwrap_or_else(|| PathBuf::from("dataset")),
        })
    }
}

fn emit(
    out: &mut dyn Write,
    json_mode: bool,
    value: serde_json::Value,
    human: impl FnOnce() -> String,
) -> Result<(), CliError> {
    if json_mode {
        writeln!(out, "{value}").map_err(out_err)
    } else {
        writeln!(out, "{}", human()).map_err(out_err)
    }
}

pub fn batch_file_name(batch_index: u64) -> String {
    format!("batch_{batch_index:05}.pgd")
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerateSummary {
    pub files: Vec<PathBuf>,
    pub samples: u64,
    pub bytes: u64,
    pub seconds: f64,
    pub samples_per_sec: f64,
}

pub fn cmd_generate(
    cfg: &RunConfig,
    dump_factors: Option<&Path>,
    json_mode: bool,
    out: &mut dyn Write,
) -> Result<GenerateSummary, CliError> {
    let generator = Generator::new(cfg.generator.clone())?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;

    if let Some(path) = dump_factors {
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        let mut w = BufWriter::new(f);
        write_factors(generator.factors(), &mut w)?;
        w.flush().map_err(|e| io_err(path, e))?;
    }

    let start = Instant::now();
    let mut files = Vec::new();
    let mut bytes = 0;
    for b in 0..cfg.batches {
        let batch = generator.gen_batch(cfg.seed, b, cfg.batch_size)?;
        let path = cfg.out.join(batch_file_name(b));
        let f = File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(f);
        bytes += write_batch(&batch, &mut w)?;
        w.flush().map_err(|e| io_err(&path, e))?;
        files.push(path);
    }
    let seconds = start.elapsed().as_secs_f64();
    let samples = cfg.batches * cfg.batch_size as u64;
    let summary = GenerateSummary {
        files,
        samples,
        bytes,
        seconds,
        samples_per_sec: samples as f64 / seconds,
    };

    emit(
        out,
        json_mode,
        json!({
            "command": "generate",
            "batches": cfg.batches,
            "samples": summary.samples,
            "bytes": summary.bytes,
            "seconds": summary.seconds,
            "samples_per_sec": summary.samples_per_sec,
            "config_hash": format!("{:016x}", generator.config_hash()),
            "out": cfg.out,
        }),
        || {
            format!(
                "wrote {} batches ({} samples, {} bytes) to {} in {:.3} s: {:.0} samples/s",
                cfg.batches,
                summary.samples,
                summary.bytes,
                cfg.out.display(),
                summary.seconds,
                summary.samples_per_sec
            )
        },
    )?;
    Ok(summary)
}

pub fn cmd_validate(
    cfg: &RunConfig,
    draws: usize,
    json_mode: bool,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let generator = Generator::new(cfg.generator.clone())?;
    let suite = SuiteConfig::for_bins(cfg.seed, draws, generator.geometry().bins());
    let report = run_suite(&generator, generator.distributions(), &suite)?;
    for c in &report.checks {
        emit(
            out,
            json_mode,
            serde_json::to_value(c).expect("check serializes"),
            || c.to_string(),
        )?;
    }
    let failed = report.failures().count();
    emit(
        out,
        json_mode,
        json!({"command": "validate", "checks": report.checks.len(), "failed": failed, "draws": draws, "seed": cfg.seed}),
        || {
            format!(
                "{} checks, {} failed (n = {draws}, seed {})",
                report.checks.len(),
                failed,
                cfg.seed
            )
        },
    )?;
    if failed > 0 {
        return Err(CliError::ChecksFailed(failed));
    }
    Ok(())
}

fn dataset_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| io_err(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "pgd"))
            .collect();
        files.sort();
        Ok(files)
    } else if path.exists() {
        Ok(vec![path.to_path_buf()])
    } else {
        Err(io_err(path, "no such file or directory"))
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<DatasetBatch>, CliError> {
    let mut batches = Vec::new();
    for file in dataset_files(path)? {
        let f = File::open(&file).map_err(|e| io_err(&file, e))?;
        batches.extend(read_all(&mut BufReader::new(f)).map_err(|e| io_err(&file, e))?);
    }
    Ok(batches)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimateSummary {
    pub mae: f64,
    pub pacc: f64,
    pub mae50: f64,
    pub pacc50: f64,
    pub frames: usize,
    pub blocks: usize,
}

/// Frame- and block-level oracle metrics over a set of batches.
///
/// Blocks are runs of consecutive frames with identical scenario parameters,
/// cut into chunks of at most `block_len` frames.
pub fn evaluate_batches(
    batches: &[DatasetBatch],
    geom: &ArrayGeometry,
    classes: &[f64],
    r_ref: f64,
    block_len: usize,
) -> Result<(EstimateSummary, Vec<(i32, DoaDecision)>), CliError> {
    if block_len == 0 {
        return Err(CliError::Config("block length must be >= 1".into()));
    }
    let frames: Vec<(&DatasetBatch, usize)> = batches
        .iter()
        .flat_map(|b| (0..b.batch_size).map(move |i| (b, i)))
        .collect();
    if frames.is_empty() {
        return Err(CliError::Config("dataset contains no frames".into()));
    }
    if let Some(b) = batches
        .iter()
        .find(|b| b.bins != geom.bins() || b.mics != geom.num_mics())
    {
        return Err(CliError::Config(format!(
            "dataset is {} bins x {} mics but geometry is {} x {}",
            b.bins,
            b.mics,
            geom.bins(),
            geom.num_mics()
        )));
    }
    let table = build_steering(geom, classes, r_ref)?;

    let decisions: Vec<DoaDecision> = frames
        .par_iter()
        .map(|(b, i)| table.score_phases(b.sample_phases(*i)))
        .collect::<Result<_, _>>()?;
    let truths: Vec<f64> = frames.iter().map(|(b, i)| b.params[*i].theta).collect();
    let est: Vec<f64> = decisions.iter().map(|d| d.est_theta).collect();
    let frame_metrics = metrics_from_angles(&est, &truths)?;

    let mut block_est = Vec::new();
    let mut block_truth = Vec::new();
    let mut start = 0;
    while start < frames.len() {
        let params = &frames[start].0.params[frames[start].1];
        let mut end = start + 1;
        while end < frames.len()
            && end - start < block_len
            && frames[end].0.params[frames[end].1] == *params
        {
            end += 1;
        }
        block_est.push(table.block_decision(&decisions[start..end])?.est_theta);
        block_truth.push(params.theta);
        start = end;
    }
    let block_metrics = metrics_from_angles(&block_est, &block_truth)?;

    let summary = EstimateSummary {
        mae: frame_metrics.mae,
        pacc: frame_metrics.pacc,
        mae50: block_metrics.mae,
        pacc50: block_metrics.pacc,
        frames: frames.len(),
        blocks: block_est.len(),
    };
    let labelled = frames
        .iter()
        .map(|(b, i)| b.labels[*i])
        .zip(decisions)
        .collect();
    Ok((summary, labelled))
}

pub fn cmd_estimate(
    cfg: &RunConfig,
    args: &EstimateArgs,
    json_mode: bool,
    out: &mut dyn Write,
) -> Result<EstimateSummary, CliError> {
    let batches = load_dataset(&args.dataset)?;
    let geom = ArrayGeometry::from_spec(&cfg.generator.geometry)?;
    let (summary, frames) = evaluate_batches(
        &batches,
        &geom,
        &cfg.generator.distributions.theta_classes,
        args.r_ref,
        args.block_len,
    )?;
    if args.records {
        for (label, d) in &frames {
            let rec = json!({"class_true": label, "class_est": d.argmax_class, "scores": d.scores});
            writeln!(out, "{rec}").map_err(out_err)?;
        }
    }
    emit(
        out,
        json_mode,
        json!({
            "command": "estimate",
            "mae": summary.mae,
            "pacc": summary.pacc,
            "mae50": summary.mae50,
            "pacc50": summary.pacc50,
            "frames": summary.frames,
            "blocks": summary.blocks,
        }),
        || {
            format!(
                "frames {}: MAE {:.2} deg, PACC {:.2}%  |  blocks {}: MAE50 {:.2} deg, PACC50 {:.2}%",
                summary.frames,
                summary.mae,
                100.0 * summary.pacc,
                summary.blocks,
                summary.mae50,
                100.0 * summary.pacc50
            )
        },
    )?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub workers: usize,
    pub factorization_ms: f64,
    pub batches: u64,
    pub batch_size: usize,
    pub batch_ms: Vec<f64>,
    pub samples_per_sec: f64,
    pub per_sample_us: f64,
}

fn time_batches(
    generator: &Generator,
    seed: u64,
    batches: u64,
    batch_size: usize,
) -> Result<Vec<f64>, CliError> {
    (0..batches)
        .map(|b| {
            let t = Instant::now();
            let batch = generator.gen_batch(seed, b, batch_size)?;
            let ms = t.elapsed().as_secs_f64() * 1e3;
            drop(std::hint::black_box(batch));
            Ok(ms)
        })
        .collect()
}

pub fn cmd_bench(
    cfg: &RunConfig,
    workers: usize,
    scaling: bool,
    json_mode: bool,
    out: &mut dyn Write,
) -> Result<Vec<BenchReport>, CliError> {
    let geom = ArrayGeometry::from_spec(&cfg.generator.geometry)?;
    let t = Instant::now();
    let factors = factorize(&build_coherence(&geom))?;
    let factorization_ms = t.elapsed().as_secs_f64() * 1e3;
    let generator = Arc::new(Generator::with_factors(
        cfg.generator.clone(),
        geom,
        factors,
    )?);

    emit(
        out,
        json_mode,
        json!({"command": "bench", "factorization_ms": factorization_ms}),
        || format!("one-time factorization: {factorization_ms:.3} ms"),
    )?;

    let counts: Vec<usize> = if scaling {
        (1..=workers).collect()
    } else {
        vec![workers]
    };
    let mut reports = Vec::new();
    for w in counts {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let batch_ms =
            pool.install(|| time_batches(&generator, cfg.seed, cfg.batches, cfg.batch_size))?;
        let total_s: f64 = batch_ms.iter().sum::<f64>() / 1e3;
        let samples = cfg.batches as f64 * cfg.batch_size as f64;
        let report = BenchReport {
            workers: w,
            factorization_ms,
            batches: cfg.batches,
            batch_size: cfg.batch_size,
            samples_per_sec: samples / total_s,
            per_sample_us: total_s * 1e6 / samples,
            batch_ms,
        };
        emit(
            out,
            json_mode,
            serde_json::to_value(&report).expect("report serializes"),
            || {
                let mean_ms = report.batch_ms.iter().sum::<f64>() / report.batch_ms.len() as f64;
                format!(
                    "workers {:>2}: {:.0} samples/s, {:.2} us/sample, {:.2} ms per batch of {}",
                    report.workers,
                    report.samples_per_sec,
                    report.per_sample_us,
                    mean_ms,
                    report.batch_size
                )
            },
        )?;
        reports.push(report);
    }
    Ok(reports)
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if workers == 0 {
        let _ = writeln!(err, "configuration error: --workers must be >= 1");
        return EXIT_CONFIG;
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "configuration error: {e}");
            return EXIT_CONFIG;
        }
    };
    let json_mode = cli.json;
    let mut buf = Vec::new();
    let result = pool.install(|| -> Result<(), CliError> {
        let out: &mut dyn Write = &mut buf;
        match &cli.command {
            Command::Generate(a) => {
                let cfg = a.scenario.resolve(a.batches, a.batch_size, a.out.clone())?;
                cmd_generate(&cfg, a.dump_factors.as_deref(), json_mode, out).map(|_| ())
            }
            Command::Validate(a) => {
                let cfg = a.scenario.resolve(None, None, None)?;
                cmd_validate(&cfg, a.draws, json_mode, out)
            }
            Command::Estimate(a) => {
                let cfg = a.scenario.resolve(None, None, None)?;
                cmd_estimate(&cfg, a, json_mode, out).map(|_| ())
            }
            Command::Bench(a) => {
                let cfg = a
                    .scenario
                    .resolve(a.batches.or(Some(4)), a.batch_size, None)?;
                cmd_bench(&cfg, workers, a.scaling, json_mode, out).map(|_| ())
            }
        }
    });
    if let Err(e) = out.write_all(&buf).and_then(|_| out.flush()) {
        let _ = writeln!(err, "I/O error: writing report: {e}");
        return EXIT_IO;
    }
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(args).unwrap()
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn negative_ranges_parse() {
        let cli = parse(&[
            "phasegen",
            "generate",
            "--drr",
            "-9",
            "0",
            "--snr",
            "0",
            "30",
            "--classes",
            "0",
            "5",
            "180",
        ]);
        let Command::Generate(a) = cli.command else {
            panic!()
        };
        let cfg = a.scenario.resolve(a.batches, a.batch_size, a.out).unwrap();
        assert_eq!(cfg.generator.distributions.drr_range_db, [-9.0, 0.0]);
        assert_eq!(cfg.generator.distributions.num_classes(), 37);
    }

    #[test]
    fn defaults_resolve_to_training_setup() {
        let cfg = ScenarioArgs::default().resolve(None, None, None).unwrap();
        assert_eq!(cfg.generator, GeneratorConfig::default());
        assert_eq!(cfg.batch_size, 512);
        assert_eq!(cfg.batches, 1);
    }

    #[test]
    fn invalid_ranges_are_config_errors() {
        let args = ScenarioArgs {
            drr: Some(vec![0.0, -9.0]),
            ..Default::default()
        };
        assert_eq!(
            args.resolve(None, None, None).unwrap_err().exit_code(),
            EXIT_CONFIG
        );
        let args = ScenarioArgs {
            r: Some(vec![0.0, 3.0]),
            ..Default::default()
        };
        assert_eq!(
            args.resolve(None, None, None).unwrap_err().exit_code(),
            EXIT_CONFIG
        );
        assert_eq!(
            ScenarioArgs::default()
                .resolve(None, Some(0), None)
                .unwrap_err()
                .exit_code(),
            EXIT_CONFIG
        );
    }

    #[test]
    fn config_file_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("run.toml");
        std::fs::write(
            &toml_path,
            "snr = [5.0, 10.0]\ndrr = [-12.0, 3.0]\nseed = 11\nbatch_size = 64\n",
        )
        .unwrap();
        let args = ScenarioArgs {
            config: Some(toml_path),
            drr: Some(vec![-3.0, 0.0]),
            ..Default::default()
        };
        let cfg = args.resolve(None, None, None).unwrap();
        assert_eq!(cfg.generator.distributions.snr_range_db, [5.0, 10.0]);
        assert_eq!(cfg.generator.distributions.drr_range_db, [-3.0, 0.0]);
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.batch_size, 64);

        let json_path = dir.path().join("run.json");
        std::fs::write(
            &json_path,
            r#"{"geometry": {"fs": 8000, "dft_len": 64, "mics": [[0,0,0],[0.05,0,0],[0.1,0,0]]}}"#,
        )
        .unwrap();
        let cfg = ScenarioArgs {
            config: Some(json_path),
            ..Default::default()
        }
        .resolve(None, None, None)
        .unwrap();
        assert_eq!(cfg.generator.geometry.dft_len, 64);
        assert_eq!(cfg.generator.geometry.mics.len(), 3);

        let bad = dir.path().join("bad.json");
        std::fs::write(&bad, r#"{"snr_typo": [0, 1]}"#).unwrap();
        let err = ScenarioArgs {
            config: Some(bad),
            ..Default::default()
        }
        .resolve(None, None, None)
        .unwrap_err();
        assert_eq!(err.exit_code(), EXIT_CONFIG);

        let missing = ScenarioArgs {
            config: Some(dir.path().join("nope.json")),
            ..Default::default()
        };
        assert_eq!(
            missing.resolve(None, None, None).unwrap_err().exit_code(),
            EXIT_IO
        );
    }
}
