//! `posequat` command line: process, synth, score and bench.
//!
//! Exit codes: 0 success, 2 usage or unreadable input, 3 bad data,
//! 4 misaligned score inputs. Stdout carries JSONL only; diagnostics go to
//! stderr.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use posequat_core::estimation::{FilterConfig, DEFAULT_MAX_CONSECUTIVE_REJECTIONS};
use posequat_core::geometry::Vec3;
use posequat_core::intent::{
    score_predictions, IntentRecord, IntentTracker, TrackerConfig, DEFAULT_FRAME_HEIGHT_PX, DEFAULT_FRAME_WIDTH_PX,
    DEFAULT_HORIZON_MS, DEFAULT_RADIUS_PX,
};
use posequat_core::stream::{write_record, FrameReader, Pipeline, PipelineConfig, PoseRecord, PoseResult, ReadError};
use posequat_core::synth::{self, CenterPath, GroundTruth, SubjectModel, YawProfile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_ALIGNMENT: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Alignment(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Alignment(_) => EXIT_ALIGNMENT,
        }
    }
}

fn io_error(context: impl std::fmt::Display, e: io::Error) -> CliError {
    CliError::Usage(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(
    name = "posequat",
    version,
    about = "Shoulder landmarks to quaternion and orientation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run landmark frames through the orientation pipeline.
    Process(ProcessArgs),
    /// Generate a synthetic shoulder stream with ground truth.
    Synth(SynthArgs),
    /// Compare pipeline output with ground truth.
    Score(ScoreArgs),
    /// Time the pipeline on a generated stream.
    Bench(BenchArgs),
}

fn parse_unit_interval(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn parse_non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be non-negative"))
    }
}

fn parse_sweep(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected FROM:TO in degrees")?;
    let from: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let to: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if from.is_finite() && to.is_finite() {
        Ok((from, to))
    } else {
        Err("sweep bounds must be finite".into())
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected X,Y")?;
    let x: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let y: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if x.is_finite() && y.is_finite() {
        Ok((x, y))
    } else {
        Err("values must be finite".into())
    }
}

#[derive(Debug, Args)]
pub struct ProcessArgs {
    /// Landmark JSONL, `-` for stdin.
    #[arg(long, default_value = "-")]
    pub input: String,
    /// Pose result JSONL, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: String,
    #[arg(long, default_value_t = posequat_core::stream::DEFAULT_MIN_VISIBILITY, value_parser = parse_unit_interval)]
    pub min_visibility: f64,
    /// Measurement uncertainty of the angle filter.
    #[arg(long, default_value_t = posequat_core::estimation::DEFAULT_MEASUREMENT_NOISE, value_parser = parse_positive)]
    pub kalman_r: f64,
    /// Readings further than this many degrees from the recent mean are replaced.
    #[arg(long, default_value_t = posequat_core::estimation::DEFAULT_VIABILITY_THRESHOLD_DEG, value_parser = parse_positive)]
    pub viability_threshold: f64,
    /// Consecutive rejections before the filter re-seeds; 0 never re-seeds.
    #[arg(long, default_value_t = DEFAULT_MAX_CONSECUTIVE_REJECTIONS)]
    pub max_rejections: usize,
    /// Report orientations wrapped into (-180, 180].
    #[arg(long)]
    pub normalize_angle: bool,
    /// Run intent classification; needs --intent-output.
    #[arg(long, requires = "intent_output")]
    pub intent: bool,
    #[arg(long)]
    pub intent_output: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FRAME_WIDTH_PX, value_parser = parse_positive)]
    pub frame_width: f64,
    #[arg(long, default_value_t = DEFAULT_FRAME_HEIGHT_PX, value_parser = parse_positive)]
    pub frame_height: f64,
    /// Also write frame_index, raw theta, raw and filtered angle as CSV.
    #[arg(long)]
    pub emit_csv: Option<PathBuf>,
}

impl ProcessArgs {
    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            min_visibility: self.min_visibility,
            filter: FilterConfig {
                measurement_noise: self.kalman_r,
                viability_threshold_deg: self.viability_threshold,
                max_consecutive_rejections: self.max_rejections,
                ..FilterConfig::default()
            },
            normalize_angle: self.normalize_angle,
        }
    }

    fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig {
            frame_width_px: self.frame_width,
            frame_height_px: self.frame_height,
            ..TrackerConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Linear yaw sweep FROM:TO degrees over the whole duration.
    #[arg(long, value_parser = parse_sweep, conflicts_with = "yaw")]
    pub yaw_sweep: Option<(f64, f64)>,
    /// Constant yaw in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub yaw: Option<f64>,
    #[arg(long, default_value_t = 24.0, value_parser = parse_positive)]
    pub fps: f64,
    /// Seconds.
    #[arg(long, default_value_t = 10.0, value_parser = parse_positive)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gaussian landmark noise σ, normalized units.
    #[arg(long, default_value_t = 0.0, value_parser = parse_non_negative)]
    pub noise: f64,
    #[arg(long, default_value_t = synth::DEFAULT_SHOULDER_HALF_WIDTH, value_parser = parse_positive)]
    pub half_width: f64,
    /// Shoulder midpoint velocity VX,VY in normalized units per second.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub walk_velocity: Option<(f64, f64)>,
    /// Landmark JSONL, `-` for stdout.
    #[arg(long, default_value = "-")]
    pub output: String,
    /// Ground-truth JSONL. Defaults to `<output stem>.truth.jsonl` next to a file output.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Pose result JSONL from `process`.
    #[arg(long)]
    pub results: PathBuf,
    /// Ground-truth JSONL from `synth`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Intent JSONL from `process --intent`.
    #[arg(long)]
    pub intent: Option<PathBuf>,
    /// Leading results ignored while the filter settles.
    #[arg(long, default_value_t = 10)]
    pub settle: usize,
    #[arg(long, default_value_t = DEFAULT_RADIUS_PX, value_parser = parse_positive)]
    pub radius: f64,
    #[arg(long, default_value_t = DEFAULT_HORIZON_MS, value_parser = parse_positive)]
    pub horizon_ms: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    pub frames: u64,
    #[arg(long, default_value_t = 24.0, value_parser = parse_positive)]
    pub fps: f64,
    #[arg(long, default_value_t = synth::NOISY_SIGMA, value_parser = parse_non_negative)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses `args` and runs the command, returning the exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Process(a) => cmd_process(a, stdin, stdout, stderr).map(|_| ()),
        Command::Synth(a) => cmd_synth(a, stdout, stderr),
        Command::Score(a) => cmd_score(a, stdout, stderr).map(|_| ()),
        Command::Bench(a) => cmd_bench(a, stdout, stderr).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn open_output<'a>(path: &str, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    if path == "-" {
        Ok(Box::new(stdout))
    } else {
        let f = File::create(path).map_err(|e| io_error(format!("cannot create {path}"), e))?;
        Ok(Box::new(BufWriter::new(f)))
    }
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| io_error(format!("cannot create {}", path.display()), e))
}

/// Latency summary in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
}

impl LatencyStats {
    pub fn from_durations(samples: &[Duration]) -> Option<Self> {
        if samples.is_empty() {
            return None;
        }
        let mut us: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e6).collect();
        us.sort_by(f64::total_cmp);
        let mean_us = us.iter().sum::<f64>() / us.len() as f64;
        // nearest-rank percentile
        let rank = ((0.95 * us.len() as f64).ceil() as usize).clamp(1, us.len());
        Some(Self {
            mean_us,
            p95_us: us[rank - 1],
            max_us: us[us.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSummary {
    pub frames_in: usize,
    pub results_out: usize,
    pub latency: Option<LatencyStats>,
}

pub fn cmd_process(
    args: &ProcessArgs,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<ProcessSummary, CliError> {
    let input: Box<dyn BufRead + '_> = if args.input == "-" {
        Box::new(stdin)
    } else {
        let f = File::open(&args.input).map_err(|e| io_error(format!("cannot read {}", args.input), e))?;
        Box::new(BufReader::new(f))
    };
    let mut intent_out = match (&args.intent, &args.intent_output) {
        (true, Some(path)) => Some(create_file(path)?),
        _ => None,
    };
    let mut csv_out = match &args.emit_csv {
        Some(path) => {
            let mut w = csv::Writer::from_writer(create_file(path)?);
            w.write_record(["frame_index", "theta_rad", "raw_orientation_deg", "orientation_deg"])
                .map_err(|e| CliError::Usage(format!("csv: {e}")))?;
            Some(w)
        }
        None => None,
    };
    let mut out = open_output(&args.output, stdout)?;

    let mut pipeline = Pipeline::new(args.pipeline_config());
    let mut tracker = IntentTracker::new(args.tracker_config());
    let mut latencies = Vec::new();
    let mut frames_in = 0;
    let write_err = |e: io::Error| io_error("write failed", e);

    for item in FrameReader::new(input) {
        let frame = item.map_err(|e| match e {
            ReadError::Parse { .. } => CliError::Data(e.to_string()),
            ReadError::Io(io) => io_error("read failed", io),
        })?;
        frames_in += 1;
        let Some(result) = pipeline.push(&frame).map_err(|e| CliError::Data(e.to_string()))? else {
            continue;
        };
        latencies.push(result.latency);
        write_record(&mut out, &result.record()).map_err(write_err)?;
        if let Some(w) = intent_out.as_mut() {
            if let Some(record) = tracker.push(&result).map_err(|e| CliError::Data(e.to_string()))? {
                serde_json::to_writer(&mut *w, &record).map_err(|e| write_err(e.into()))?;
                w.write_all(b"\n").map_err(write_err)?;
            }
        }
        if let Some(w) = csv_out.as_mut() {
            write_csv_row(w, &result).map_err(|e| CliError::Usage(format!("csv: {e}")))?;
        }
    }
    out.flush().map_err(write_err)?;
    if let Some(w) = intent_out.as_mut() {
        w.flush().map_err(write_err)?;
    }
    if let Some(w) = csv_out.as_mut() {
        w.flush().map_err(write_err)?;
    }

    let summary = ProcessSummary {
        frames_in,
        results_out: latencies.len(),
        latency: LatencyStats::from_durations(&latencies),
    };
    let _ = match summary.latency {
        Some(l) => writeln!(
            stderr,
            "frames in: {}, results out: {}, latency mean {:.2} us, p95 {:.2} us",
            summary.frames_in, summary.results_out, l.mean_us, l.p95_us
        ),
        None => writeln!(stderr, "frames in: {}, results out: 0", summary.frames_in),
    };
    Ok(summary)
}

fn write_csv_row<W: Write>(w: &mut csv::Writer<W>, r: &PoseResult) -> csv::Result<()> {
    w.write_record([
        r.frame_index.to_string(),
        r.theta_raw.value().to_string(),
        r.orientation_raw.value().to_string(),
        r.orientation_deg.value().to_string(),
    ])
}

fn truth_path_for(output: &str) -> Option<PathBuf> {
    if output == "-" {
        return None;
    }
    let p = Path::new(output);
    let stem = p.file_stem()?.to_string_lossy().into_owned();
    Some(p.with_file_name(format!("{stem}.truth.jsonl")))
}

pub fn subject_from(args: &SynthArgs) -> SubjectModel {
    let yaw = match (args.yaw_sweep, args.yaw) {
        (Some((from_deg, to_deg)), _) => YawProfile::Sweep {
            from_deg,
            to_deg,
            over_s: args.duration,
        },
        (None, Some(deg)) => YawProfile::Constant(deg),
        (None, None) => YawProfile::Constant(0.0),
    };
    let defaults = SubjectModel::default();
    SubjectModel {
        shoulder_half_width: args.half_width,
        center: match args.walk_velocity {
            Some((vx, vy)) => CenterPath {
                start: defaults.center.start,
                velocity: Vec3::new(vx, vy, 0.0),
            },
            None => defaults.center,
        },
        yaw,
        noise_sigma: args.noise,
    }
}

pub fn cmd_synth(args: &SynthArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if let Some(yaw) = args.yaw {
        if !yaw.is_finite() {
            return Err(CliError::Usage("--yaw must be finite".into()));
        }
    }
    let stream = synth::generate(&subject_from(args), args.fps, args.duration, args.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let write_err = |e: io::Error| io_error("write failed", e);

    let mut out = open_output(&args.output, stdout)?;
    for f in &stream.frames {
        writeln!(out, "{}", f.to_json_line()).map_err(write_err)?;
    }
    out.flush().map_err(write_err)?;

    match args.truth.clone().or_else(|| truth_path_for(&args.output)) {
        Some(path) => {
            let mut w = create_file(&path)?;
            for gt in &stream.truth {
                serde_json::to_writer(&mut w, gt).map_err(|e| write_err(e.into()))?;
                w.write_all(b"\n").map_err(write_err)?;
            }
            w.flush().map_err(write_err)?;
            let _ = writeln!(
                stderr,
                "wrote {} frames, ground truth in {}",
                stream.frames.len(),
                path.display()
            );
        }
        None => {
            let _ = writeln!(
                stderr,
                "wrote {} frames; no ground truth (pass --truth)",
                stream.frames.len()
            );
        }
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let f = File::open(path).map_err(|e| io_error(format!("cannot read {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| io_error(format!("cannot read {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// Least-squares `y ≈ slope·x + intercept`.
pub fn fit_affine(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mean_deg: f64,
    pub mean_abs_deg: f64,
    pub max_abs_deg: f64,
}

impl ErrorStats {
    pub fn from_errors(errors: &[f64]) -> Option<Self> {
        if errors.is_empty() {
            return None;
        }
        let n = errors.len() as f64;
        Some(Self {
            mean_deg: errors.iter().sum::<f64>() / n,
            mean_abs_deg: errors.iter().map(|e| e.abs()).sum::<f64>() / n,
            max_abs_deg: errors.iter().fold(0.0, |m, e| m.max(e.abs())),
        })
    }
}

/// Maps orientations onto yaw with a fitted affine calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineCalibration {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub scored: usize,
    pub settle: usize,
    /// Orientation strictly increasing or strictly decreasing with yaw.
    pub monotonic: bool,
    /// `orientation − yaw` as reported.
    pub raw: Option<ErrorStats>,
    pub calibration: Option<AffineCalibration>,
    /// `calibrated orientation − yaw`.
    pub calibrated: Option<ErrorStats>,
    pub intent_predictions: Option<usize>,
    pub intent_hit_fraction: Option<f64>,
}

/// Orientation vs. yaw strictly monotonic in one direction, after sorting by yaw.
pub fn is_strictly_monotonic(pairs: &[(f64, f64)]) -> bool {
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let inc = sorted.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 > w[0].1);
    let dec = sorted.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 < w[0].1);
    inc || dec
}

/// Orientation accuracy of `results` against `truth`, skipping `settle` results.
pub fn score_orientation(
    results: &[PoseRecord],
    truth: &[GroundTruth],
    settle: usize,
) -> Result<ScoreReport, CliError> {
    let yaw: HashMap<u64, f64> = truth.iter().map(|g| (g.frame_index, g.yaw_deg)).collect();
    let mut pairs = Vec::with_capacity(results.len());
    for r in results {
        let y = yaw
            .get(&r.frame_index)
            .ok_or_else(|| CliError::Alignment(format!("frame {} has no ground truth", r.frame_index)))?;
        pairs.push((*y, r.orientation_deg));
    }
    let kept = &pairs[settle.min(pairs.len())..];
    let raw: Vec<f64> = kept.iter().map(|(y, o)| o - y).collect();
    let (orient, yaws): (Vec<f64>, Vec<f64>) = kept.iter().map(|(y, o)| (*o, *y)).unzip();
    let calibration = fit_affine(&orient, &yaws).map(|(slope, intercept)| AffineCalibration { slope, intercept });
    let calibrated = calibration.and_then(|c| {
        let errs: Vec<f64> = kept.iter().map(|(y, o)| c.slope * o + c.intercept - y).collect();
        ErrorStats::from_errors(&errs)
    });
    Ok(ScoreReport {
        scored: kept.len(),
        settle,
        monotonic: is_strictly_monotonic(kept),
        raw: ErrorStats::from_errors(&raw),
        calibration,
        calibrated,
        intent_predictions: None,
        intent_hit_fraction: None,
    })
}

type Points = Vec<(f64, f64)>;

/// Pairs each prediction with the record closest to its target time,
/// within half the median record spacing.
pub fn intent_pairs(records: &[IntentRecord], horizon_ms: f64) -> (Points, Points) {
    let times: Vec<f64> = records.iter().map(|r| r.timestamp_ms).collect();
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return (Vec::new(), Vec::new());
    }
    gaps.sort_by(f64::total_cmp);
    let tolerance = 0.5 * gaps[gaps.len() / 2];
    let (mut predicted, mut actual) = (Vec::new(), Vec::new());
    for r in records {
        let target = r.timestamp_ms + horizon_ms;
        let i = times.partition_point(|t| *t < target);
        let best = [i.checked_sub(1), Some(i)]
            .into_iter()
            .flatten()
            .filter(|&j| j < times.len())
            .min_by(|&a, &b| (times[a] - target).abs().total_cmp(&(times[b] - target).abs()));
        if let Some(j) = best {
            if (times[j] - target).abs() <= tolerance {
                predicted.push((r.predicted_u, r.predicted_v));
                actual.push((records[j].anchor_u, records[j].anchor_v));
            }
        }
    }
    (predicted, actual)
}

pub fn cmd_score(args: &ScoreArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<ScoreReport, CliError> {
    let results: Vec<PoseRecord> = read_jsonl(&args.results)?;
    let truth: Vec<GroundTruth> = read_jsonl(&args.truth)?;
    let mut report = score_orientation(&results, &truth, args.settle)?;

    if let Some(path) = &args.intent {
        let records: Vec<IntentRecord> = read_jsonl(path)?;
        let (predicted, actual) = intent_pairs(&records, args.horizon_ms);
        let fraction =
            score_predictions(&predicted, &actual, args.radius).map_err(|e| CliError::Data(e.to_string()))?;
        report.intent_predictions = Some(predicted.len());
        report.intent_hit_fraction = Some(fraction);
    }

    let line = serde_json::to_string(&report).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(stdout, "{line}").map_err(|e| io_error("write failed", e))?;
    if let (Some(raw), Some(cal)) = (report.raw, report.calibrated) {
        let _ = writeln!(
            stderr,
            "scored {} frames (settle {}): raw max |err| {:.3} deg, calibrated max |err| {:.3} deg, mean |err| {:.3} deg, monotonic {}",
            report.scored, report.settle, raw.max_abs_deg, cal.max_abs_deg, cal.mean_abs_deg, report.monotonic
        );
    }
    if let Some(f) = report.intent_hit_fraction {
        let _ = writeln!(stderr, "intent: {:.3} of predictions within {} px", f, args.radius);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub frames: u64,
    pub results: usize,
    pub mean_us: f64,
    pub p95_us: f64,
    pub max_us: f64,
}

pub fn cmd_bench(args: &BenchArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<BenchReport, CliError> {
    if args.frames == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    let duration = args.frames as f64 / args.fps;
    let subject = SubjectModel {
        yaw: YawProfile::Sweep {
            from_deg: 0.0,
            to_deg: 180.0,
            over_s: duration,
        },
        noise_sigma: args.noise,
        ..SubjectModel::default()
    };
    let stream =
        synth::generate(&subject, args.fps, duration, args.seed).map_err(|e| CliError::Usage(e.to_string()))?;
    // go through the wire format so the frames are what `process` would see
    let text: String = stream.frames.iter().map(|f| f.to_json_line() + "\n").collect();
    let frames: Vec<_> = FrameReader::new(text.as_bytes())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut pipeline = Pipeline::new(PipelineConfig::default());
    let mut latencies = Vec::with_capacity(frames.len());
    for f in &frames {
        if let Some(r) = pipeline.push(f).map_err(|e| CliError::Data(e.to_string()))? {
            latencies.push(r.latency);
        }
    }
    let stats = LatencyStats::from_durations(&latencies).ok_or_else(|| CliError::Data("no results".into()))?;
    let report = BenchReport {
        frames: frames.len() as u64,
        results: latencies.len(),
        mean_us: stats.mean_us,
        p95_us: stats.p95_us,
        max_us: stats.max_us,
    };
    let line = serde_json::to_string(&report).map_err(|e| CliError::Data(e.to_string()))?;
    writeln!(stdout, "{line}").map_err(|e| io_error("write failed", e))?;
    let _ = writeln!(
        stderr,
        "{} frames: mean {:.3} us, p95 {:.3} us, max {:.3} us per frame",
        report.frames, report.mean_us, report.p95_us, report.max_us
    );
    Ok(report)
}
