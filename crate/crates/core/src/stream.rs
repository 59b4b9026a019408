//! Landmark frames in, pose results out.
//!
//! Wire format is JSON Lines in both directions. Input lines carry one
//! [`LandmarkFrame`]; output lines carry one [`PoseRecord`] per frame in
//! which both shoulders were detected.

use std::io::{self, BufRead, Write};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::{EstimationError, FilterConfig, OrientationDegrees, OrientationFilter, ThetaRadians, Update};
use crate::geometry::{build_rotation_matrix, matrix_to_quaternion, Quaternion, Vec3};

pub const LEFT_SHOULDER: &str = "LEFT_SHOULDER";
pub const RIGHT_SHOULDER: &str = "RIGHT_SHOULDER";
pub const DEFAULT_MIN_VISIBILITY: f64 = 0.5;

/// BlazePose topology, in model output order.
pub const LANDMARK_NAMES: [&str; 33] = [
    "NOSE",
    "LEFT_EYE_INNER",
    "LEFT_EYE",
    "LEFT_EYE_OUTER",
    "RIGHT_EYE_INNER",
    "RIGHT_EYE",
    "RIGHT_EYE_OUTER",
    "LEFT_EAR",
    "RIGHT_EAR",
    "MOUTH_LEFT",
    "MOUTH_RIGHT",
    "LEFT_SHOULDER",
    "RIGHT_SHOULDER",
    "LEFT_ELBOW",
    "RIGHT_ELBOW",
    "LEFT_WRIST",
    "RIGHT_WRIST",
    "LEFT_PINKY",
    "RIGHT_PINKY",
    "LEFT_INDEX",
    "RIGHT_INDEX",
    "LEFT_THUMB",
    "RIGHT_THUMB",
    "LEFT_HIP",
    "RIGHT_HIP",
    "LEFT_KNEE",
    "RIGHT_KNEE",
    "LEFT_ANKLE",
    "RIGHT_ANKLE",
    "LEFT_HEEL",
    "RIGHT_HEEL",
    "LEFT_FOOT_INDEX",
    "RIGHT_FOOT_INDEX",
];

pub fn is_known_landmark(name: &str) -> bool {
    LANDMARK_NAMES.contains(&name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub visibility: f64,
}

impl Landmark {
    pub fn new(name: impl Into<String>, position: Vec3, visibility: f64) -> Self {
        Self {
            name: name.into(),
            x: position.x,
            y: position.y,
            z: position.z,
            visibility,
        }
    }

    pub fn position(&self) -> Vec3 {
        Vec3::new(self.x, self.y, self.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkFrame {
    pub frame_index: u64,
    pub timestamp_ms: f64,
    pub landmarks: Vec<Landmark>,
}

impl LandmarkFrame {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("frame serialization is infallible")
    }
}

/// What is wrong with a single input line.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("{field} missing")]
    Missing { field: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("malformed JSON: {0}")]
    Json(String),
}

#[derive(Debug, Error)]
pub enum ReadError {
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: FrameError,
    },
    #[error("read failed: {0}")]
    Io(#[from] io::Error),
}

#[derive(Deserialize)]
struct RawFrame {
    frame_index: Option<u64>,
    timestamp_ms: Option<f64>,
    landmarks: Option<Vec<RawLandmark>>,
}

#[derive(Deserialize)]
struct RawLandmark {
    name: Option<String>,
    x: Option<f64>,
    y: Option<f64>,
    z: Option<f64>,
    visibility: Option<f64>,
}

fn required<T>(value: Option<T>, field: impl Into<String>) -> Result<T, FrameError> {
    value.ok_or_else(|| FrameError::Missing { field: field.into() })
}

fn finite(value: f64, field: String) -> Result<f64, FrameError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(FrameError::Invalid {
            field,
            message: "not a finite number".into(),
        })
    }
}

/// Decodes one JSONL line. Unknown fields are ignored; unknown landmark
/// names are kept.
pub fn parse_frame(line: &str) -> Result<LandmarkFrame, FrameError> {
    let de = &mut serde_json::Deserializer::from_str(line);
    let raw: RawFrame = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() && path != "." {
            FrameError::Invalid {
                field: path,
                message: inner.to_string(),
            }
        } else {
            FrameError::Json(inner.to_string())
        }
    })?;

    let frame_index = required(raw.frame_index, "frame_index")?;
    let timestamp_ms = finite(required(raw.timestamp_ms, "timestamp_ms")?, "timestamp_ms".into())?;
    let raw_landmarks = required(raw.landmarks, "landmarks")?;

    let mut landmarks = Vec::with_capacity(raw_landmarks.len());
    for (i, lm) in raw_landmarks.into_iter().enumerate() {
        let field = |name: &str| format!("landmarks[{i}].{name}");
        let visibility = finite(required(lm.visibility, field("visibility"))?, field("visibility"))?;
        if !(0.0..=1.0).contains(&visibility) {
            return Err(FrameError::Invalid {
                field: field("visibility"),
                message: format!("{visibility} outside [0, 1]"),
            });
        }
        landmarks.push(Landmark {
            name: required(lm.name, field("name"))?,
            x: finite(required(lm.x, field("x"))?, field("x"))?,
            y: finite(required(lm.y, field("y"))?, field("y"))?,
            z: finite(required(lm.z, field("z"))?, field("z"))?,
            visibility,
        });
    }

    Ok(LandmarkFrame {
        frame_index,
        timestamp_ms,
        landmarks,
    })
}

/// Iterator over the frames of a JSONL source. Blank lines are skipped.
pub struct FrameReader<R> {
    inner: R,
    line: usize,
    buf: String,
}

impl<R: BufRead> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            line: 0,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for FrameReader<R> {
    type Item = Result<LandmarkFrame, ReadError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(e.into())),
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            return Some(parse_frame(text).map_err(|source| ReadError::Parse {
                line: self.line,
                source,
            }));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShoulderPair {
    pub left: Vec3,
    pub right: Vec3,
    pub visibility: f64,
}

impl ShoulderPair {
    pub fn midpoint(&self) -> Vec3 {
        (self.left + self.right) * 0.5
    }
}

/// The shoulder pair to track, if the frame has one.
///
/// Frames holding several people list each person's landmarks in turn, so
/// the n-th left shoulder is paired with the n-th right shoulder. Among the
/// pairs clearing `min_visibility` on both sides, the one with the highest
/// mean visibility wins; ties go to the earlier pair.
pub fn select_shoulders(frame: &LandmarkFrame, min_visibility: f64) -> Option<ShoulderPair> {
    let lefts = frame.landmarks.iter().filter(|l| l.name == LEFT_SHOULDER);
    let rights = frame.landmarks.iter().filter(|l| l.name == RIGHT_SHOULDER);
    let mut best: Option<ShoulderPair> = None;
    for (l, r) in lefts.zip(rights) {
        if l.visibility < min_visibility || r.visibility < min_visibility {
            continue;
        }
        let visibility = 0.5 * (l.visibility + r.visibility);
        if best.is_none_or(|b| visibility > b.visibility) {
            best = Some(ShoulderPair {
                left: l.position(),
                right: r.position(),
                visibility,
            });
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub min_visibility: f64,
    pub filter: FilterConfig,
    /// Report orientations wrapped into (−180, 180].
    pub normalize_angle: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            min_visibility: DEFAULT_MIN_VISIBILITY,
            filter: FilterConfig::default(),
            normalize_angle: false,
        }
    }
}

/// Output for one frame with a detected shoulder pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseResult {
    pub frame_index: u64,
    pub timestamp_ms: f64,
    pub shoulders: ShoulderPair,
    pub quaternion: Quaternion,
    pub theta_raw: ThetaRadians,
    /// Orientation before filtering.
    pub orientation_raw: OrientationDegrees,
    /// Filtered orientation.
    pub orientation_deg: OrientationDegrees,
    pub update: Update,
    /// Filter covariance after this frame.
    pub covariance: f64,
    /// Time spent in the frame math, parsing excluded.
    pub latency: Duration,
}

impl PoseResult {
    pub fn record(&self) -> PoseRecord {
        PoseRecord {
            frame_index: self.frame_index,
            quaternion: self.quaternion,
            theta_rad: self.theta_raw.value(),
            orientation_deg: self.orientation_deg.value(),
            latency_us: self.latency.as_micros() as u64,
        }
    }
}

/// Serialized form of a [`PoseResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub frame_index: u64,
    pub quaternion: Quaternion,
    pub theta_rad: f64,
    pub orientation_deg: f64,
    pub latency_us: u64,
}

pub fn write_record<W: Write>(out: &mut W, record: &PoseRecord) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("frame_index {got} does not follow {previous}")]
    OutOfOrder { previous: u64, got: u64 },
    #[error("frame {frame_index}: timestamp {got} ms precedes {previous} ms")]
    TimestampDecreasing { frame_index: u64, previous: f64, got: f64 },
    #[error("frame {frame_index}: {source}")]
    Estimation {
        frame_index: u64,
        #[source]
        source: EstimationError,
    },
}

/// Per-frame loop state for one subject.
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: PipelineConfig,
    filter: OrientationFilter,
    last: Option<(u64, f64)>,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Self {
            filter: OrientationFilter::new(config.filter),
            config,
            last: None,
        }
    }

    pub fn filter(&self) -> &OrientationFilter {
        &self.filter
    }

    /// Feeds one frame. Frames without a usable shoulder pair advance the
    /// filter's fallback path and produce nothing.
    pub fn push(&mut self, frame: &LandmarkFrame) -> Result<Option<PoseResult>, StreamError> {
        if let Some((previous, previous_ts)) = self.last {
            if frame.frame_index <= previous {
                return Err(StreamError::OutOfOrder {
                    previous,
                    got: frame.frame_index,
                });
            }
            if frame.timestamp_ms < previous_ts {
                return Err(StreamError::TimestampDecreasing {
                    frame_index: frame.frame_index,
                    previous: previous_ts,
                    got: frame.timestamp_ms,
                });
            }
        }
        self.last = Some((frame.frame_index, frame.timestamp_ms));

        let start = Instant::now();
        let Some(shoulders) = select_shoulders(frame, self.config.min_visibility) else {
            self.filter.step_missing();
            return Ok(None);
        };
        let rotation = build_rotation_matrix(shoulders.left, shoulders.right);
        let quaternion = matrix_to_quaternion(&rotation);
        let reading = self
            .filter
            .step(&quaternion)
            .map_err(|source| StreamError::Estimation {
                frame_index: frame.frame_index,
                source,
            })?;
        let latency = start.elapsed();

        let orientation_deg = if self.config.normalize_angle {
            reading.filtered.normalized()
        } else {
            reading.filtered
        };
        Ok(Some(PoseResult {
            frame_index: frame.frame_index,
            timestamp_ms: frame.timestamp_ms,
            shoulders,
            quaternion,
            theta_raw: reading.theta,
            orientation_raw: reading.raw,
            orientation_deg,
            update: reading.update,
            covariance: self.filter.state().covariance(),
            latency,
        }))
    }
}

pub fn process_stream<'a, I>(frames: I, config: PipelineConfig) -> Result<Vec<PoseResult>, StreamError>
where
    I: IntoIterator<Item = &'a LandmarkFrame>,
{
    let mut pipeline = Pipeline::new(config);
    let mut out = Vec::new();
    for frame in frames {
        if let Some(result) = pipeline.push(frame)? {
            out.push(result);
        }
    }
    Ok(out)
}
