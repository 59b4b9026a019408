//! Fuzzy pedestrian intent from a short trajectory window.
//!
//! A constant-velocity least-squares fit over the window gives the pixel
//! velocity and the extrapolated position. Velocity direction, speed and
//! the latest orientation are combined through triangular memberships.
//!
//! Angles share one layout in image coordinates (u right, v down):
//! 0° is frame right, 90° is frame bottom (towards the camera), 180° is
//! frame left and 270° is frame top (away from the camera).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::PoseResult;

pub const DEFAULT_WINDOW_SECONDS: f64 = 2.0;
pub const DEFAULT_FPS: f64 = 24.0;
pub const DEFAULT_HORIZON_MS: f64 = 2000.0;
pub const DEFAULT_RADIUS_PX: f64 = 50.0;
pub const DEFAULT_FRAME_WIDTH_PX: f64 = 1920.0;
pub const DEFAULT_FRAME_HEIGHT_PX: f64 = 1080.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntentError {
    #[error("need at least 2 samples, have {have}")]
    InsufficientData { have: usize },
    #[error("sequence lengths differ: {predicted} predicted vs {actual} actual")]
    LengthMismatch { predicted: usize, actual: usize },
    #[error("timestamp {got} ms precedes newest sample {newest} ms")]
    NonIncreasingTimestamp { newest: f64, got: f64 },
    #[error("sample is not finite")]
    NonFinite,
    #[error("frame width {0} px is not positive")]
    InvalidFrameWidth(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub timestamp_ms: f64,
    pub u: f64,
    pub v: f64,
    pub orientation_deg: f64,
}

/// Fixed-capacity window; the oldest sample is evicted first.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    capacity: usize,
    samples: VecDeque<TrajectorySample>,
}

impl Default for TrajectoryWindow {
    fn default() -> Self {
        Self::for_duration(DEFAULT_WINDOW_SECONDS, DEFAULT_FPS)
    }
}

impl TrajectoryWindow {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(2);
        Self {
            capacity,
            samples: VecDeque::with_capacity(capacity),
        }
    }

    pub fn for_duration(window_seconds: f64, fps: f64) -> Self {
        Self::new((window_seconds * fps).round() as usize)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl ExactSizeIterator<Item = &TrajectorySample> {
        self.samples.iter()
    }

    pub fn newest(&self) -> Option<&TrajectorySample> {
        self.samples.back()
    }

    /// Appends a sample. A sample carrying the newest timestamp replaces
    /// the newest sample instead.
    pub fn push(&mut self, sample: TrajectorySample) -> Result<(), IntentError> {
        if ![sample.timestamp_ms, sample.u, sample.v, sample.orientation_deg]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(IntentError::NonFinite);
        }
        if let Some(newest) = self.samples.back_mut() {
            if sample.timestamp_ms < newest.timestamp_ms {
                return Err(IntentError::NonIncreasingTimestamp {
                    newest: newest.timestamp_ms,
                    got: sample.timestamp_ms,
                });
            }
            if sample.timestamp_ms == newest.timestamp_ms {
                *newest = sample;
                return Ok(());
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

/// Least-squares constant-velocity model, centred on the mean timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionFit {
    pub t_mean_ms: f64,
    pub u_mean: f64,
    pub v_mean: f64,
    /// Pixels per millisecond.
    pub du_dt: f64,
    pub dv_dt: f64,
}

impl MotionFit {
    pub fn at(&self, timestamp_ms: f64) -> (f64, f64) {
        let dt = timestamp_ms - self.t_mean_ms;
        (self.u_mean + self.du_dt * dt, self.v_mean + self.dv_dt * dt)
    }

    pub fn speed_px_per_s(&self) -> f64 {
        1000.0 * self.du_dt.hypot(self.dv_dt)
    }

    /// Direction of motion in the module's angle layout, degrees in [0, 360).
    pub fn heading_deg(&self) -> f64 {
        self.dv_dt.atan2(self.du_dt).to_degrees().rem_euclid(360.0)
    }
}

pub fn fit_motion(window: &TrajectoryWindow) -> Result<MotionFit, IntentError> {
    let n = window.len();
    if n < 2 {
        return Err(IntentError::InsufficientData { have: n });
    }
    let nf = n as f64;
    let (mut t_mean, mut u_mean, mut v_mean) = (0.0, 0.0, 0.0);
    for s in window.samples() {
        t_mean += s.timestamp_ms;
        u_mean += s.u;
        v_mean += s.v;
    }
    t_mean /= nf;
    u_mean /= nf;
    v_mean /= nf;

    let (mut stt, mut stu, mut stv) = (0.0, 0.0, 0.0);
    for s in window.samples() {
        let dt = s.timestamp_ms - t_mean;
        stt += dt * dt;
        stu += dt * (s.u - u_mean);
        stv += dt * (s.v - v_mean);
    }
    // timestamps are strictly increasing, so stt > 0
    Ok(MotionFit {
        t_mean_ms: t_mean,
        u_mean,
        v_mean,
        du_dt: stu / stt,
        dv_dt: stv / stt,
    })
}

/// Position `horizon_ms` past the newest sample under the fitted motion.
pub fn extrapolate(window: &TrajectoryWindow, horizon_ms: f64) -> Result<(f64, f64), IntentError> {
    let fit = fit_motion(window)?;
    let newest = window.newest().expect("fit_motion checked length");
    Ok(fit.at(newest.timestamp_ms + horizon_ms))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntentLabel {
    CrossingLeft,
    CrossingRight,
    Approaching,
    Receding,
    Stationary,
}

impl IntentLabel {
    /// Declaration order, also the tie-break order.
    pub const ALL: [IntentLabel; 5] = [
        IntentLabel::CrossingLeft,
        IntentLabel::CrossingRight,
        IntentLabel::Approaching,
        IntentLabel::Receding,
        IntentLabel::Stationary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IntentLabel::CrossingLeft => "CROSSING_LEFT",
            IntentLabel::CrossingRight => "CROSSING_RIGHT",
            IntentLabel::Approaching => "APPROACHING",
            IntentLabel::Receding => "RECEDING",
            IntentLabel::Stationary => "STATIONARY",
        }
    }

    /// Centre of the direction triangle, `None` for [`IntentLabel::Stationary`].
    pub fn direction_deg(self) -> Option<f64> {
        match self {
            IntentLabel::CrossingRight => Some(0.0),
            IntentLabel::Approaching => Some(90.0),
            IntentLabel::CrossingLeft => Some(180.0),
            IntentLabel::Receding => Some(270.0),
            IntentLabel::Stationary => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub struct Memberships {
    pub crossing_left: f64,
    pub crossing_right: f64,
    pub approaching: f64,
    pub receding: f64,
    pub stationary: f64,
}

impl Memberships {
    pub fn get(&self, label: IntentLabel) -> f64 {
        self.to_array()[label.index()]
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.crossing_left,
            self.crossing_right,
            self.approaching,
            self.receding,
            self.stationary,
        ]
    }

    pub fn from_array(m: [f64; 5]) -> Self {
        Self {
            crossing_left: m[0],
            crossing_right: m[1],
            approaching: m[2],
            receding: m[3],
            stationary: m[4],
        }
    }

    /// Highest membership; ties resolve to the earlier label.
    pub fn argmax(&self) -> IntentLabel {
        let m = self.to_array();
        let mut best = 0;
        for i in 1..m.len() {
            if m[i] > m[best] {
                best = i;
            }
        }
        IntentLabel::ALL[best]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntentState {
    pub label: IntentLabel,
    pub memberships: Memberships,
}

/// Membership shape constants. Speeds are in px/s at `reference_width_px`
/// and scale with the actual frame width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntentConfig {
    /// Fully stationary at or below this speed.
    pub stationary_full_px_s: f64,
    /// Not stationary at all at or above this speed.
    pub stationary_zero_px_s: f64,
    /// Half of the base of each direction triangle; 90° gives a 90° full
    /// width at half maximum and adjacent triangles summing to one.
    pub direction_half_width_deg: f64,
    pub velocity_weight: f64,
    pub orientation_weight: f64,
    pub reference_width_px: f64,
}

impl Default for IntentConfig {
    fn default() -> Self {
        Self {
            stationary_full_px_s: 5.0,
            stationary_zero_px_s: 20.0,
            direction_half_width_deg: 90.0,
            velocity_weight: 0.7,
            orientation_weight: 0.3,
            reference_width_px: DEFAULT_FRAME_WIDTH_PX,
        }
    }
}

/// Signed difference `a − b` wrapped into (−180, 180].
fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

fn triangle(offset_deg: f64, half_width: f64) -> f64 {
    (1.0 - offset_deg.abs() / half_width).max(0.0)
}

/// Falls from 1 at `full` to 0 at `zero`.
fn ramp_down(x: f64, full: f64, zero: f64) -> f64 {
    if x <= full {
        1.0
    } else if x >= zero {
        0.0
    } else {
        (zero - x) / (zero - full)
    }
}

pub fn classify(window: &TrajectoryWindow, frame_width_px: f64) -> Result<IntentState, IntentError> {
    classify_with(window, frame_width_px, &IntentConfig::default())
}

pub fn classify_with(
    window: &TrajectoryWindow,
    frame_width_px: f64,
    config: &IntentConfig,
) -> Result<IntentState, IntentError> {
    if frame_width_px <= 0.0 || !frame_width_px.is_finite() {
        return Err(IntentError::InvalidFrameWidth(frame_width_px));
    }
    let fit = fit_motion(window)?;
    Ok(memberships_for(
        &fit,
        window.newest().map_or(0.0, |s| s.orientation_deg),
        frame_width_px,
        config,
    ))
}

fn memberships_for(fit: &MotionFit, orientation_deg: f64, frame_width_px: f64, config: &IntentConfig) -> IntentState {
    let scale = frame_width_px / config.reference_width_px;
    let stationary = ramp_down(
        fit.speed_px_per_s(),
        config.stationary_full_px_s * scale,
        config.stationary_zero_px_s * scale,
    );
    let moving = 1.0 - stationary;
    let heading = fit.heading_deg();
    let weight_sum = config.velocity_weight + config.orientation_weight;

    let mut m = [0.0; 5];
    for label in IntentLabel::ALL {
        m[label.index()] = match label.direction_deg() {
            Some(centre) => {
                let by_velocity = triangle(angle_diff(heading, centre), config.direction_half_width_deg);
                let by_orientation = triangle(angle_diff(orientation_deg, centre), config.direction_half_width_deg);
                moving * (config.velocity_weight * by_velocity + config.orientation_weight * by_orientation)
                    / weight_sum
            }
            None => stationary,
        }
        .clamp(0.0, 1.0);
    }
    let memberships = Memberships::from_array(m);
    IntentState {
        label: memberships.argmax(),
        memberships,
    }
}

/// Fraction of predicted points within `radius_px` of the actual point.
/// Empty input scores 0.
pub fn score_predictions(predicted: &[(f64, f64)], actual: &[(f64, f64)], radius_px: f64) -> Result<f64, IntentError> {
    if predicted.len() != actual.len() {
        return Err(IntentError::LengthMismatch {
            predicted: predicted.len(),
            actual: actual.len(),
        });
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let hits = predicted
        .iter()
        .zip(actual)
        .filter(|((pu, pv), (au, av))| (pu - au).hypot(pv - av) <= radius_px)
        .count();
    Ok(hits as f64 / predicted.len() as f64)
}

/// One line of the intent JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentRecord {
    pub frame_index: u64,
    pub label: IntentLabel,
    pub memberships: Memberships,
    pub predicted_u: f64,
    pub predicted_v: f64,
    /// Time of the newest sample; the prediction targets this plus the horizon.
    pub timestamp_ms: f64,
    /// Anchor of the newest sample, for scoring later predictions against.
    pub anchor_u: f64,
    pub anchor_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub capacity: usize,
    pub horizon_ms: f64,
    pub frame_width_px: f64,
    pub frame_height_px: f64,
    pub intent: IntentConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            capacity: (DEFAULT_WINDOW_SECONDS * DEFAULT_FPS) as usize,
            horizon_ms: DEFAULT_HORIZON_MS,
            frame_width_px: DEFAULT_FRAME_WIDTH_PX,
            frame_height_px: DEFAULT_FRAME_HEIGHT_PX,
            intent: IntentConfig::default(),
        }
    }
}

/// Turns pose results of one subject into intent records.
#[derive(Debug, Clone)]
pub struct IntentTracker {
    config: TrackerConfig,
    window: TrajectoryWindow,
}

impl IntentTracker {
    pub fn new(config: TrackerConfig) -> Self {
        Self {
            window: TrajectoryWindow::new(config.capacity),
            config,
        }
    }

    pub fn window(&self) -> &TrajectoryWindow {
        &self.window
    }

    /// Anchor in pixels: the midpoint of the two shoulders.
    pub fn anchor(&self, result: &PoseResult) -> (f64, f64) {
        let mid = result.shoulders.midpoint();
        (mid.x * self.config.frame_width_px, mid.y * self.config.frame_height_px)
    }

    /// Records the result; yields an intent once two samples exist.
    pub fn push(&mut self, result: &PoseResult) -> Result<Option<IntentRecord>, IntentError> {
        let (u, v) = self.anchor(result);
        self.window.push(TrajectorySample {
            timestamp_ms: result.timestamp_ms,
            u,
            v,
            orientation_deg: result.orientation_deg.value(),
        })?;
        if self.window.len() < 2 {
            return Ok(None);
        }
        let state = classify_with(&self.window, self.config.frame_width_px, &self.config.intent)?;
        let (predicted_u, predicted_v) = extrapolate(&self.window, self.config.horizon_ms)?;
        Ok(Some(IntentRecord {
            frame_index: result.frame_index,
            label: state.label,
            memberships: state.memberships,
            predicted_u,
            predicted_v,
            timestamp_ms: result.timestamp_ms,
            anchor_u: u,
            anchor_v: v,
        }))
    }
}
