//! Orientation angle from a quaternion, smoothed by a scalar Kalman filter.

use std::collections::VecDeque;
use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::Quaternion;

/// Readings kept for the fallback prediction.
pub const WINDOW_LEN: usize = 10;
pub const DEFAULT_MEASUREMENT_NOISE: f64 = 0.5;
pub const DEFAULT_INITIAL_COVARIANCE: f64 = 1.0;
pub const DEFAULT_VIABILITY_THRESHOLD_DEG: f64 = 60.0;
/// One second of frames at 24 fps.
pub const DEFAULT_MAX_CONSECUTIVE_REJECTIONS: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("quaternion has zero norm")]
    ZeroNormQuaternion,
    #[error("quaternion has non-finite components")]
    NonFiniteQuaternion,
}

/// Half-angle of a quaternion, in `[0, π]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ThetaRadians(f64);

impl ThetaRadians {
    /// Clamps into `[0, π]`.
    pub fn new(value: f64) -> Self {
        Self(value.clamp(0.0, PI))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Orientation angle in degrees.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct OrientationDegrees(f64);

impl OrientationDegrees {
    pub fn new(value: f64) -> Self {
        Self(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Wraps into `(-180, 180]`.
    pub fn normalized(self) -> Self {
        let mut v = self.0 % 360.0;
        if v > 180.0 {
            v -= 360.0;
        } else if v <= -180.0 {
            v += 360.0;
        }
        Self(v)
    }
}

pub fn extract_theta(q: &Quaternion) -> Result<ThetaRadians, EstimationError> {
    if !q.is_finite() {
        return Err(EstimationError::NonFiniteQuaternion);
    }
    let norm = q.norm();
    if norm == 0.0 {
        return Err(EstimationError::ZeroNormQuaternion);
    }
    Ok(ThetaRadians::new((q.a / norm).clamp(-1.0, 1.0).acos()))
}

/// `θ·(180²/π)/45 − 180`, i.e. four times θ in degrees, offset by −180.
pub fn theta_to_orientation(theta: ThetaRadians) -> OrientationDegrees {
    OrientationDegrees(theta.value() * (180.0 * 180.0 / PI) / 45.0 - 180.0)
}

/// Outcome of one filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Update {
    /// State estimate after the update; `None` while the filter has never
    /// seen a viable reading.
    pub estimate: Option<f64>,
    /// Gain applied, `None` when the state was held unchanged.
    pub gain: Option<f64>,
    /// The window mean stood in for the measurement.
    pub substituted: bool,
}

/// Scalar Kalman filter with zero process noise.
///
/// The accepted-readings window supplies the prediction when a reading is
/// deemed not viable.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    estimate: Option<f64>,
    covariance: f64,
    measurement_noise: f64,
    window: VecDeque<f64>,
}

impl Default for FilterState {
    fn default() -> Self {
        Self::new(DEFAULT_MEASUREMENT_NOISE)
    }
}

impl FilterState {
    /// Unseeded filter; the first viable reading becomes the estimate.
    pub fn new(measurement_noise: f64) -> Self {
        Self::with_covariance(DEFAULT_INITIAL_COVARIANCE, measurement_noise)
    }

    pub fn with_covariance(covariance: f64, measurement_noise: f64) -> Self {
        Self {
            estimate: None,
            covariance,
            measurement_noise,
            window: VecDeque::with_capacity(WINDOW_LEN),
        }
    }

    pub fn seeded(estimate: f64, covariance: f64, measurement_noise: f64) -> Self {
        Self {
            estimate: Some(estimate),
            ..Self::with_covariance(covariance, measurement_noise)
        }
    }

    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    pub fn covariance(&self) -> f64 {
        self.covariance
    }

    pub fn measurement_noise(&self) -> f64 {
        self.measurement_noise
    }

    pub fn window(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn window_mean(&self) -> Option<f64> {
        if self.window.is_empty() {
            None
        } else {
            Some(self.window.iter().sum::<f64>() / self.window.len() as f64)
        }
    }

    /// Applies one reading. A non-viable reading is replaced by the window
    /// mean and not recorded; with an empty window the state is held.
    pub fn update(&mut self, z: f64, viable: bool) -> Update {
        if !viable {
            return self.update_missing();
        }
        let gain = self.apply(z);
        if self.window.len() == WINDOW_LEN {
            self.window.pop_front();
        }
        self.window.push_back(z);
        Update {
            estimate: self.estimate,
            gain: Some(gain),
            substituted: false,
        }
    }

    /// Frame without a usable reading.
    pub fn update_missing(&mut self) -> Update {
        match self.window_mean() {
            Some(mean) => Update {
                gain: Some(self.apply(mean)),
                estimate: self.estimate,
                substituted: true,
            },
            None => Update {
                estimate: self.estimate,
                gain: None,
                substituted: false,
            },
        }
    }

    fn apply(&mut self, z: f64) -> f64 {
        let x = *self.estimate.get_or_insert(z);
        let k = self.covariance / (self.covariance + self.measurement_noise);
        self.estimate = Some(x + k * (z - x));
        self.covariance *= 1.0 - k;
        k
    }
}

/// Value-style wrapper around [`FilterState::update`].
pub fn kalman_update(state: &FilterState, z: f64, viable: bool) -> (FilterState, Update) {
    let mut next = state.clone();
    let update = next.update(z, viable);
    (next, update)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub measurement_noise: f64,
    pub initial_covariance: f64,
    /// Readings further than this from the window mean are not viable.
    pub viability_threshold_deg: f64,
    /// After this many rejected readings in a row the filter is reset and
    /// re-seeded from the current reading. Zero disables the reset.
    pub max_consecutive_rejections: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            measurement_noise: DEFAULT_MEASUREMENT_NOISE,
            initial_covariance: DEFAULT_INITIAL_COVARIANCE,
            viability_threshold_deg: DEFAULT_VIABILITY_THRESHOLD_DEG,
            max_consecutive_rejections: DEFAULT_MAX_CONSECUTIVE_REJECTIONS,
        }
    }
}

/// One quaternion turned into a filtered orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientationReading {
    pub theta: ThetaRadians,
    pub raw: OrientationDegrees,
    pub filtered: OrientationDegrees,
    pub update: Update,
}

/// Quaternion to filtered orientation, including the viability gate.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationFilter {
    config: FilterConfig,
    state: FilterState,
    rejections: usize,
}

impl Default for OrientationFilter {
    fn default() -> Self {
        Self::new(FilterConfig::default())
    }
}

impl OrientationFilter {
    pub fn new(config: FilterConfig) -> Self {
        Self {
            state: FilterState::with_covariance(config.initial_covariance, config.measurement_noise),
            config,
            rejections: 0,
        }
    }

    pub fn from_state(config: FilterConfig, state: FilterState) -> Self {
        Self {
            config,
            state,
            rejections: 0,
        }
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn is_viable(&self, z: f64) -> bool {
        match self.state.window_mean() {
            Some(mean) => (z - mean).abs() <= self.config.viability_threshold_deg,
            None => true,
        }
    }

    pub fn step(&mut self, q: &Quaternion) -> Result<OrientationReading, EstimationError> {
        let theta = extract_theta(q)?;
        let raw = theta_to_orientation(theta);
        let z = raw.value();
        let mut viable = self.is_viable(z);
        if viable {
            self.rejections = 0;
        } else {
            self.rejections += 1;
            let limit = self.config.max_consecutive_rejections;
            if limit > 0 && self.rejections > limit {
                self.state =
                    FilterState::with_covariance(self.config.initial_covariance, self.config.measurement_noise);
                self.rejections = 0;
                viable = true;
            }
        }
        let update = self.state.update(z, viable);
        // the window is non-empty whenever a reading is rejected, so the
        // estimate always exists here
        let filtered = OrientationDegrees(update.estimate.unwrap_or(z));
        Ok(OrientationReading {
            theta,
            raw,
            filtered,
            update,
        })
    }

    /// Frame with no pose: runs the fallback prediction.
    pub fn step_missing(&mut self) -> Update {
        self.state.update_missing()
    }
}

/// Value-style wrapper around [`OrientationFilter::step`].
pub fn orientation_pipeline_step(
    q: &Quaternion,
    filter: &OrientationFilter,
) -> Result<(OrientationFilter, OrientationDegrees), EstimationError> {
    let mut next = filter.clone();
    let reading = next.step(q)?;
    Ok((next, reading.filtered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

    /// Closed form of the zero-process-noise recursion: 1/p grows by 1/r per
    /// step and the error shrinks by the same ratio as p.
    fn closed_form(x0: f64, p0: f64, r: f64, z: f64, n: usize) -> (f64, f64) {
        let p = 1.0 / (1.0 / p0 + n as f64 / r);
        (z + (x0 - z) * p / p0, p)
    }

    #[test]
    fn theta_examples() {
        assert_eq!(extract_theta(&Quaternion::IDENTITY).unwrap().value(), 0.0);
        let q = Quaternion::new(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(extract_theta(&q).unwrap().value(), FRAC_PI_4, epsilon = 1e-15);
        // sample quaternion printed in the source material, not unit length
        let q = Quaternion::new(0.63, -0.12, 0.31, 0.62);
        assert_abs_diff_eq!(
            extract_theta(&q).unwrap().value(),
            0.840_454_408_209_449,
            epsilon = 1e-12
        );
    }

    #[test]
    fn theta_rejects_zero_norm() {
        assert_eq!(
            extract_theta(&Quaternion::new(0.0, 0.0, 0.0, 0.0)),
            Err(EstimationError::ZeroNormQuaternion)
        );
        assert_eq!(
            extract_theta(&Quaternion::new(f64::INFINITY, 0.0, 0.0, 0.0)),
            Err(EstimationError::NonFiniteQuaternion)
        );
    }

    #[test]
    fn theta_clamps_rounding() {
        let q = Quaternion::new(1.0, 1e-170, 0.0, 0.0);
        let t = extract_theta(&q).unwrap().value();
        assert!(!t.is_nan() && t >= 0.0);
        let t = extract_theta(&Quaternion::new(-1.0, 0.0, 0.0, 0.0)).unwrap().value();
        assert_eq!(t, PI);
    }

    #[test]
    fn orientation_examples() {
        assert_eq!(theta_to_orientation(ThetaRadians::new(0.0)).value(), -180.0);
        assert_abs_diff_eq!(
            theta_to_orientation(ThetaRadians::new(FRAC_PI_4)).value(),
            0.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            theta_to_orientation(ThetaRadians::new(FRAC_PI_2)).value(),
            180.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn normalized_range() {
        for (v, e) in [
            (540.0, 180.0),
            (-180.0, 180.0),
            (190.0, -170.0),
            (0.0, 0.0),
            (359.0, -1.0),
        ] {
            assert_abs_diff_eq!(OrientationDegrees::new(v).normalized().value(), e, epsilon = 1e-12);
        }
    }

    #[test]
    fn kalman_single_step() {
        let (s, u) = kalman_update(&FilterState::seeded(0.0, 1.0, 0.5), 3.0, true);
        assert_abs_diff_eq!(u.gain.unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.estimate().unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.covariance(), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.window().collect::<Vec<_>>(), vec![3.0]);
    }

    #[test]
    fn kalman_zero_covariance_holds_state() {
        let (s, _) = kalman_update(&FilterState::seeded(5.0, 1e-300, 0.5), 1000.0, true);
        assert_abs_diff_eq!(s.estimate().unwrap(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn kalman_matches_closed_form() {
        let mut s = FilterState::seeded(0.0, 1.0, 0.5);
        for n in 1..=50 {
            s.update(172.04, true);
            let (x, p) = closed_form(0.0, 1.0, 0.5, 172.04, n);
            assert_abs_diff_eq!(s.estimate().unwrap(), x, epsilon = 1e-9);
            assert_abs_diff_eq!(s.covariance(), p, epsilon = 1e-15);
        }
        // 172.04 / 101
        assert_abs_diff_eq!(172.04 - s.estimate().unwrap(), 1.703_366_336_633_663, epsilon = 1e-9);
    }

    #[test]
    fn kalman_first_reading_seeds() {
        let mut s = FilterState::new(0.5);
        let u = s.update(42.0, true);
        assert_eq!(u.estimate, Some(42.0));
        assert_abs_diff_eq!(u.gain.unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn kalman_fallback_uses_window_mean() {
        let mut s = FilterState::seeded(0.0, 1.0, 0.5);
        s.update(10.0, true);
        s.update(20.0, true);
        let before = s.clone();
        let u = s.update(500.0, false);
        assert!(u.substituted);
        assert_eq!(s.window().collect::<Vec<_>>(), vec![10.0, 20.0]);
        let mut oracle = before.clone();
        oracle.apply(15.0);
        assert_eq!(s.estimate(), oracle.estimate());
        assert!(s.covariance() < before.covariance());
    }

    #[test]
    fn kalman_fallback_without_history_is_noop() {
        let s = FilterState::seeded(7.0, 1.0, 0.5);
        let (next, u) = kalman_update(&s, 99.0, false);
        assert_eq!(next, s);
        assert_eq!(u.gain, None);
        assert_eq!(u.estimate, Some(7.0));
    }

    #[test]
    fn window_evicts_oldest() {
        let mut s = FilterState::new(0.5);
        for i in 0..15 {
            s.update(i as f64, true);
        }
        assert_eq!(
            s.window().collect::<Vec<_>>(),
            (5..15).map(f64::from).collect::<Vec<_>>()
        );
        assert_eq!(s.window_mean(), Some(9.5));
    }

    #[test]
    fn pipeline_identity_from_fresh_state() {
        let f = OrientationFilter::from_state(FilterConfig::default(), FilterState::seeded(-180.0, 1.0, 0.5));
        let (_, out) = orientation_pipeline_step(&Quaternion::IDENTITY, &f).unwrap();
        assert_eq!(out.value(), -180.0);
    }

    #[test]
    fn pipeline_converges_monotonically() {
        let q = Quaternion::from_axis_angle(crate::geometry::Vec3::new(0.0, 1.0, 0.0), 2.0);
        let mut f = OrientationFilter::from_state(FilterConfig::default(), FilterState::seeded(150.0, 1.0, 0.5));
        let target = theta_to_orientation(extract_theta(&q).unwrap()).value();
        let mut last = f64::INFINITY;
        for _ in 0..3 {
            let r = f.step(&q).unwrap();
            let err = (r.filtered.value() - target).abs();
            assert!(err < last);
            last = err;
        }
    }

    #[test]
    fn pipeline_step_change_takes_fallback() {
        let mut f = OrientationFilter::default();
        f.step(&Quaternion::IDENTITY).unwrap();
        let before = f.state().estimate().unwrap();
        let jump = Quaternion::from_axis_angle(crate::geometry::Vec3::new(1.0, 0.0, 0.0), 100f64.to_radians());
        let r = f.step(&jump).unwrap();
        assert_abs_diff_eq!(r.raw.value() - before, 200.0, epsilon = 1e-9);
        assert!(r.update.substituted);
        assert!((r.filtered.value() - before).abs() < 200.0);
    }

    #[test]
    fn persistent_jump_reseeds_after_limit() {
        let cfg = FilterConfig {
            max_consecutive_rejections: 3,
            ..FilterConfig::default()
        };
        let mut f = OrientationFilter::new(cfg);
        f.step(&Quaternion::IDENTITY).unwrap();
        let jump = Quaternion::from_axis_angle(crate::geometry::Vec3::new(1.0, 0.0, 0.0), 100f64.to_radians());
        for _ in 0..3 {
            assert!(f.step(&jump).unwrap().update.substituted);
        }
        let r = f.step(&jump).unwrap();
        assert!(!r.update.substituted);
        assert_abs_diff_eq!(r.filtered.value(), r.raw.value(), epsilon = 1e-12);
    }

    #[test]
    fn pipeline_propagates_zero_norm() {
        let f = OrientationFilter::default();
        assert!(orientation_pipeline_step(&Quaternion::new(0.0, 0.0, 0.0, 0.0), &f).is_err());
    }
}
