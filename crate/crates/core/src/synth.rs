//! Synthetic shoulder streams with known yaw, for scoring without a camera.
//!
//! Coordinates follow the landmark convention: x right, y down, z depth.
//! Yaw turns the subject about the vertical y axis; at yaw 0 the shoulder
//! line is parallel to +x.
//!
//! Noise draws are frame-indexed: frame `i` uses ChaCha stream `i` of the
//! seed, so any frame can be regenerated on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec3;
use crate::stream::{Landmark, LandmarkFrame, LEFT_SHOULDER, RIGHT_SHOULDER};

pub const DEFAULT_SHOULDER_HALF_WIDTH: f64 = 0.2;
/// Landmark jitter used for the noisy accuracy runs.
pub const NOISY_SIGMA: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<(), SynthError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SynthError::NotPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), SynthError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SynthError::Negative { name, value })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YawProfile {
    Constant(f64),
    /// Linear from `from_deg` at t = 0 to `to_deg` at `over_s`, held after.
    Sweep {
        from_deg: f64,
        to_deg: f64,
        over_s: f64,
    },
}

impl YawProfile {
    pub fn at(&self, t_s: f64) -> f64 {
        match *self {
            YawProfile::Constant(deg) => deg,
            YawProfile::Sweep {
                from_deg,
                to_deg,
                over_s,
            } => {
                let f = if over_s > 0.0 {
                    (t_s / over_s).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                from_deg + (to_deg - from_deg) * f
            }
        }
    }
}

/// Straight-line motion of the shoulder midpoint, normalized units per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterPath {
    pub start: Vec3,
    pub velocity: Vec3,
}

impl CenterPath {
    pub fn fixed(at: Vec3) -> Self {
        Self {
            start: at,
            velocity: Vec3::ZERO,
        }
    }

    pub fn at(&self, t_s: f64) -> Vec3 {
        self.start + self.velocity * t_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubjectModel {
    pub shoulder_half_width: f64,
    pub center: CenterPath,
    pub yaw: YawProfile,
    /// Per-coordinate Gaussian σ, normalized units.
    pub noise_sigma: f64,
}

impl Default for SubjectModel {
    fn default() -> Self {
        Self {
            shoulder_half_width: DEFAULT_SHOULDER_HALF_WIDTH,
            center: CenterPath::fixed(Vec3::new(0.5, 0.5, 0.0)),
            yaw: YawProfile::Constant(0.0),
            noise_sigma: 0.0,
        }
    }
}

impl SubjectModel {
    /// Noise-free left and right shoulder at time `t_s`.
    pub fn shoulders_at(&self, t_s: f64) -> (Vec3, Vec3) {
        let (s, c) = self.yaw.at(t_s).to_radians().sin_cos();
        let offset = Vec3::new(c, 0.0, -s) * self.shoulder_half_width;
        let center = self.center.at(t_s);
        (center + offset, center - offset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frame_index: u64,
    pub yaw_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthStream {
    pub frames: Vec<LandmarkFrame>,
    pub truth: Vec<GroundTruth>,
}

pub fn frame_count(fps: f64, duration_s: f64) -> u64 {
    (fps * duration_s).round() as u64
}

/// Generator for frame `index`, independent of every other frame.
pub fn frame_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn generate(subject: &SubjectModel, fps: f64, duration_s: f64, seed: u64) -> Result<SynthStream, SynthError> {
    positive("fps", fps)?;
    positive("duration", duration_s)?;
    positive("shoulder_half_width", subject.shoulder_half_width)?;
    non_negative("noise_sigma", subject.noise_sigma)?;

    let n = frame_count(fps, duration_s);
    let noise = (subject.noise_sigma > 0.0).then(|| Normal::new(0.0, subject.noise_sigma).expect("sigma validated"));
    let mut frames = Vec::with_capacity(n as usize);
    let mut truth = Vec::with_capacity(n as usize);
    for i in 0..n {
        let t_s = i as f64 / fps;
        let (mut left, mut right) = subject.shoulders_at(t_s);
        if let Some(noise) = &noise {
            let mut rng = frame_rng(seed, i);
            let mut jitter = || Vec3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            left = left + jitter();
            right = right + jitter();
        }
        frames.push(LandmarkFrame {
            frame_index: i,
            timestamp_ms: t_s * 1000.0,
            landmarks: vec![
                Landmark::new(LEFT_SHOULDER, left, 1.0),
                Landmark::new(RIGHT_SHOULDER, right, 1.0),
            ],
        });
        truth.push(GroundTruth {
            frame_index: i,
            yaw_deg: subject.yaw.at(t_s),
        });
    }
    Ok(SynthStream { frames, truth })
}

/// Constant-velocity walk of an anchor point in pixel space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkModel {
    pub start_u: f64,
    pub start_v: f64,
    pub velocity_u_px_s: f64,
    pub velocity_v_px_s: f64,
    pub noise_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkSample {
    pub timestamp_ms: f64,
    /// Observed position, noise included.
    pub u: f64,
    pub v: f64,
    pub true_u: f64,
    pub true_v: f64,
}

pub fn generate_walk(walk: &WalkModel, fps: f64, duration_s: f64, seed: u64) -> Result<Vec<WalkSample>, SynthError> {
    positive("fps", fps)?;
    positive("duration", duration_s)?;
    non_negative("noise_px", walk.noise_px)?;
    let noise = (walk.noise_px > 0.0).then(|| Normal::new(0.0, walk.noise_px).expect("sigma validated"));
    Ok((0..frame_count(fps, duration_s))
        .map(|i| {
            let t_s = i as f64 / fps;
            let true_u = walk.start_u + walk.velocity_u_px_s * t_s;
            let true_v = walk.start_v + walk.velocity_v_px_s * t_s;
            let (du, dv) = match &noise {
                Some(noise) => {
                    let mut rng = frame_rng(seed, i);
                    (noise.sample(&mut rng), noise.sample(&mut rng))
                }
                None => (0.0, 0.0),
            };
            WalkSample {
                timestamp_ms: t_s * 1000.0,
                u: true_u + du,
                v: true_v + dv,
                true_u,
                true_v,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_rotation_matrix;
    use crate::stream::select_shoulders;
    use approx::assert_abs_diff_eq;

    fn sweep(noise_sigma: f64) -> SubjectModel {
        SubjectModel {
            yaw: YawProfile::Sweep {
                from_deg: 0.0,
                to_deg: 180.0,
                over_s: 10.0,
            },
            noise_sigma,
            ..SubjectModel::default()
        }
    }

    #[test]
    fn zero_yaw_shoulders_parallel_to_x() {
        let s = generate(&SubjectModel::default(), 24.0, 2.0, 0).unwrap();
        for f in &s.frames {
            let pair = select_shoulders(f, 0.5).unwrap();
            let d = pair.left - pair.right;
            assert_eq!((d.y, d.z), (0.0, 0.0));
            assert_abs_diff_eq!(d.x, 0.4, epsilon = 1e-15);
        }
    }

    #[test]
    fn frame_count_and_timestamps() {
        let s = generate(&sweep(0.0), 24.0, 10.0, 1).unwrap();
        assert_eq!(s.frames.len(), 240);
        assert_eq!(s.truth.len(), 240);
        assert_abs_diff_eq!(s.frames[24].timestamp_ms, 1000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.truth[120].yaw_deg, 90.0, epsilon = 1e-9);
        assert!(s.frames.iter().all(|f| f.landmarks.iter().all(|l| l.visibility == 1.0)));
    }

    #[test]
    fn sweep_rotates_shoulder_axis_monotonically() {
        let s = generate(&sweep(0.0), 24.0, 10.0, 1).unwrap();
        let mut last = f64::NEG_INFINITY;
        for (f, gt) in s.frames.iter().zip(&s.truth) {
            let pair = select_shoulders(f, 0.5).unwrap();
            let z = build_rotation_matrix(pair.left, pair.right).column(2);
            // ẑ = (cos φ, 0, −sin φ): the in-plane angle recovers the yaw
            let recovered = (-z.z).atan2(z.x).to_degrees();
            assert_abs_diff_eq!(recovered, gt.yaw_deg, epsilon = 1e-9);
            assert!(recovered > last);
            last = recovered;
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let a = generate(&sweep(0.01), 24.0, 3.0, 7).unwrap();
        let b = generate(&sweep(0.01), 24.0, 3.0, 7).unwrap();
        assert_eq!(a, b);
        let c = generate(&sweep(0.01), 24.0, 3.0, 8).unwrap();
        assert_ne!(a.frames, c.frames);
    }

    #[test]
    fn noise_is_frame_indexed() {
        let long = generate(&sweep(0.01), 24.0, 3.0, 7).unwrap();
        let short = generate(&sweep(0.01), 24.0, 1.0, 7).unwrap();
        assert_eq!(&long.frames[..24], &short.frames[..]);
    }

    #[test]
    fn noise_has_requested_scale() {
        let s = generate(
            &SubjectModel {
                noise_sigma: 0.01,
                ..SubjectModel::default()
            },
            24.0,
            100.0,
            3,
        )
        .unwrap();
        let clean = SubjectModel::default().shoulders_at(0.0).0;
        let devs: Vec<f64> = s.frames.iter().map(|f| f.landmarks[0].position().x - clean.x).collect();
        let var = devs.iter().map(|d| d * d).sum::<f64>() / devs.len() as f64;
        assert_abs_diff_eq!(var.sqrt(), 0.01, epsilon = 0.001);
    }

    #[test]
    fn invalid_parameters() {
        let m = SubjectModel::default();
        assert!(generate(&m, 24.0, 0.0, 0).is_err());
        assert!(generate(&m, 0.0, 1.0, 0).is_err());
        assert!(generate(&m, f64::NAN, 1.0, 0).is_err());
        assert!(generate(
            &SubjectModel {
                shoulder_half_width: 0.0,
                ..m
            },
            24.0,
            1.0,
            0
        )
        .is_err());
        assert!(generate(&SubjectModel { noise_sigma: -1.0, ..m }, 24.0, 1.0, 0).is_err());
    }

    #[test]
    fn walk_without_noise_is_the_line() {
        let w = WalkModel {
            start_u: 100.0,
            start_v: 200.0,
            velocity_u_px_s: 50.0,
            velocity_v_px_s: -10.0,
            noise_px: 0.0,
        };
        let samples = generate_walk(&w, 24.0, 2.0, 0).unwrap();
        assert_eq!(samples.len(), 48);
        let last = samples.last().unwrap();
        assert_abs_diff_eq!(last.u, 100.0 + 50.0 * 47.0 / 24.0, epsilon = 1e-9);
        assert_eq!((last.u, last.v), (last.true_u, last.true_v));
    }
}
