//! Human-pose orientation from a single shoulder pair.
//!
//! The per-frame pipeline turns the left and right shoulder landmarks into a
//! look-at rotation frame, extracts a unit quaternion, maps its half-angle
//! to an orientation in degrees and smooths that with a scalar Kalman
//! filter. An optional intent stage classifies the subject's motion over a
//! two-second window.
//!
//! ```
//! use posequat_core::geometry::{build_rotation_matrix, matrix_to_quaternion, Vec3};
//!
//! let r = build_rotation_matrix(Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0));
//! let q = matrix_to_quaternion(&r);
//! assert!((q.norm() - 1.0).abs() < 1e-12);
//! ```

pub mod estimation;
pub mod geometry;
pub mod intent;
pub mod stream;
pub mod synth;

pub use estimation::{FilterConfig, FilterState, OrientationDegrees, OrientationFilter, ThetaRadians};
pub use geometry::{Quaternion, RotationMatrix, Vec3};
pub use intent::{IntentLabel, IntentRecord, IntentState, IntentTracker, TrajectoryWindow};
pub use stream::{LandmarkFrame, Pipeline, PipelineConfig, PoseRecord, PoseResult};
pub use synth::{SubjectModel, SynthStream, YawProfile};
