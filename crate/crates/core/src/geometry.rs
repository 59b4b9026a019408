//! Shoulder pair to look-at rotation frame to quaternion.
//!
//! Every function here is total on finite input: the two degenerate
//! branches of the frame construction (coincident shoulders, shoulder axis
//! parallel to the up vector) and the trace ≈ −1 singularity of the
//! quaternion extraction all resolve to a valid orthonormal result.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Norm below which a vector is treated as zero when picking a fallback axis.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// Scalar part below which the trace branch of the quaternion extraction
/// is abandoned for the largest-diagonal branch.
pub const QUAT_BRANCH_EPS: f64 = 1e-3;

/// Fallback for the shoulder axis when the two shoulders coincide.
pub const FALLBACK_Z: Vec3 = Vec3::new(0.0, -1.0, 0.0);

/// Fallback for the lateral axis when the shoulder axis is parallel to [`UP`].
pub const FALLBACK_X: Vec3 = Vec3::new(1.0, 0.0, 0.0);

/// World up vector of the look-at construction.
pub const UP: Vec3 = Vec3::new(0.0, 0.0, 1.0);

/// Largest tolerated deviation from unit norm in [`quaternion_to_matrix`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("quaternion is not unit length (norm {norm})")]
    NonUnitQuaternion { norm: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn cross(self, other: Vec3) -> Vec3 {
        Vec3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Vec3::new(x, y, z)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// 3×3 rotation matrix, stored row-major so that `m[row][col]` is `r{row}{col}`.
///
/// The columns are the lateral axis x̂, the derived axis ŷ and the shoulder
/// axis ẑ, in that order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub const fn from_rows(m: [[f64; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Self {
        Self {
            m: [[x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z]],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.m
    }

    pub fn column(&self, col: usize) -> Vec3 {
        Vec3::new(self.m[0][col], self.m[1][col], self.m[2][col])
    }

    pub fn columns(&self) -> [Vec3; 3] {
        [self.column(0), self.column(1), self.column(2)]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1] + self.m[2][2]
    }

    pub fn determinant(&self) -> f64 {
        let [x, y, z] = self.columns();
        x.dot(y.cross(z))
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &RotationMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).abs());
            }
        }
        worst
    }

    /// Worst violation of the unit-column, orthogonality and det = +1 conditions.
    pub fn orthonormality_error(&self) -> f64 {
        let [x, y, z] = self.columns();
        [
            (x.norm() - 1.0).abs(),
            (y.norm() - 1.0).abs(),
            (z.norm() - 1.0).abs(),
            x.dot(y).abs(),
            y.dot(z).abs(),
            z.dot(x).abs(),
            (self.determinant() - 1.0).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Hamilton quaternion `a + bi + cj + dk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion::new(1.0, 0.0, 0.0, 0.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// Unit quaternion for a rotation of `angle` radians about `axis`.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let axis = axis * (1.0 / axis.norm());
        let (s, c) = (angle / 2.0).sin_cos();
        Self::new(c, s * axis.x, s * axis.y, s * axis.z)
    }

    pub fn norm(&self) -> f64 {
        (self.a * self.a + self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }

    /// Picks the representative with `a >= 0`; for `a == 0` the first
    /// nonzero vector component is made positive.
    pub fn canonical(self) -> Self {
        let flip = if self.a != 0.0 {
            self.a < 0.0
        } else {
            [self.b, self.c, self.d]
                .into_iter()
                .find(|v| *v != 0.0)
                .is_some_and(|v| v < 0.0)
        };
        if flip {
            self.scale(-1.0)
        } else {
            self
        }
    }
}

impl fmt::Display for Quaternion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {:+}i {:+}j {:+}k", self.a, self.b, self.c, self.d)
    }
}

/// Shoulder axis before normalization: `left − right`.
pub fn difference_axis(left: Vec3, right: Vec3) -> Vec3 {
    left - right
}

/// Unit shoulder axis, or [`FALLBACK_Z`] when the shoulders coincide.
pub fn normalize_z(z_vec: Vec3) -> Vec3 {
    // scale first so huge finite inputs do not overflow the squared norm
    let scale = z_vec.x.abs().max(z_vec.y.abs()).max(z_vec.z.abs());
    if scale <= 0.0 || !scale.is_finite() {
        return FALLBACK_Z;
    }
    let unit_ish = Vec3::new(z_vec.x / scale, z_vec.y / scale, z_vec.z / scale);
    let n = unit_ish.norm();
    if n * scale >= DEGENERATE_EPS {
        unit_ish * (1.0 / n)
    } else {
        FALLBACK_Z
    }
}

/// `UP × ẑ`, normalized, or [`FALLBACK_X`] when ẑ is parallel to `UP`.
pub fn build_x_axis(z_hat: Vec3) -> Vec3 {
    let x = UP.cross(z_hat);
    let n = x.norm();
    if n >= DEGENERATE_EPS {
        x * (1.0 / n)
    } else {
        FALLBACK_X
    }
}

/// Look-at frame for a shoulder pair, columns `[x̂ ŷ ẑ]`.
pub fn build_rotation_matrix(left: Vec3, right: Vec3) -> RotationMatrix {
    let mut diff = difference_axis(left, right);
    if !diff.is_finite() {
        diff = difference_axis(left * 0.5, right * 0.5);
    }
    let z_hat = normalize_z(diff);
    let x_hat = build_x_axis(z_hat);
    let y_hat = z_hat.cross(x_hat);
    RotationMatrix::from_columns(x_hat, y_hat, z_hat)
}

/// Rotation matrix to unit quaternion with `a >= 0`.
///
/// Uses the trace branch `a = ½√|1 + r00 + r11 + r22|` whenever `a` is at
/// least [`QUAT_BRANCH_EPS`]. Below that the vector parts would be divided
/// by a near-zero scalar, so the component with the largest diagonal
/// element is solved for first instead.
pub fn matrix_to_quaternion(r: &RotationMatrix) -> Quaternion {
    let m = r.rows();
    let a = 0.5 * (1.0 + m[0][0] + m[1][1] + m[2][2]).abs().sqrt();
    let q = if a >= QUAT_BRANCH_EPS {
        let k = 4.0 * a;
        Quaternion::new(
            a,
            (m[2][1] - m[1][2]) / k,
            (m[0][2] - m[2][0]) / k,
            (m[1][0] - m[0][1]) / k,
        )
    } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
        let b = 0.5 * (1.0 + m[0][0] - m[1][1] - m[2][2]).abs().sqrt();
        let k = 4.0 * b;
        Quaternion::new(
            (m[2][1] - m[1][2]) / k,
            b,
            (m[0][1] + m[1][0]) / k,
            (m[0][2] + m[2][0]) / k,
        )
    } else if m[1][1] >= m[2][2] {
        let c = 0.5 * (1.0 - m[0][0] + m[1][1] - m[2][2]).abs().sqrt();
        let k = 4.0 * c;
        Quaternion::new(
            (m[0][2] - m[2][0]) / k,
            (m[0][1] + m[1][0]) / k,
            c,
            (m[1][2] + m[2][1]) / k,
        )
    } else {
        let d = 0.5 * (1.0 - m[0][0] - m[1][1] + m[2][2]).abs().sqrt();
        let k = 4.0 * d;
        Quaternion::new(
            (m[1][0] - m[0][1]) / k,
            (m[0][2] + m[2][0]) / k,
            (m[1][2] + m[2][1]) / k,
            d,
        )
    };
    q.canonical()
}

/// Rotation matrix of a unit quaternion.
pub fn quaternion_to_matrix(q: &Quaternion) -> Result<RotationMatrix, GeometryError> {
    let norm = q.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
        return Err(GeometryError::NonUnitQuaternion { norm });
    }
    let Quaternion { a, b, c, d } = *q;
    Ok(RotationMatrix::from_rows([
        [
            a * a + b * b - c * c - d * d,
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            a * a - b * b + c * c - d * d,
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            a * a - b * b - c * c + d * d,
        ],
    ]))
}
