//! Rotation and rigid-transform algebra.
//!
//! Conventions: right-handed, Y up, angles in radians. Matrices are stored
//! row-major (`Rot3::m[row][col]` semantics through nalgebra indexing) and
//! composition reads right-to-left: `a.compose(&b)` applies `b` first.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

const AXIS_NORM_TOL: f64 = 1e-6;

/// A 3×3 rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Rot3 {
    pub fn identity() -> Self {
        Rot3(Matrix3::identity())
    }

    /// Wraps a matrix without checking orthonormality.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rot3(m)
    }

    /// Wraps a matrix after checking `RᵀR = I` and `det R = 1` within `tol`.
    pub fn from_matrix(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let r = Rot3(m);
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("rotation matrix".into()));
        }
        if r.orthonormality_error() > tol || (m.determinant() - 1.0).abs() > tol {
            return Err(Error::Schema(format!(
                "matrix is not a proper rotation (orthonormality error {:.3e}, det {:.9})",
                r.orthonormality_error(),
                m.determinant()
            )));
        }
        Ok(r)
    }

    /// Builds a rotation from nine row-major scalars, validating at `tol`.
    pub fn from_row_major(rows: [[f64; 3]; 3], tol: f64) -> Result<Self> {
        Self::from_matrix(
            Matrix3::new(
                rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0], rows[2][1],
                rows[2][2],
            ),
            tol,
        )
    }

    pub fn to_row_major(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]]
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rot3(self.0.transpose())
    }

    /// `self · other`
    pub fn mul(&self, other: &Rot3) -> Rot3 {
        Rot3(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn is_identity(&self) -> bool {
        self.0 == Matrix3::identity()
    }

    /// Max-abs entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }

    pub fn rot_x(angle: f64) -> Rot3 {
        let (s, c) = angle.sin_cos();
        Rot3(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Rot3 {
        let (s, c) = angle.sin_cos();
        Rot3(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Rot3 {
        let (s, c) = angle.sin_cos();
        Rot3(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rodrigues rotation by `angle` about the unit vector `axis`.
    pub fn about_axis(axis: &Vec3, angle: f64) -> Result<Rot3> {
        let n = axis.norm();
        if !n.is_finite() || !angle.is_finite() {
            return Err(Error::NonFinite("axis-angle input".into()));
        }
        if n < 1e-12 {
            return Err(Error::DegenerateAxis("zero-norm rotation axis".into()));
        }
        if (n - 1.0).abs() > AXIS_NORM_TOL {
            return Err(Error::DegenerateAxis(format!("rotation axis must be unit length, got norm {n}")));
        }
        Ok(rodrigues(&(axis / n), angle))
    }

    /// Rotation from an axis-angle 3-vector (direction = axis, norm = angle).
    /// The zero vector maps to the identity.
    pub fn from_axis_angle_vector(v: &Vec3) -> Rot3 {
        let angle = v.norm();
        if angle == 0.0 {
            return Rot3::identity();
        }
        rodrigues(&(v / angle), angle)
    }
}

fn skew(v: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn rodrigues(unit_axis: &Vec3, angle: f64) -> Rot3 {
    let k = skew(unit_axis);
    let (s, c) = angle.sin_cos();
    Rot3(Matrix3::identity() + k * s + k * k * (1.0 - c))
}

/// Cross-product matrix: `skew_matrix(a)·b = a × b`.
pub fn skew_matrix(v: &Vec3) -> Matrix3<f64> {
    skew(v)
}

/// Right Jacobian of the exponential map:
/// `Exp(θ + δ) ≈ Exp(θ)·Exp(J_r(θ)·δ)`.
pub fn so3_right_jacobian(theta: &Vec3) -> Matrix3<f64> {
    let phi = theta.norm();
    let k = skew(theta);
    let (a, b) = if phi < 1e-5 {
        let p2 = phi * phi;
        (0.5 - p2 / 24.0, 1.0 / 6.0 - p2 / 120.0)
    } else {
        ((1.0 - phi.cos()) / (phi * phi), (phi - phi.sin()) / (phi * phi * phi))
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SE3 {
    pub rotation: Rot3,
    pub translation: Vec3,
}

impl Default for SE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl SE3 {
    pub fn new(rotation: Rot3, translation: Vec3) -> Self {
        SE3 { rotation, translation }
    }

    pub fn identity() -> Self {
        SE3::new(Rot3::identity(), Vec3::zeros())
    }

    pub fn from_rotation(rotation: Rot3) -> Self {
        SE3::new(rotation, Vec3::zeros())
    }

    pub fn from_translation(t: Vec3) -> Self {
        SE3::new(Rot3::identity(), t)
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &SE3) -> SE3 {
        SE3 {
            rotation: self.rotation.mul(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> SE3 {
        let rt = self.rotation.transpose();
        SE3 { rotation: rt, translation: -rt.apply(&self.translation) }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix4_unchecked(m: &Matrix4<f64>) -> SE3 {
        SE3 {
            rotation: Rot3::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    pub fn apply_homogeneous(&self, p: &Vec3) -> Vec3 {
        let h = self.to_matrix4() * Vector4::new(p.x, p.y, p.z, 1.0);
        Vec3::new(h.x, h.y, h.z)
    }
}

/// Unit quaternion `(w, x, y, z)`, Hamilton convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuat {
    pub const IDENTITY: UnitQuat = UnitQuat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new_normalized(w: f64, x: f64, y: f64, z: f64) -> UnitQuat {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        UnitQuat { w: w / n, x: x / n, y: y / n, z: z / n }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn conjugate(&self) -> UnitQuat {
        UnitQuat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Flips sign so that `w ≥ 0`.
    pub fn canonical(self) -> UnitQuat {
        if self.w < 0.0 {
            UnitQuat { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
        } else {
            self
        }
    }

    /// Hamilton product `self ⊗ other` (rotation `other` applied first).
    pub fn mul(&self, b: &UnitQuat) -> UnitQuat {
        let a = self;
        UnitQuat {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    pub fn to_rot(&self) -> Rot3 {
        let UnitQuat { w, x, y, z } = *self;
        Rot3(Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ))
    }

    /// Shepperd's method: branch on the largest of the trace and the diagonal.
    pub fn from_rot(r: &Rot3) -> UnitQuat {
        let m = r.matrix();
        let (m00, m11, m22) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
        let trace = m00 + m11 + m22;
        let q = if trace >= m00 && trace >= m11 && trace >= m22 {
            let s = 2.0 * (1.0 + trace).sqrt();
            UnitQuat {
                w: 0.25 * s,
                x: (m[(2, 1)] - m[(1, 2)]) / s,
                y: (m[(0, 2)] - m[(2, 0)]) / s,
                z: (m[(1, 0)] - m[(0, 1)]) / s,
            }
        } else if m00 >= m11 && m00 >= m22 {
            let s = 2.0 * (1.0 + m00 - m11 - m22).sqrt();
            UnitQuat {
                w: (m[(2, 1)] - m[(1, 2)]) / s,
                x: 0.25 * s,
                y: (m[(0, 1)] + m[(1, 0)]) / s,
                z: (m[(0, 2)] + m[(2, 0)]) / s,
            }
        } else if m11 >= m22 {
            let s = 2.0 * (1.0 - m00 + m11 - m22).sqrt();
            UnitQuat {
                w: (m[(0, 2)] - m[(2, 0)]) / s,
                x: (m[(0, 1)] + m[(1, 0)]) / s,
                y: 0.25 * s,
                z: (m[(1, 2)] + m[(2, 1)]) / s,
            }
        } else {
            let s = 2.0 * (1.0 - m00 - m11 + m22).sqrt();
            UnitQuat {
                w: (m[(1, 0)] - m[(0, 1)]) / s,
                x: (m[(0, 2)] + m[(2, 0)]) / s,
                y: (m[(1, 2)] + m[(2, 1)]) / s,
                z: 0.25 * s,
            }
        };
        let n = q.norm();
        UnitQuat { w: q.w / n, x: q.x / n, y: q.y / n, z: q.z / n }.canonical()
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}
