//! Rigid-body math on SE(3) and its Lie algebra.
//!
//! Poses map points from a body frame into a parent frame: `p_parent = R p + t`.
//! Twists are ordered `(rho, phi)`: translational part first, rotational part second.
//! All perturbations are applied on the left: `T <- exp(delta) * T`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, SMatrix, Vector3, Vector6};
use thiserror::Error;

/// 3x6 derivative of a transformed point with respect to a left perturbation.
pub type PointJacobian = SMatrix<f64, 3, 6>;

/// Below this rotation angle `exp`/`log` switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Logarithms of rotations closer than this to pi are rejected.
pub const LOG_ANGLE_MARGIN: f64 = 1e-6;

/// Orthonormality drift that triggers re-projection onto SO(3).
pub const ORTHONORMAL_DRIFT: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation angle {angle} rad is too close to pi for a unique logarithm")]
    AmbiguousLog { angle: f64 },
    #[error("interpolation fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
}

/// Element of se(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[3], v[4], v[5]),
        )
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z,
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.rho * s, self.phi * s)
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(self.phi.iter()).all(|v| v.is_finite())
    }

    pub fn exp(&self) -> Pose {
        exp_se3(self)
    }
}

impl Default for Twist {
    fn default() -> Self {
        Twist::zero()
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;

    fn neg(self) -> Twist {
        Twist::new(-self.rho, -self.phi)
    }
}

/// Rigid transform on SE(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    /// Rotation about the z axis followed by a translation.
    pub fn from_yaw(yaw: f64, t: Vector3<f64>) -> Self {
        let (s, c) = yaw.sin_cos();
        Self::new(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0), t)
    }

    /// Row-major upper 3x4 block `[R | t]`.
    pub fn from_rows(v: &[f64; 12]) -> Self {
        Self::new(
            Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]),
            Vector3::new(v[3], v[7], v[11]),
        )
    }

    pub fn to_rows(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::new(rt, -(rt * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        transform_point(self, p)
    }

    pub fn log(&self) -> Result<Twist, GeometryError> {
        log_se3(self)
    }

    /// Rotation angle in radians, in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    /// Largest absolute entry of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    /// Projects the rotation back onto SO(3) (polar decomposition) when it has drifted.
    pub fn renormalized(mut self) -> Self {
        if self.orthonormality_error() > ORTHONORMAL_DRIFT {
            self.rotation = nearest_rotation(&self.rotation);
        }
        self
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        &self * &rhs
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        Pose::new(
            self.rotation * rhs.rotation,
            self.rotation * rhs.translation + self.translation,
        )
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = self.to_rows();
        for (i, v) in rows.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", v)?;
        }
        Ok(())
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Rotation angle in `[0, pi]`, computed with `atan2` so it stays accurate near 0 and pi.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let s = 0.5 * vee(&(r - r.transpose())).norm();
    s.atan2(c)
}

/// Coefficients `(sin t / t, (1 - cos t) / t^2, (t - sin t) / t^3)`.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let half = 0.5 * theta;
        let sinc_half = half.sin() / half;
        (
            theta.sin() / theta,
            0.5 * sinc_half * sinc_half,
            (theta - theta.sin()) / (theta * theta * theta),
        )
    }
}

pub fn exp_so3(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let (a, b, _) = exp_coefficients(theta);
    let k = skew(phi);
    Matrix3::identity() + k * a + k * k * b
}

/// Closed-form SE(3) exponential: Rodrigues rotation and left-Jacobian translation.
pub fn exp_se3(xi: &Twist) -> Pose {
    let theta = xi.phi.norm();
    let (a, b, c) = exp_coefficients(theta);
    let k = skew(&xi.phi);
    let k2 = k * k;
    let rotation = Matrix3::identity() + k * a + k2 * b;
    let v = Matrix3::identity() + k * b + k2 * c;
    Pose::new(rotation, v * xi.rho)
}

pub fn log_se3(t: &Pose) -> Result<Twist, GeometryError> {
    let r = &t.rotation;
    let theta = rotation_angle(r);
    if theta >= PI - LOG_ANGLE_MARGIN {
        return Err(GeometryError::AmbiguousLog { angle: theta });
    }
    let w = vee(&(r - r.transpose()));
    let (phi, d) = if theta < SMALL_ANGLE {
        // theta / (2 sin theta) -> 1/2 + theta^2/12
        (w * (0.5 + theta * theta / 12.0), 1.0 / 12.0 + theta * theta / 720.0)
    } else {
        let half = 0.5 * theta;
        let d = (1.0 - half * half.cos() / half.sin()) / (theta * theta);
        (w * (theta / (2.0 * theta.sin())), d)
    };
    let k = skew(&phi);
    let v_inv = Matrix3::identity() - k * 0.5 + k * k * d;
    Ok(Twist::new(v_inv * t.translation, phi))
}

/// `T_prev * exp(s * xi)` for `s` in `[0, 1]`.
pub fn interpolate(t_prev: &Pose, xi: &Twist, s: f64) -> Result<Pose, GeometryError> {
    if !(0.0..=1.0).contains(&s) {
        return Err(GeometryError::FractionOutOfRange(s));
    }
    Ok(t_prev * &exp_se3(&xi.scaled(s)))
}

#[inline]
pub fn transform_point(t: &Pose, p: &Vector3<f64>) -> Vector3<f64> {
    t.rotation * p + t.translation
}

/// `[I | -[T p]x]`, the derivative of `exp(delta) * T * p` at `delta = 0`.
pub fn point_jacobian(t: &Pose, p: &Vector3<f64>) -> PointJacobian {
    let q = transform_point(t, p);
    let mut j = PointJacobian::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(&q)));
    j
}

/// Closest rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}
