//! Rigid-body pose algebra on SO(3) × R³.
//!
//! Euler angles follow the roll-pitch-yaw convention used throughout the crate:
//! `R = Rz(yaw) · Ry(pitch) · Rx(roll)`, i.e. roll about x is applied first,
//! then pitch about y, then yaw about z, all about the fixed axes.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, TAU};
use core::ops::Mul;

use libm::{atan2, cos, sin, sqrt};
use nalgebra::{Matrix3, Point3, Vector3};
use thiserror::Error;

use crate::cloud::PointCloud;

/// Per-entry tolerance for `RᵀR = I` and `det R = 1`.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pitch margin from ±π/2 inside which an Euler decomposition is flagged as
/// gimbal-locked and roll is pinned to zero.
pub const GIMBAL_MARGIN: f64 = 1e-3;

pub type Translation = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("cannot average an empty set of rotations")]
    EmptyRotationSet,
    #[error("matrix is not a rotation (orthonormality error {error:.3e})")]
    NotOrthonormal { error: f64 },
    #[error("non-finite value in pose")]
    NonFinite,
}

/// A proper rotation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Wraps a matrix without checking it. Callers are expected to pass a
    /// matrix that already satisfies the rotation invariants.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Accepts `m` if it is a rotation within [`ORTHONORMAL_TOL`].
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeomError> {
        let r = Self(m);
        let err = r.orthonormality_error();
        if !err.is_finite() {
            return Err(GeomError::NonFinite);
        }
        if err > ORTHONORMAL_TOL {
            return Err(GeomError::NotOrthonormal { error: err });
        }
        Ok(r)
    }

    /// Projects an arbitrary 3×3 matrix onto the nearest rotation (Frobenius
    /// norm) using its SVD.
    pub fn nearest(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd computed with u");
        let v_t = svd.v_t.expect("svd computed with v_t");
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Self(u * d * v_t)
    }

    pub fn about_x(angle: f64) -> Self {
        let (s, c) = (sin(angle), cos(angle));
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn about_y(angle: f64) -> Self {
        let (s, c) = (sin(angle), cos(angle));
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn about_z(angle: f64) -> Self {
        let (s, c) = (sin(angle), cos(angle));
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// Rodrigues' formula. `axis` need not be normalized; a zero axis yields
    /// the identity.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        let k = axis / n;
        let kx = k.cross_matrix();
        let m = Matrix3::identity() + kx * sin(angle) + kx * kx * (1.0 - cos(angle));
        Self(m)
    }

    /// Exponential map of a rotation vector.
    pub fn exp(omega: &Vector3<f64>) -> Self {
        Self::from_axis_angle(omega, omega.norm())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// Largest absolute entry of `RᵀR − I`, combined with `|det R − 1|`.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.0.transpose() * self.0 - Matrix3::identity();
        let entry = gram.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        entry.max((self.0.determinant() - 1.0).abs())
    }

    pub fn is_valid(&self) -> bool {
        self.orthonormality_error() <= ORTHONORMAL_TOL
    }

    pub fn renormalized(&self) -> Self {
        Self::nearest(&self.0)
    }

    pub fn to_euler(&self) -> EulerAngles {
        rotation_to_euler(self)
    }

    pub fn from_euler(e: &EulerAngles) -> Self {
        euler_to_rotation(e)
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation(self.0 * rhs.0)
    }
}

/// Roll, pitch and yaw in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.roll, self.pitch, self.yaw]
    }

    /// True when the pitch lies within [`GIMBAL_MARGIN`] of ±π/2.
    pub fn near_gimbal_lock(&self) -> bool {
        FRAC_PI_2 - self.pitch.abs() < GIMBAL_MARGIN
    }
}

pub fn euler_to_rotation(e: &EulerAngles) -> Rotation {
    Rotation::about_z(e.yaw) * Rotation::about_y(e.pitch) * Rotation::about_x(e.roll)
}

/// Canonical decomposition with pitch in [−π/2, π/2] and roll, yaw in
/// (−π, π]. Near gimbal lock only the sum of roll and yaw is observable; roll
/// is then set to zero and the whole angle goes to yaw.
pub fn rotation_to_euler(r: &Rotation) -> EulerAngles {
    let m = r.matrix();
    let pitch = atan2(-m[(2, 0)], sqrt(m[(0, 0)] * m[(0, 0)] + m[(1, 0)] * m[(1, 0)]));
    if FRAC_PI_2 - pitch.abs() < GIMBAL_MARGIN {
        let yaw = atan2(-m[(0, 1)], m[(1, 1)]);
        return EulerAngles::new(0.0, pitch, yaw);
    }
    EulerAngles::new(atan2(m[(2, 1)], m[(2, 2)]), pitch, atan2(m[(1, 0)], m[(0, 0)]))
}

/// Rotation angle of `a⁻¹ b`, in [0, π], accurate near both ends.
pub fn geodesic_distance(a: &Rotation, b: &Rotation) -> f64 {
    let rel = a.matrix().transpose() * b.matrix();
    let cos_angle = (rel.trace() - 1.0) / 2.0;
    let axis = Vector3::new(rel[(2, 1)] - rel[(1, 2)], rel[(0, 2)] - rel[(2, 0)], rel[(1, 0)] - rel[(0, 1)]);
    atan2(axis.norm() / 2.0, cos_angle)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMean {
    pub rotation: Rotation,
    /// Some pair of inputs was at least π/2 apart, so the Euler average is
    /// not well posed. The mean is still returned.
    pub dispersed: bool,
}

/// Mean rotation obtained by averaging Euler angles component-wise and
/// converting back. Each angle is unwrapped to within π of the first input's
/// angle before averaging so that the ±π seam does not split the set.
pub fn mean_rotation(rs: &[Rotation]) -> Result<RotationMean, GeomError> {
    let first = rs.first().ok_or(GeomError::EmptyRotationSet)?;
    let reference = first.to_euler().as_array();
    let mut sum = [0.0; 3];
    for r in rs {
        let e = r.to_euler().as_array();
        for axis in 0..3 {
            sum[axis] += unwrap_near(e[axis], reference[axis]);
        }
    }
    let n = rs.len() as f64;
    let mean = EulerAngles::new(sum[0] / n, sum[1] / n, sum[2] / n);

    let mut dispersed = false;
    'outer: for (i, a) in rs.iter().enumerate() {
        for b in &rs[i + 1..] {
            if geodesic_distance(a, b) >= FRAC_PI_2 {
                dispersed = true;
                break 'outer;
            }
        }
    }
    if dispersed {
        log::warn!("rotation mean over a dispersed set ({} rotations)", rs.len());
    }
    Ok(RotationMean {
        rotation: euler_to_rotation(&mean),
        dispersed,
    })
}

/// Shifts `angle` by a multiple of 2π so that it lies within π of `reference`.
pub fn unwrap_near(angle: f64, reference: f64) -> f64 {
    let mut a = angle;
    while a - reference > PI {
        a -= TAU;
    }
    while a - reference < -PI {
        a += TAU;
    }
    a
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let a = unwrap_near(angle, 0.0);
    if a <= -PI {
        a + TAU
    } else {
        a
    }
}

/// Rigid transform `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Translation,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Translation) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Translation) -> Self {
        Self::new(Rotation::identity(), t)
    }

    pub fn from_rotation(r: Rotation) -> Self {
        Self::new(r, Translation::zeros())
    }

    /// Row-major 3×4 `[R | t]`.
    #[rustfmt::skip]
    pub fn to_row_major(&self) -> [f64; 12] {
        let r = self.rotation.matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    /// Inverse of [`Pose::to_row_major`]; the rotation block is not checked.
    pub fn from_row_major_unchecked(v: &[f64; 12]) -> Self {
        let r = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]);
        Self::new(Rotation::from_matrix_unchecked(r), Translation::new(v[3], v[7], v[11]))
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation.rotate(&p.coords) + self.translation)
    }

    pub fn inverse(&self) -> Pose {
        invert(self)
    }

    pub fn is_valid(&self) -> bool {
        self.rotation.is_valid() && self.translation.iter().all(|v| v.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        compose(&self, &rhs)
    }
}

/// `a ∘ b`: applies `b` first, then `a`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose {
        rotation: a.rotation * b.rotation,
        translation: a.rotation.rotate(&b.translation) + a.translation,
    }
}

pub fn invert(p: &Pose) -> Pose {
    let r_inv = p.rotation.inverse();
    Pose {
        rotation: r_inv,
        translation: -r_inv.rotate(&p.translation),
    }
}

/// Maps every point by `R q + t`. Intensity and frame index are carried over.
pub fn transform_cloud(p: &Pose, c: &PointCloud) -> PointCloud {
    let points: Vec<Point3<f64>> = c.points.iter().map(|q| p.transform_point(q)).collect();
    PointCloud {
        points,
        intensity: c.intensity.clone(),
        frame_index: c.frame_index,
    }
}
