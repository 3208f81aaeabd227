//! The 4-DOF pose group: rotation about the world z-axis plus a 3-D translation.
//!
//! Poses are stored as `(p, theta)` and expanded to homogeneous 4×4 matrices on
//! demand, so the rotation block is orthonormal by construction. Body velocities
//! are 4-vectors `[v_x, v_y, v_z, omega]`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Tolerance used by [`Twist4x4::new`] when checking the twist pattern.
pub const TWIST_TOLERANCE: f64 = 1e-9;

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Rotation about z as a 3×3 matrix.
pub fn rot_z(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// A pose `g = (p, R(theta))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub p: Vector3<f64>,
    pub theta: f64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(p: Vector3<f64>, theta: f64) -> Self {
        Self {
            p,
            theta: wrap_angle(theta),
        }
    }

    pub fn from_xyz_theta(x: f64, y: f64, z: f64, theta: f64) -> Self {
        Self::new(Vector3::new(x, y, z), theta)
    }

    pub fn identity() -> Self {
        Self {
            p: Vector3::zeros(),
            theta: 0.0,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rot_z(self.theta)
    }

    /// Homogeneous matrix form.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.p);
        m
    }

    /// Projects an (approximately) homogeneous matrix back onto the group.
    ///
    /// The angle is read from the planar rotation block with `atan2`, which
    /// discards any scaling picked up by an integrator stage.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        let theta = (m[(1, 0)] - m[(0, 1)]).atan2(m[(0, 0)] + m[(1, 1)]);
        Self::new(Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]), theta)
    }

    /// Flattened coordinates `[p_x, p_y, p_z, theta]`, used as GP inputs.
    pub fn flatten(&self) -> Vector4<f64> {
        Vector4::new(self.p.x, self.p.y, self.p.z, self.theta)
    }

    pub fn from_flat(x: &Vector4<f64>) -> Self {
        Self::from_xyz_theta(x[0], x[1], x[2], x[3])
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose {
        inverse(self)
    }

    /// Applies the pose to a point: `R p + t`.
    pub fn transform_point(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * point + self.p
    }

    pub fn is_finite(&self) -> bool {
        self.p.iter().all(|v| v.is_finite()) && self.theta.is_finite()
    }
}

/// `a · b`.
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    Pose::new(a.rotation() * b.p + a.p, a.theta + b.theta)
}

pub fn inverse(g: &Pose) -> Pose {
    let rt = g.rotation().transpose();
    Pose::new(-(rt * g.p), -g.theta)
}

/// Body velocity (twist) `[v; omega]`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyVelocity {
    pub v: Vector3<f64>,
    pub omega: f64,
}

impl BodyVelocity {
    pub fn new(v: Vector3<f64>, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(x: &Vector4<f64>) -> Self {
        Self::new(Vector3::new(x[0], x[1], x[2]), x[3])
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.v.x, self.v.y, self.v.z, self.omega)
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite()) && self.omega.is_finite()
    }
}

impl From<Vector4<f64>> for BodyVelocity {
    fn from(x: Vector4<f64>) -> Self {
        Self::from_vector(&x)
    }
}

/// Matrix form of a [`BodyVelocity`]: a z-skew rotation block, the linear part
/// in the last column and an all-zero bottom row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist4x4(Matrix4<f64>);

impl Twist4x4 {
    /// Validates the twist pattern within [`TWIST_TOLERANCE`].
    pub fn new(m: Matrix4<f64>) -> Result<Self, GeometryError> {
        let tol = TWIST_TOLERANCE;
        for r in 0..4 {
            for c in 0..4 {
                let allowed = matches!((r, c), (0, 1) | (1, 0) | (0, 3) | (1, 3) | (2, 3));
                if !allowed && m[(r, c)].abs() > tol {
                    return Err(GeometryError::NotATwist {
                        row: r,
                        col: c,
                        value: m[(r, c)],
                    });
                }
            }
        }
        if (m[(0, 1)] + m[(1, 0)]).abs() > tol {
            return Err(GeometryError::NotATwist {
                row: 0,
                col: 1,
                value: m[(0, 1)],
            });
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }
}

pub fn hat(v: &BodyVelocity) -> Twist4x4 {
    let mut m = Matrix4::zeros();
    m[(0, 1)] = -v.omega;
    m[(1, 0)] = v.omega;
    m[(0, 3)] = v.v.x;
    m[(1, 3)] = v.v.y;
    m[(2, 3)] = v.v.z;
    Twist4x4(m)
}

/// Hat of a raw 4-vector; convenience for control inputs.
pub fn hat4(x: &Vector4<f64>) -> Matrix4<f64> {
    hat(&BodyVelocity::from_vector(x)).0
}

pub fn vee(m: &Twist4x4) -> BodyVelocity {
    let m = &m.0;
    BodyVelocity::new(Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]), m[(1, 0)])
}

/// Flow of `g' = g V^` for a constant twist over `dt` seconds, in closed form.
pub fn integrate(g: &Pose, v: &BodyVelocity, dt: f64) -> Pose {
    let wt = v.omega * dt;
    // integral_0^dt R(omega s) ds applied to the planar part
    let (a, b) = if wt.abs() < 1e-9 {
        // series of sin(wt)/w and (1 - cos(wt))/w
        (dt * (1.0 - wt * wt / 6.0), dt * (wt / 2.0 - wt * wt * wt / 24.0))
    } else {
        (wt.sin() / v.omega, (1.0 - wt.cos()) / v.omega)
    };
    let local = Vector3::new(a * v.v.x - b * v.v.y, b * v.v.x + a * v.v.y, v.v.z * dt);
    Pose::new(g.p + g.rotation() * local, g.theta + wt)
}

/// Error coordinates `[p; sin(theta)]`.
pub fn vec_of(g: &Pose) -> Vector4<f64> {
    Vector4::new(g.p.x, g.p.y, g.p.z, g.theta.sin())
}

/// `Ad_{R(theta)} = diag(R(theta), 1)`.
pub fn adjoint(theta: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot_z(theta));
    m
}

/// Rotation-error potential `(1/2)||I - R(theta)||_F^2 = 2 (1 - cos theta)`.
///
/// Evaluated as `4 sin^2(theta/2)` to avoid cancellation near zero.
pub fn phi(theta: f64) -> f64 {
    let s = (0.5 * theta).sin();
    4.0 * s * s
}
