//! Target body-velocity fields.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::geometry::{adjoint, compose, hat, inverse, rot_z, vec_of, BodyVelocity, Pose};

/// Duffing-like oscillator parameters. The names follow the oscillator
/// convention and are unrelated to the GP confidence quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuffingParams {
    pub delta: f64,
    pub gamma: f64,
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self {
            delta: 0.1,
            gamma: 0.39,
            omega: 0.4,
            alpha: -1.0,
            beta: 1.0,
        }
    }
}

/// A point moving counter-clockwise around an axis-aligned square centred at
/// `center`, turning once per lap, tracked by a proportional controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SquareTrack {
    pub side: f64,
    pub speed: f64,
    pub center: [f64; 3],
    pub tracking_gain: f64,
}

impl Default for SquareTrack {
    fn default() -> Self {
        Self {
            side: 1.0,
            speed: 0.1,
            center: [0.0; 3],
            tracking_gain: 0.05,
        }
    }
}

impl SquareTrack {
    pub fn lap_time(&self) -> f64 {
        4.0 * self.side / self.speed
    }

    /// Desired pose and its world-frame velocity `[p', theta']` at time `t`.
    pub fn desired(&self, t: f64) -> (Pose, Vector4<f64>) {
        let lap = self.lap_time();
        let s = (t.rem_euclid(lap)) * self.speed;
        let half = self.side / 2.0;
        let leg = (s / self.side).floor().min(3.0) as usize;
        let r = s - leg as f64 * self.side;
        let ([x, y], [dx, dy]) = match leg {
            0 => ([-half + r, -half], [1.0, 0.0]),
            1 => ([half, -half + r], [0.0, 1.0]),
            2 => ([half - r, half], [-1.0, 0.0]),
            _ => ([-half, half - r], [0.0, -1.0]),
        };
        let [cx, cy, cz] = self.center;
        let omega = 2.0 * PI / lap;
        let pose = Pose::from_xyz_theta(cx + x, cy + y, cz, omega * t);
        (pose, Vector4::new(dx * self.speed, dy * self.speed, 0.0, omega))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetMotion {
    Duffing(DuffingParams),
    SquareTrack(SquareTrack),
    /// Constant body velocity `[v; omega]`.
    Constant {
        velocity: [f64; 4],
    },
}

impl Default for TargetMotion {
    fn default() -> Self {
        Self::Duffing(DuffingParams::default())
    }
}

impl TargetMotion {
    pub fn stationary() -> Self {
        Self::Constant { velocity: [0.0; 4] }
    }

    pub fn default_initial(&self) -> Pose {
        match self {
            Self::Duffing(_) => Pose::from_xyz_theta(-0.3, -1.0, 0.0, 0.0),
            Self::SquareTrack(sq) => sq.desired(0.0).0,
            Self::Constant { .. } => Pose::identity(),
        }
    }

    pub fn is_valid(&self) -> bool {
        match self {
            Self::Duffing(d) => [d.delta, d.gamma, d.omega, d.alpha, d.beta]
                .iter()
                .all(|v| v.is_finite()),
            Self::SquareTrack(s) => {
                s.side > 0.0 && s.speed > 0.0 && s.tracking_gain.is_finite() && s.center.iter().all(|v| v.is_finite())
            }
            Self::Constant { velocity } => velocity.iter().all(|v| v.is_finite()),
        }
    }

    pub fn velocity(&self, g_w0: &Pose, t: f64) -> BodyVelocity {
        match self {
            Self::Duffing(d) => duffing_velocity(g_w0, d),
            Self::SquareTrack(s) => square_velocity(g_w0, s, t),
            Self::Constant { velocity } => BodyVelocity::from_vector(&Vector4::from(*velocity)),
        }
    }
}

/// `V = 0.5 Ad_{R^T(theta)} [y, z, v_z, 2 omega]` with
/// `v_z = 0.2 (-delta z - alpha y - 3 beta x^2 y - gamma omega sin(theta))`.
pub fn duffing_velocity(g_w0: &Pose, d: &DuffingParams) -> BodyVelocity {
    let [x, y, z] = [g_w0.p.x, g_w0.p.y, g_w0.p.z];
    let v_z = 0.2 * (-d.delta * z - d.alpha * y - 3.0 * d.beta * x * x * y - d.gamma * d.omega * g_w0.theta.sin());
    let world = Vector4::new(y, z, v_z, 2.0 * d.omega);
    BodyVelocity::from_vector(&(adjoint(-g_w0.theta) * world * 0.5))
}

/// `V = Ad_{R^T(theta_w0)} (R(theta_d) v_d - k vec(g_w0 g_d^{-1}))`, where the
/// feedforward `R(theta_d) v_d` is the desired world-frame velocity.
pub fn square_velocity(g_w0: &Pose, sq: &SquareTrack, t: f64) -> BodyVelocity {
    let (g_d, world_ff) = sq.desired(t);
    square_velocity_from(g_w0, &g_d, &world_ff, sq.tracking_gain)
}

pub fn square_velocity_from(g_w0: &Pose, g_d: &Pose, world_ff: &Vector4<f64>, gain: f64) -> BodyVelocity {
    let err = vec_of(&compose(g_w0, &inverse(g_d)));
    BodyVelocity::from_vector(&(adjoint(-g_w0.theta) * (world_ff - err * gain)))
}

/// One RK4 step of `g' = g V^(g, t)` on the 4x4 matrix, projected back to a pose.
pub fn step_target(motion: &TargetMotion, g: &Pose, t: f64, dt: f64) -> Pose {
    let f = |m: &Matrix4<f64>, s: f64| {
        let pose = Pose::from_matrix(m);
        m * hat(&motion.velocity(&pose, s)).matrix()
    };
    let m = g.matrix();
    let k1 = f(&m, t);
    let k2 = f(&(m + k1 * (dt / 2.0)), t + dt / 2.0);
    let k3 = f(&(m + k2 * (dt / 2.0)), t + dt / 2.0);
    let k4 = f(&(m + k3 * dt), t + dt);
    Pose::from_matrix(&(m + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

/// Samples `(t, pose)` of the target trajectory on a uniform grid, inclusive of both ends.
pub fn rollout(motion: &TargetMotion, initial: &Pose, duration: f64, dt: f64) -> Vec<(f64, Pose)> {
    let steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut g = *initial;
    out.push((0.0, g));
    for k in 0..steps {
        let t = k as f64 * dt;
        g = step_target(motion, &g, t, dt);
        out.push(((k + 1) as f64 * dt, g));
    }
    out
}

/// World-frame rotation of a body velocity, for logging.
pub fn world_velocity(g: &Pose, v: &BodyVelocity) -> Vector4<f64> {
    let w = rot_z(g.theta) * v.v;
    Vector4::new(w.x, w.y, w.z, v.omega)
}
