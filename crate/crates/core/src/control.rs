//! Passivity-based pursuit/observer control law and the per-drone error dynamics.
//!
//! Each drone carries two error poses: the control error
//! `g_c = g_d^{-1} g_bar_i0` and the estimation error `g_e = g_bar_i0^{-1} g_i0`.
//! They evolve as
//!
//! ```text
//! g_e' = u_e^ g_e + g_e V_w0^
//! g_c' = u_c^ g_c - g_c u_e^
//! ```
//!
//! and the input is `u = -K N e - B c - A mu`, with `c` the consensus term and
//! `mu` the (fused) prediction of the target body velocity.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::geometry::{adjoint, compose, hat, hat4, inverse, phi, vec_of, BodyVelocity, Pose};

pub type Vector8 = SVector<f64, 8>;
pub type Matrix8 = SMatrix<f64, 8, 8>;
pub type Matrix8x4 = SMatrix<f64, 8, 4>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub k_c: [f64; 4],
    pub k_e: [f64; 4],
    pub k_s: f64,
}

impl Gains {
    /// 100 on every control and estimation channel, consensus 70.
    pub fn simulation() -> Self {
        Self {
            k_c: [100.0; 4],
            k_e: [100.0; 4],
            k_s: 70.0,
        }
    }

    /// Hardware-experiment gains: 13/13/13/7, 8, 1.
    pub fn experiment() -> Self {
        Self {
            k_c: [13.0, 13.0, 13.0, 7.0],
            k_e: [8.0; 4],
            k_s: 1.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        self.k_c.iter().chain(&self.k_e).all(|&k| ok(k)) && ok(self.k_s)
    }
}

impl Default for Gains {
    fn default() -> Self {
        Self::simulation()
    }
}

/// Gains as written in a scenario file: a preset name or explicit values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainsSpec {
    Preset(GainPreset),
    Custom(Gains),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainPreset {
    Sim,
    Experiment,
}

impl GainsSpec {
    pub fn resolve(&self) -> Gains {
        match self {
            Self::Preset(GainPreset::Sim) => Gains::simulation(),
            Self::Preset(GainPreset::Experiment) => Gains::experiment(),
            Self::Custom(g) => *g,
        }
    }
}

impl Default for GainsSpec {
    fn default() -> Self {
        Self::Preset(GainPreset::Sim)
    }
}

/// Control and estimation error poses of one drone.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorState {
    pub g_c: Pose,
    pub g_e: Pose,
}

impl ErrorState {
    pub fn new(g_c: Pose, g_e: Pose) -> Self {
        Self { g_c, g_e }
    }

    pub fn e_c(&self) -> Vector4<f64> {
        vec_of(&self.g_c)
    }

    pub fn e_e(&self) -> Vector4<f64> {
        vec_of(&self.g_e)
    }

    /// `[e_c; e_e]`.
    pub fn stacked(&self) -> Vector8 {
        let mut e = Vector8::zeros();
        e.fixed_rows_mut::<4>(0).copy_from(&self.e_c());
        e.fixed_rows_mut::<4>(4).copy_from(&self.e_e());
        e
    }

    /// Largest of `|theta_c|`, `|theta_e|`.
    pub fn max_angle(&self) -> f64 {
        self.g_c.theta.abs().max(self.g_e.theta.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ControlInput {
    pub u_c: Vector4<f64>,
    pub u_e: Vector4<f64>,
}

impl ControlInput {
    pub fn from_stacked(u: &Vector8) -> Self {
        Self {
            u_c: u.fixed_rows::<4>(0).into_owned(),
            u_e: u.fixed_rows::<4>(4).into_owned(),
        }
    }

    pub fn stacked(&self) -> Vector8 {
        let mut u = Vector8::zeros();
        u.fixed_rows_mut::<4>(0).copy_from(&self.u_c);
        u.fixed_rows_mut::<4>(4).copy_from(&self.u_e);
        u
    }
}

/// `[[I, 0], [-Ad_R(theta_c), I]]`.
pub fn n_matrix(theta_c: f64) -> Matrix8 {
    let mut n = Matrix8::identity();
    n.fixed_view_mut::<4, 4>(4, 0).copy_from(&(-adjoint(theta_c)));
    n
}

/// `[Ad_{R^T(theta_c)}; I]`.
pub fn b_matrix(theta_c: f64) -> Matrix8x4 {
    let mut b = Matrix8x4::zeros();
    b.fixed_view_mut::<4, 4>(0, 0).copy_from(&adjoint(-theta_c));
    b.fixed_view_mut::<4, 4>(4, 0).copy_from(&Matrix4::identity());
    b
}

/// `[Ad_{R^T(theta_e)} Ad_{R^T(theta_c)}; Ad_{R^T(theta_e)}]`.
pub fn a_matrix(theta_e: f64, theta_c: f64) -> Matrix8x4 {
    let mut a = Matrix8x4::zeros();
    let ad_e = adjoint(-theta_e);
    a.fixed_view_mut::<4, 4>(0, 0).copy_from(&(ad_e * adjoint(-theta_c)));
    a.fixed_view_mut::<4, 4>(4, 0).copy_from(&ad_e);
    a
}

/// `diag(k_c, v k_e)`.
pub fn k_matrix(gains: &Gains, visible: bool) -> Matrix8 {
    let v = if visible { 1.0 } else { 0.0 };
    let mut d = Vector8::zeros();
    for i in 0..4 {
        d[i] = gains.k_c[i];
        d[i + 4] = v * gains.k_e[i];
    }
    Matrix8::from_diagonal(&d)
}

/// `sum_j k_s vec(g_bar_wi^{-1} g_bar_wj)`.
pub fn consensus_term(self_estimate: &Pose, neighbor_estimates: &[Pose], k_s: f64) -> Vector4<f64> {
    let inv = inverse(self_estimate);
    neighbor_estimates.iter().map(|g| vec_of(&compose(&inv, g)) * k_s).sum()
}

/// `u = -K N e - B c - A mu` for a stacked error `e` and fixed angles.
/// Without a feedforward (`mu = None`) the last term is dropped.
pub fn control_law_stacked(
    e: &Vector8,
    theta_c: f64,
    theta_e: f64,
    gains: &Gains,
    visible: bool,
    consensus: &Vector4<f64>,
    mu: Option<&Vector4<f64>>,
) -> ControlInput {
    let mut u = -(k_matrix(gains, visible) * n_matrix(theta_c) * e) - b_matrix(theta_c) * consensus;
    if let Some(mu) = mu {
        u -= a_matrix(theta_e, theta_c) * mu;
    }
    ControlInput::from_stacked(&u)
}

pub fn control_law(
    state: &ErrorState,
    gains: &Gains,
    visible: bool,
    consensus: &Vector4<f64>,
    mu: Option<&Vector4<f64>>,
) -> ControlInput {
    control_law_stacked(
        &state.stacked(),
        state.g_c.theta,
        state.g_e.theta,
        gains,
        visible,
        consensus,
        mu,
    )
}

/// Time derivatives `(g_c', g_e')` in matrix form for matrix-valued states.
pub fn error_dynamics_matrix(
    g_c: &Matrix4<f64>,
    g_e: &Matrix4<f64>,
    u: &ControlInput,
    target: &BodyVelocity,
) -> (Matrix4<f64>, Matrix4<f64>) {
    let u_c = hat4(&u.u_c);
    let u_e = hat4(&u.u_e);
    let v = *hat(target).matrix();
    let dg_e = u_e * g_e + g_e * v;
    let dg_c = u_c * g_c - g_c * u_e;
    (dg_c, dg_e)
}

pub fn error_dynamics(state: &ErrorState, u: &ControlInput, target: &BodyVelocity) -> (Matrix4<f64>, Matrix4<f64>) {
    error_dynamics_matrix(&state.g_c.matrix(), &state.g_e.matrix(), u, target)
}

/// `S_i = (|p_e|^2 + phi(theta_e) + |p_c|^2 + phi(theta_c)) / 2`.
pub fn storage(state: &ErrorState) -> f64 {
    0.5 * (state.g_e.p.norm_squared() + phi(state.g_e.theta) + state.g_c.p.norm_squared() + phi(state.g_c.theta))
}

pub fn total_storage(states: &[ErrorState]) -> f64 {
    states.iter().map(storage).sum()
}

/// World and relative poses implied by a drone's error state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DronePoses {
    /// Drone pose in the world.
    pub g_wi: Pose,
    /// Estimated target pose relative to the drone.
    pub g_bar_i0: Pose,
    /// The drone's estimate of the target pose in the world.
    pub g_bar_wi: Pose,
    /// True target pose relative to the drone.
    pub g_i0: Pose,
}

/// Inverts the error definitions: `g_bar_i0 = g_d g_c`, `g_i0 = g_bar_i0 g_e`,
/// `g_wi = g_w0 g_i0^{-1}`, `g_bar_wi = g_wi g_bar_i0`.
pub fn reconstruct_poses(g_w0: &Pose, g_d: &Pose, state: &ErrorState) -> DronePoses {
    let g_bar_i0 = compose(g_d, &state.g_c);
    let g_i0 = compose(&g_bar_i0, &state.g_e);
    let g_wi = compose(g_w0, &inverse(&g_i0));
    let g_bar_wi = compose(&g_wi, &g_bar_i0);
    DronePoses {
        g_wi,
        g_bar_i0,
        g_bar_wi,
        g_i0,
    }
}

/// Error state from estimated and true relative poses.
pub fn error_state_from_poses(g_d: &Pose, g_bar_i0: &Pose, g_i0: &Pose) -> ErrorState {
    ErrorState::new(compose(&inverse(g_d), g_bar_i0), compose(&inverse(g_bar_i0), g_i0))
}
