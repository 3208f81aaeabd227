//! Scenario configuration: one JSON document, every field optional.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::{ErrorState, Gains, GainsSpec};
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::gp::BetaRule;
use crate::network::{DroneGraph, GraphSpec};
use crate::vision::{CameraModel, FeatureSet};

use super::target::TargetMotion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No velocity feedforward.
    NoGp,
    /// Each drone feeds forward its own expert's mean.
    LocalGp,
    /// Each drone feeds forward the product-of-experts fusion over its neighbourhood.
    #[default]
    DistributedGp,
    /// Feeds forward the true target velocity.
    Oracle,
}

impl Mode {
    pub const COMPARED: [Mode; 3] = [Mode::NoGp, Mode::LocalGp, Mode::DistributedGp];

    pub fn name(&self) -> &'static str {
        match self {
            Self::NoGp => "no_gp",
            Self::LocalGp => "local_gp",
            Self::DistributedGp => "distributed_gp",
            Self::Oracle => "oracle",
        }
    }

    pub fn needs_experts(&self) -> bool {
        matches!(self, Self::LocalGp | Self::DistributedGp)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "no_gp" => Ok(Self::NoGp),
            "local_gp" => Ok(Self::LocalGp),
            "distributed_gp" => Ok(Self::DistributedGp),
            "oracle" => Ok(Self::Oracle),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Angular sectors of the xy-plane about the origin, one per drone.
/// Sector `k` spans counter-clockwise from `boundaries_deg[k]` to
/// `boundaries_deg[k + 1]` (wrapping around).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertRegions {
    pub boundaries_deg: Vec<f64>,
    pub samples_per_drone: usize,
}

impl Default for ExpertRegions {
    fn default() -> Self {
        Self {
            boundaries_deg: vec![90.0, 210.0, 330.0],
            samples_per_drone: 10,
        }
    }
}

impl ExpertRegions {
    pub fn len(&self) -> usize {
        self.boundaries_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries_deg.is_empty()
    }

    /// Index of the sector containing the planar point `(x, y)`.
    pub fn sector_of(&self, x: f64, y: f64) -> usize {
        let n = self.len();
        if n <= 1 {
            return 0;
        }
        let angle = y.atan2(x).to_degrees().rem_euclid(360.0);
        for k in 0..n {
            let start = self.boundaries_deg[k].rem_euclid(360.0);
            let width = (self.boundaries_deg[(k + 1) % n] - self.boundaries_deg[k]).rem_euclid(360.0);
            if (angle - start).rem_euclid(360.0) < width {
                return k;
            }
        }
        n - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples_per_drone == 0 {
            return Err(Error::Config("regions.samples_per_drone must be at least 1".into()));
        }
        let b = &self.boundaries_deg;
        if b.is_empty() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(
                "regions.boundaries_deg must be finite and nonempty".into(),
            ));
        }
        // strictly increasing and spanning less than a full turn, so sectors are disjoint
        if b.windows(2).any(|w| w[1] <= w[0]) || b[b.len() - 1] - b[0] >= 360.0 {
            return Err(Error::Config(
                "regions.boundaries_deg must be strictly increasing within one turn".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSettings {
    /// Observation noise variance of the generated data.
    pub noise_var: f64,
    /// Length and step of the trajectory roll-out used for data generation.
    pub rollout_duration: f64,
    pub rollout_dt: f64,
    /// Evidence evaluations per output channel.
    pub optimizer_budget: usize,
    pub delta: f64,
    pub beta_rule: BetaRule,
    /// Grid resolution of the bounded target region.
    pub region_points_per_dim: usize,
    pub region_pad: f64,
}

impl Default for GpSettings {
    fn default() -> Self {
        Self {
            noise_var: 0.01,
            rollout_duration: 100.0,
            rollout_dt: 0.01,
            optimizer_budget: 500,
            delta: 0.1,
            beta_rule: BetaRule::Srinivas,
            region_points_per_dim: 5,
            region_pad: 0.1,
        }
    }
}

impl GpSettings {
    /// Noise std used for training. Noiseless data is trained with a small floor.
    pub fn training_noise_std(&self) -> f64 {
        self.noise_var.sqrt().max(1e-3)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub graph: GraphSpec,
    pub gains: GainsSpec,
    pub camera: CameraModel,
    pub features: FeatureSet,
    pub target: TargetMotion,
    pub target_initial: Option<Pose>,
    /// Radius (m) the target position must stay within.
    pub target_bound: f64,
    pub regions: ExpertRegions,
    pub gp: GpSettings,
    pub mode: Mode,
    pub duration: f64,
    pub dt: f64,
    pub seed: u64,
    /// Desired relative poses `g_d`; a ring around the target by default.
    pub desired: Option<Vec<Pose>>,
    /// Initial control/estimation errors; identity by default.
    pub initial_errors: Option<Vec<ErrorState>>,
    pub theta_limit: f64,
    /// Seconds all drones may lose sight of the target before the run stops.
    pub target_lost_grace: f64,
    /// Std of Gaussian noise added to image coordinates.
    pub pixel_noise_std: f64,
    /// Trace rows are written every this many steps.
    pub trace_every: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            graph: GraphSpec::complete(3),
            gains: GainsSpec::default(),
            camera: CameraModel::default(),
            features: FeatureSet::default(),
            target: TargetMotion::default(),
            target_initial: None,
            target_bound: 5.0,
            regions: ExpertRegions::default(),
            gp: GpSettings::default(),
            mode: Mode::default(),
            duration: 100.0,
            dt: 0.005,
            seed: 0,
            desired: None,
            initial_errors: None,
            theta_limit: FRAC_PI_2,
            target_lost_grace: 1.0,
            pixel_noise_std: 0.0,
            trace_every: 10,
        }
    }
}

/// `n` drones on a circle of radius 0.15 m, 1 m in front of the target,
/// rotated so each looks at it from a different heading.
pub fn ring_desired(n: usize) -> Vec<Pose> {
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            Pose::from_xyz_theta(0.15 * a.cos(), 0.15 * a.sin(), 1.0, a)
        })
        .collect()
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn gains(&self) -> Gains {
        self.gains.resolve()
    }

    pub fn graph(&self) -> Result<DroneGraph> {
        Ok(self.graph.build()?)
    }

    pub fn initial_target(&self) -> Pose {
        self.target_initial.unwrap_or_else(|| self.target.default_initial())
    }

    pub fn desired_poses(&self) -> Vec<Pose> {
        self.desired.clone().unwrap_or_else(|| ring_desired(self.n()))
    }

    pub fn initial_error_states(&self) -> Vec<ErrorState> {
        self.initial_errors
            .clone()
            .unwrap_or_else(|| vec![ErrorState::default(); self.n()])
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: &str| Err(Error::Config(msg.to_string()));
        let n = self.n();
        self.graph()?;
        if !self.gains().is_valid() {
            return cfg("gains must be positive and finite");
        }
        self.camera.validate()?;
        if !self.target.is_valid() {
            return cfg("target parameters must be finite and positive where required");
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return cfg("duration must be positive");
        }
        if !(self.dt.is_finite() && self.dt > 0.0 && self.dt <= self.duration) {
            return cfg("dt must be positive and no larger than duration");
        }
        if !(self.theta_limit > 0.0 && self.theta_limit <= PI) {
            return cfg("theta_limit must lie in (0, pi]");
        }
        if !(self.target_lost_grace >= 0.0 && self.target_bound > 0.0) {
            return cfg("target_lost_grace must be nonnegative and target_bound positive");
        }
        if !(self.pixel_noise_std.is_finite() && self.pixel_noise_std >= 0.0) {
            return cfg("pixel_noise_std must be nonnegative");
        }
        if self.trace_every == 0 {
            return cfg("trace_every must be at least 1");
        }
        self.regions.validate()?;
        if self.regions.len() != n {
            return Err(Error::Config(format!(
                "{} expert regions for {n} drones",
                self.regions.len()
            )));
        }
        let gp = &self.gp;
        if !(gp.noise_var.is_finite() && gp.noise_var >= 0.0) {
            return cfg("gp.noise_var must be nonnegative");
        }
        if !(gp.rollout_duration > 0.0 && gp.rollout_dt > 0.0 && gp.rollout_dt <= gp.rollout_duration) {
            return cfg("gp.rollout_duration and gp.rollout_dt must be positive");
        }
        if gp.optimizer_budget == 0 || gp.region_points_per_dim == 0 {
            return cfg("gp.optimizer_budget and gp.region_points_per_dim must be at least 1");
        }
        if !(gp.delta > 0.0 && gp.delta < 1.0) {
            return cfg("gp.delta must lie in (0, 1)");
        }
        if let Some(d) = &self.desired {
            if d.len() != n || d.iter().any(|g| !g.is_finite()) {
                return cfg("desired must list one finite pose per drone");
            }
        }
        if let Some(e) = &self.initial_errors {
            if e.len() != n {
                return cfg("initial_errors must list one state per drone");
            }
        }
        Ok(())
    }
}
