//! Bound diagnostics over the trained experts and the three-mode comparison.

use nalgebra::Vector4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fusion::aggregate_norms;
use crate::gp::{self, BetaRule, BoundReport, GpExpert, Region};

use super::config::{Mode, ScenarioConfig};
use super::sim::{run, RunInputs, RunMetrics, RunOutput};

/// Lipschitz constant of the posterior mean reported for the reference scenario.
pub const REFERENCE_L_MU: f64 = 3.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainConditionReport {
    pub delta: f64,
    pub beta_rule: BetaRule,
    pub per_drone: Vec<BoundReport>,
    /// Per channel, the maximum over experts.
    pub l_mu_channels: [f64; 4],
    pub delta_bar_channels: [f64; 4],
    /// Euclidean norms of the per-channel vectors.
    pub l_mu: f64,
    pub delta_bar: f64,
    pub gamma_sq_max: f64,
    pub reference_l_mu: f64,
}

/// Collects `L_mu`, `gamma^2`, `beta` and `Delta_bar` for every expert.
/// The gain condition itself is not evaluated.
pub fn gain_condition_report(
    experts: &[GpExpert],
    region: &Region,
    rule: BetaRule,
    delta: f64,
) -> Result<GainConditionReport> {
    let per_drone = experts
        .par_iter()
        .map(|e| gp::bound_report(e, rule, delta, region))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let channel_max = |f: fn(&BoundReport) -> [f64; 4]| {
        let mut out = [0.0f64; 4];
        for r in &per_drone {
            for (o, v) in out.iter_mut().zip(f(r)) {
                *o = o.max(v);
            }
        }
        out
    };
    let l_mu_channels = channel_max(|r| r.l_mu);
    let delta_bar_channels = channel_max(|r| r.delta_bar);
    let (l_mu, delta_bar) = aggregate_norms(&Vector4::from(l_mu_channels), &Vector4::from(delta_bar_channels));
    let gamma_sq_max = per_drone.iter().flat_map(|r| r.gamma_sq).fold(0.0, f64::max);
    Ok(GainConditionReport {
        delta,
        beta_rule: rule,
        per_drone,
        l_mu_channels,
        delta_bar_channels,
        l_mu,
        delta_bar,
        gamma_sq_max,
        reference_l_mu: REFERENCE_L_MU,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquaredMeans {
    pub no_gp: f64,
    pub local_gp: f64,
    pub distributed_gp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub seed: u64,
    pub squared_mean_e: SquaredMeans,
    /// `distributed_gp < local_gp < no_gp`.
    pub ordering_holds: bool,
    pub runs: Vec<RunMetrics>,
}

/// Runs the three feedforward modes on identical inputs.
pub fn compare(cfg: &ScenarioConfig, inputs: &RunInputs) -> Result<(Comparison, Vec<RunOutput>)> {
    let outputs = Mode::COMPARED
        .par_iter()
        .map(|&mode| {
            let cfg = ScenarioConfig { mode, ..cfg.clone() };
            run(&cfg, inputs)
        })
        .collect::<Result<Vec<_>>>()?;
    let sm = SquaredMeans {
        no_gp: outputs[0].metrics.squared_mean_e,
        local_gp: outputs[1].metrics.squared_mean_e,
        distributed_gp: outputs[2].metrics.squared_mean_e,
    };
    let comparison = Comparison {
        seed: cfg.seed,
        ordering_holds: sm.distributed_gp < sm.local_gp && sm.local_gp < sm.no_gp,
        squared_mean_e: sm,
        runs: outputs.iter().map(|o| o.metrics.clone()).collect(),
    };
    Ok((comparison, outputs))
}
