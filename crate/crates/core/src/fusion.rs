//! Product-of-experts fusion of neighbourhood GP predictions.

use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use crate::error::FusionError;
use crate::geometry::Pose;
use crate::gp::{BoundReport, Prediction, CHANNELS, VAR_FLOOR};

/// What a drone broadcasts to its neighbours each step: its expert's
/// prediction evaluated at its own target-pose estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertMessage {
    pub drone: usize,
    pub mu: [f64; CHANNELS],
    pub var: [f64; CHANNELS],
    pub pose: Pose,
}

impl ExpertMessage {
    pub fn new(drone: usize, prediction: &Prediction, pose: Pose) -> Self {
        Self {
            drone,
            mu: prediction.mu.into(),
            var: prediction.var.into(),
            pose,
        }
    }

    pub fn prediction(&self) -> Prediction {
        Prediction {
            mu: self.mu.into(),
            var: self.var.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedPrediction {
    pub mu: Vector4<f64>,
    pub var: Vector4<f64>,
    /// `weights[k][j]`: weight of member `k` on channel `j`.
    pub weights: Vec<[f64; CHANNELS]>,
}

/// Precision-weighted fusion: per channel `1/var = sum_k 1/var_k`,
/// `w_k = var / var_k`, `mu = sum_k w_k mu_k`.
///
/// A single member is returned unchanged.
pub fn fuse(members: &[Prediction]) -> Result<FusedPrediction, FusionError> {
    match members {
        [] => Err(FusionError::Empty),
        [only] => Ok(FusedPrediction {
            mu: only.mu,
            var: only.var,
            weights: vec![[1.0; CHANNELS]],
        }),
        _ => {
            let mut mu = Vector4::zeros();
            let mut var = Vector4::zeros();
            let mut weights = vec![[0.0; CHANNELS]; members.len()];
            for j in 0..CHANNELS {
                let precision: f64 = members.iter().map(|m| 1.0 / m.var[j].max(VAR_FLOOR)).sum();
                var[j] = 1.0 / precision;
                for (k, m) in members.iter().enumerate() {
                    let w = var[j] / m.var[j].max(VAR_FLOOR);
                    weights[k][j] = w;
                    mu[j] += w * m.mu[j];
                }
            }
            Ok(FusedPrediction { mu, var, weights })
        }
    }
}

/// Fused error radius for drone `i`: per channel
/// `max_k Delta_j^(k) + max_k L_mu_j^(k) * max_k ||x_k - x_i||`, where `x_k`
/// are the flattened pose estimates at which each member was queried.
pub fn fused_error_radius(
    members: &[(BoundReport, Vector4<f64>)],
    self_pose: &Vector4<f64>,
) -> Result<Vector4<f64>, FusionError> {
    if members.is_empty() {
        return Err(FusionError::Empty);
    }
    let dispersion = members.iter().map(|(_, x)| (x - self_pose).norm()).fold(0.0, f64::max);
    Ok(Vector4::from_fn(|j, _| {
        let delta_bar = members.iter().map(|(b, _)| b.delta_bar[j]).fold(0.0, f64::max);
        let l_mu = members.iter().map(|(b, _)| b.l_mu[j]).fold(0.0, f64::max);
        delta_bar + l_mu * dispersion
    }))
}

/// Euclidean norms of the per-channel Lipschitz constants and radii.
pub fn aggregate_norms(l_mu: &Vector4<f64>, delta_bar: &Vector4<f64>) -> (f64, f64) {
    (l_mu.norm(), delta_bar.norm())
}
