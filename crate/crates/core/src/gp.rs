//! Exact Gaussian-process regression with a squared-exponential ARD kernel.
//!
//! Each expert owns a private dataset of flattened target poses
//! `[p_x, p_y, p_z, theta]` and noisy body-velocity observations. The four
//! output channels are modelled as independent GPs with their own
//! hyperparameters and share the input locations.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::GpError;

pub const CHANNELS: usize = 4;
pub const INPUT_DIM: usize = 4;

/// Floor applied to every predictive variance before it is inverted.
pub const VAR_FLOOR: f64 = 1e-12;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

pub const HYPER_MIN: f64 = 1e-3;
pub const HYPER_MAX: f64 = 1e3;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vector4<f64>>,
    outputs: Vec<Vector4<f64>>,
    noise_std: Vector4<f64>,
}

impl Dataset {
    pub fn new(
        inputs: Vec<Vector4<f64>>,
        outputs: Vec<Vector4<f64>>,
        noise_std: Vector4<f64>,
    ) -> Result<Self, GpError> {
        if inputs.len() != outputs.len() {
            return Err(GpError::LengthMismatch {
                inputs: inputs.len(),
                outputs: outputs.len(),
            });
        }
        if inputs.is_empty() {
            return Err(GpError::EmptyDataset);
        }
        for (channel, &value) in noise_std.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(GpError::InvalidNoise { channel, value });
            }
        }
        Ok(Self {
            inputs,
            outputs,
            noise_std,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vector4<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vector4<f64>] {
        &self.outputs
    }

    pub fn noise_std(&self) -> &Vector4<f64> {
        &self.noise_std
    }

    /// Output column `channel` as a vector.
    pub fn targets(&self, channel: usize) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.outputs.iter().map(|y| y[channel]))
    }

    /// A copy with one more observation appended.
    pub fn with_point(&self, x: Vector4<f64>, y: Vector4<f64>) -> Self {
        let mut d = self.clone();
        d.inputs.push(x);
        d.outputs.push(y);
        d
    }
}

/// Hyperparameters of one output channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelHyper {
    pub sigma_f: f64,
    pub lengthscales: [f64; INPUT_DIM],
}

impl ChannelHyper {
    pub fn new(sigma_f: f64, lengthscales: [f64; INPUT_DIM]) -> Self {
        Self { sigma_f, lengthscales }
    }

    fn is_valid(&self) -> bool {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        ok(self.sigma_f) && self.lengthscales.iter().all(|&l| ok(l))
    }

    fn to_log(self) -> [f64; 1 + INPUT_DIM] {
        let mut v = [self.sigma_f.ln(); 1 + INPUT_DIM];
        for (d, l) in self.lengthscales.iter().enumerate() {
            v[d + 1] = l.ln();
        }
        v
    }

    fn from_log(v: &[f64; 1 + INPUT_DIM]) -> Self {
        let mut l = [0.0; INPUT_DIM];
        for d in 0..INPUT_DIM {
            l[d] = v[d + 1].exp();
        }
        Self::new(v[0].exp(), l)
    }
}

impl Default for ChannelHyper {
    fn default() -> Self {
        Self::new(1.0, [1.0; INPUT_DIM])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct HyperParams {
    pub channels: [ChannelHyper; CHANNELS],
}

impl HyperParams {
    pub fn uniform(h: ChannelHyper) -> Self {
        Self {
            channels: [h; CHANNELS],
        }
    }

    pub fn validate(&self) -> Result<(), GpError> {
        match self.channels.iter().position(|c| !c.is_valid()) {
            Some(channel) => Err(GpError::InvalidHyperParams { channel }),
            None => Ok(()),
        }
    }

    /// Data-driven starting point: `sigma_f` from the output spread, lengthscales
    /// from the input spread (falling back to 1 for degenerate dimensions).
    pub fn heuristic(d: &Dataset) -> Self {
        let m = d.len() as f64;
        let spread = |vals: &mut dyn Iterator<Item = f64>| {
            let v: Vec<f64> = vals.collect();
            let mean = v.iter().sum::<f64>() / m;
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt()
        };
        let mut lengthscales = [1.0; INPUT_DIM];
        for (k, l) in lengthscales.iter_mut().enumerate() {
            let s = spread(&mut d.inputs.iter().map(|x| x[k]));
            if s > 1e-6 {
                *l = s.clamp(HYPER_MIN, HYPER_MAX);
            }
        }
        let mut channels = [ChannelHyper::default(); CHANNELS];
        for (c, h) in channels.iter_mut().enumerate() {
            let y = d.targets(c);
            let rms = (y.norm_squared() / m).sqrt();
            h.sigma_f = rms.max(d.noise_std[c]).clamp(HYPER_MIN, HYPER_MAX);
            h.lengthscales = lengthscales;
        }
        Self { channels }
    }
}

/// `sigma_f^2 exp(-sum_d (x_d - x2_d)^2 / (2 l_d^2))`.
pub fn kernel(x: &Vector4<f64>, x2: &Vector4<f64>, h: &ChannelHyper) -> f64 {
    let mut r2 = 0.0;
    for d in 0..INPUT_DIM {
        let z = (x[d] - x2[d]) / h.lengthscales[d];
        r2 += z * z;
    }
    h.sigma_f * h.sigma_f * (-0.5 * r2).exp()
}

/// Gram matrix `[k(x_l, x_l')]` without noise.
pub fn gram(inputs: &[Vector4<f64>], h: &ChannelHyper) -> DMatrix<f64> {
    let m = inputs.len();
    let mut k = DMatrix::zeros(m, m);
    for a in 0..m {
        k[(a, a)] = h.sigma_f * h.sigma_f;
        for b in 0..a {
            let v = kernel(&inputs[a], &inputs[b], h);
            k[(a, b)] = v;
            k[(b, a)] = v;
        }
    }
    k
}

/// One trained output channel.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    pub hyper: ChannelHyper,
    pub noise_var: f64,
    /// Extra diagonal added to make the factorization succeed (0 when none).
    pub jitter: f64,
    chol: Cholesky<f64, Dyn>,
    /// `(K + sigma_n^2 I)^{-1} y`.
    alpha: DVector<f64>,
}

impl ChannelModel {
    fn fit(
        inputs: &[Vector4<f64>],
        y: &DVector<f64>,
        hyper: ChannelHyper,
        noise_var: f64,
        channel: usize,
    ) -> Result<Self, GpError> {
        let mut k = gram(inputs, &hyper);
        for i in 0..inputs.len() {
            k[(i, i)] += noise_var;
        }
        let (chol, jitter) = factorize(k, hyper.sigma_f * hyper.sigma_f, channel)?;
        let alpha = chol.solve(y);
        Ok(Self {
            hyper,
            noise_var,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    pub fn cholesky(&self) -> &Cholesky<f64, Dyn> {
        &self.chol
    }

    /// `sum_i log L_ii = (1/2) log det(K + sigma_n^2 I)`.
    fn half_log_det(&self) -> f64 {
        self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum()
    }
}

/// Cholesky with jitter escalation: none, then `1e-10 * scale` growing by 10x
/// up to `1e-4 * scale`.
fn factorize(k: DMatrix<f64>, scale: f64, channel: usize) -> Result<(Cholesky<f64, Dyn>, f64), GpError> {
    if let Some(c) = k.clone().cholesky() {
        return Ok((c, 0.0));
    }
    let mut jitter = JITTER_START * scale;
    while jitter <= JITTER_MAX * scale * (1.0 + 1e-9) {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(GpError::Factorization {
        channel,
        jitter: JITTER_MAX * scale,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mu: Vector4<f64>,
    pub var: Vector4<f64>,
}

/// A trained per-drone GP expert.
#[derive(Clone, Debug)]
pub struct GpExpert {
    dataset: Dataset,
    hyper: HyperParams,
    channels: Vec<ChannelModel>,
}

/// Builds the per-channel Gram matrices and factorizes `K + sigma_n^2 I`.
pub fn fit(dataset: &Dataset, hyper: &HyperParams) -> Result<GpExpert, GpError> {
    hyper.validate()?;
    let channels = (0..CHANNELS)
        .map(|c| {
            let y = dataset.targets(c);
            let noise_var = dataset.noise_std[c] * dataset.noise_std[c];
            ChannelModel::fit(&dataset.inputs, &y, hyper.channels[c], noise_var, c)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GpExpert {
        dataset: dataset.clone(),
        hyper: *hyper,
        channels,
    })
}

impl GpExpert {
    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn channel(&self, c: usize) -> &ChannelModel {
        &self.channels[c]
    }

    /// Predictive mean and variance at `x`; variances are clamped to
    /// `[VAR_FLOOR, sigma_f^2]`.
    pub fn predict(&self, x: &Vector4<f64>) -> Prediction {
        let m = self.dataset.len();
        let mut mu = Vector4::zeros();
        let mut var = Vector4::zeros();
        let mut k_star = DVector::zeros(m);
        for (c, ch) in self.channels.iter().enumerate() {
            for (l, xl) in self.dataset.inputs.iter().enumerate() {
                k_star[l] = kernel(x, xl, &ch.hyper);
            }
            mu[c] = k_star.dot(&ch.alpha);
            let prior = ch.hyper.sigma_f * ch.hyper.sigma_f;
            let v = ch
                .chol
                .l_dirty()
                .solve_lower_triangular(&k_star)
                .expect("Cholesky factor has a positive diagonal");
            var[c] = (prior - v.norm_squared()).clamp(VAR_FLOOR, prior.max(VAR_FLOOR));
        }
        Prediction { mu, var }
    }

    /// Predictive mean only.
    pub fn mean(&self, x: &Vector4<f64>) -> Vector4<f64> {
        let mut mu = Vector4::zeros();
        for (c, ch) in self.channels.iter().enumerate() {
            mu[c] = self
                .dataset
                .inputs
                .iter()
                .zip(ch.alpha.iter())
                .map(|(xl, a)| kernel(x, xl, &ch.hyper) * a)
                .sum();
        }
        mu
    }

    /// Log marginal likelihood of the training targets, per channel.
    pub fn log_marginal_likelihood_channels(&self) -> Vector4<f64> {
        let m = self.dataset.len() as f64;
        let mut out = Vector4::zeros();
        for (c, ch) in self.channels.iter().enumerate() {
            let y = self.dataset.targets(c);
            out[c] = -0.5 * y.dot(&ch.alpha) - ch.half_log_det() - 0.5 * m * (2.0 * PI).ln();
        }
        out
    }

    /// `(1/2) log det(I + sigma_n^{-2} K)` per channel.
    pub fn information_gain(&self) -> Vector4<f64> {
        let m = self.dataset.len() as f64;
        let mut out = Vector4::zeros();
        for (c, ch) in self.channels.iter().enumerate() {
            // log det(K + s^2 I) / 2 - (M/2) log s^2
            out[c] = (ch.half_log_det() - 0.5 * m * ch.noise_var.ln()).max(0.0);
        }
        out
    }
}

/// Standard GP evidence summed over the four channels.
pub fn log_marginal_likelihood(dataset: &Dataset, hyper: &HyperParams) -> Result<f64, GpError> {
    Ok(fit(dataset, hyper)?.log_marginal_likelihood_channels().sum())
}

fn channel_lml(dataset: &Dataset, h: ChannelHyper, channel: usize) -> Option<f64> {
    let y = dataset.targets(channel);
    let noise_var = dataset.noise_std[channel].powi(2);
    let ch = ChannelModel::fit(&dataset.inputs, &y, h, noise_var, channel).ok()?;
    let m = dataset.len() as f64;
    let v = -0.5 * y.dot(&ch.alpha) - ch.half_log_det() - 0.5 * m * (2.0 * PI).ln();
    v.is_finite().then_some(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeResult {
    pub hyper: HyperParams,
    pub lml_init: Vector4<f64>,
    pub lml: Vector4<f64>,
    /// Accepted LML values per channel, starting with the initial one.
    pub trace: Vec<Vec<f64>>,
}

/// Gradient-free log-space coordinate ascent on the evidence.
///
/// Each channel is optimized independently with `budget` evaluations: every
/// coordinate of `log [sigma_f, l_1..l_4]` is tried at `+-step`, improvements
/// are kept, and the step halves after a sweep without improvement. Values are
/// kept within `[HYPER_MIN, HYPER_MAX]`. Channels whose initial evidence cannot
/// be evaluated are returned unchanged.
pub fn optimize_hyperparams(dataset: &Dataset, init: &HyperParams, budget: usize) -> OptimizeResult {
    let mut hyper = *init;
    let mut lml_init = Vector4::repeat(f64::NEG_INFINITY);
    let mut lml = Vector4::repeat(f64::NEG_INFINITY);
    let mut trace = Vec::with_capacity(CHANNELS);
    let (lo, hi) = (HYPER_MIN.ln(), HYPER_MAX.ln());
    for c in 0..CHANNELS {
        let Some(start) = channel_lml(dataset, init.channels[c], c) else {
            trace.push(Vec::new());
            continue;
        };
        let mut evals = 1;
        let mut best = start;
        let mut x = init.channels[c].to_log();
        let mut step = 1.0;
        let mut history = vec![start];
        while evals < budget && step > 1e-3 {
            let mut improved = false;
            'coords: for k in 0..x.len() {
                for dir in [1.0, -1.0] {
                    if evals >= budget {
                        break 'coords;
                    }
                    let mut cand = x;
                    cand[k] = (cand[k] + dir * step).clamp(lo, hi);
                    if cand[k] == x[k] {
                        continue;
                    }
                    evals += 1;
                    if let Some(v) = channel_lml(dataset, ChannelHyper::from_log(&cand), c) {
                        if v > best {
                            best = v;
                            x = cand;
                            history.push(v);
                            improved = true;
                            break;
                        }
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        hyper.channels[c] = ChannelHyper::from_log(&x);
        lml_init[c] = start;
        lml[c] = best;
        trace.push(history);
    }
    OptimizeResult {
        hyper,
        lml_init,
        lml,
        trace,
    }
}

/// Confidence-coefficient rule for the high-probability error radius.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaRule {
    /// `2 log(M pi^2 / (6 delta)) + 2 gamma^2`.
    #[default]
    Srinivas,
}

impl BetaRule {
    pub fn beta(&self, m: usize, gamma_sq: f64, delta: f64) -> f64 {
        match self {
            Self::Srinivas => {
                let m = m.max(1) as f64;
                (2.0 * (m * PI * PI / (6.0 * delta)).ln() + 2.0 * gamma_sq).max(0.0)
            }
        }
    }
}

fn check_delta(delta: f64) -> Result<(), GpError> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(GpError::InvalidDelta(delta))
    }
}

/// `sqrt(beta) * sqrt(var(x))` per channel.
pub fn error_radius(expert: &GpExpert, rule: BetaRule, delta: f64, x: &Vector4<f64>) -> Result<Vector4<f64>, GpError> {
    check_delta(delta)?;
    let beta = betas(expert, rule, delta);
    let var = expert.predict(x).var;
    Ok(Vector4::from_fn(|c, _| radius(beta[c], var[c])))
}

/// The radius formula itself; exposed so callers can reuse cached betas.
pub fn radius(beta: f64, var: f64) -> f64 {
    (beta * var.max(0.0)).sqrt()
}

fn betas(expert: &GpExpert, rule: BetaRule, delta: f64) -> Vector4<f64> {
    let gamma = expert.information_gain();
    Vector4::from_fn(|c, _| rule.beta(expert.dataset.len(), gamma[c], delta))
}

/// Axis-aligned box in input space, sampled on a regular grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub lower: [f64; INPUT_DIM],
    pub upper: [f64; INPUT_DIM],
    pub points_per_dim: usize,
}

impl Region {
    /// Bounding box of `points`, padded by `pad` on every side.
    pub fn bounding(points: &[Vector4<f64>], pad: f64, points_per_dim: usize) -> Self {
        let mut lower = [f64::INFINITY; INPUT_DIM];
        let mut upper = [f64::NEG_INFINITY; INPUT_DIM];
        for p in points {
            for d in 0..INPUT_DIM {
                lower[d] = lower[d].min(p[d] - pad);
                upper[d] = upper[d].max(p[d] + pad);
            }
        }
        Self {
            lower,
            upper,
            points_per_dim,
        }
    }

    fn axis(&self, d: usize) -> Vec<f64> {
        let n = self.points_per_dim.max(1);
        if n == 1 {
            return vec![0.5 * (self.lower[d] + self.upper[d])];
        }
        (0..n)
            .map(|k| self.lower[d] + (self.upper[d] - self.lower[d]) * k as f64 / (n - 1) as f64)
            .collect()
    }

    /// Grid points in row-major order (last dimension fastest).
    pub fn grid(&self) -> Vec<Vector4<f64>> {
        let axes: Vec<Vec<f64>> = (0..INPUT_DIM).map(|d| self.axis(d)).collect();
        let mut out = Vec::new();
        for &a in &axes[0] {
            for &b in &axes[1] {
                for &c in &axes[2] {
                    for &d in &axes[3] {
                        out.push(Vector4::new(a, b, c, d));
                    }
                }
            }
        }
        out
    }
}

/// Lipschitz constants of the posterior mean, per channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzEstimate {
    /// `||alpha||_1 * sigma_f^2 e^{-1/2} / min_d l_d`.
    pub analytic: Vector4<f64>,
    /// Largest finite-difference slope between grid neighbours.
    pub empirical: Vector4<f64>,
}

pub fn lipschitz_of_mean(expert: &GpExpert, region: &Region) -> LipschitzEstimate {
    let analytic = Vector4::from_fn(|c, _| {
        let ch = &expert.channels[c];
        let l_min = ch.hyper.lengthscales.iter().copied().fold(f64::INFINITY, f64::min);
        ch.alpha.lp_norm(1) * ch.hyper.sigma_f.powi(2) * (-0.5f64).exp() / l_min
    });
    let grid = region.grid();
    let n = region.points_per_dim.max(1);
    let means: Vec<Vector4<f64>> = grid.iter().map(|x| expert.mean(x)).collect();
    let mut empirical = Vector4::zeros();
    // strides of each dimension in the row-major grid
    let strides = [n * n * n, n * n, n, 1];
    for idx in 0..grid.len() {
        for &stride in &strides {
            let coord = (idx / stride) % n;
            if coord + 1 >= n {
                continue;
            }
            let j = idx + stride;
            let dist = (grid[j] - grid[idx]).norm();
            if dist <= 0.0 {
                continue;
            }
            for c in 0..CHANNELS {
                empirical[c] = f64::max(empirical[c], (means[j][c] - means[idx][c]).abs() / dist);
            }
        }
    }
    LipschitzEstimate { analytic, empirical }
}

/// Per-expert bound diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub gamma_sq: [f64; CHANNELS],
    pub beta: [f64; CHANNELS],
    /// Supremum of the error radius over the region grid.
    pub delta_bar: [f64; CHANNELS],
    pub l_mu: [f64; CHANNELS],
    pub l_mu_empirical: [f64; CHANNELS],
}

pub fn bound_report(expert: &GpExpert, rule: BetaRule, delta: f64, region: &Region) -> Result<BoundReport, GpError> {
    check_delta(delta)?;
    let gamma = expert.information_gain();
    let beta = betas(expert, rule, delta);
    let mut delta_bar = [0.0; CHANNELS];
    for x in region.grid() {
        let var = expert.predict(&x).var;
        for c in 0..CHANNELS {
            delta_bar[c] = f64::max(delta_bar[c], radius(beta[c], var[c]));
        }
    }
    let lip = lipschitz_of_mean(expert, region);
    Ok(BoundReport {
        gamma_sq: gamma.into(),
        beta: beta.into(),
        delta_bar,
        l_mu: lip.analytic.into(),
        l_mu_empirical: lip.empirical.into(),
    })
}
