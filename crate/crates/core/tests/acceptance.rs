//! Acceptance criteria, one printed PASS/FAIL line each. Exits nonzero if any fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use dgp_pursuit::control::ErrorState;
use dgp_pursuit::fusion::fuse;
use dgp_pursuit::geometry::{compose, integrate, inverse, phi, vec_of, BodyVelocity, Pose};
use dgp_pursuit::gp::{self, ChannelHyper, Dataset, HyperParams, Prediction};
use dgp_pursuit::network::DroneGraph;
use dgp_pursuit::scenario::data::{prepare_experts, trajectory_region};
use dgp_pursuit::scenario::{compare, gain_condition_report, run, Mode, RunInputs, ScenarioConfig, Simulator};
use nalgebra::{DMatrix, DVector, Matrix4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("mode ordering and magnitude", mode_ordering),
        ("GP predict vs dense-inverse oracle", gp_oracle),
        ("product-of-experts exactness", poe_exactness),
        ("error-dynamics second-order consistency", dynamics_order),
        ("oracle-feedforward convergence", oracle_convergence),
        ("weighted H positive definiteness", weighted_h),
        ("fused bound coverage", bound_coverage),
        ("cubic training cost", cubic_cost),
        ("trace determinism", determinism),
        ("pose group geometry", geometry_suite),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = std::panic::catch_unwind(check).unwrap_or_else(|_| outcome(false, "panicked"));
        let verdict = if r.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {verdict} [{name}] {} ({:.2} s)",
            k + 1,
            r.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within_factor(value: f64, reference: f64, factor: f64) -> bool {
    value >= reference / factor && value <= reference * factor
}

fn mode_ordering() -> Outcome {
    const REFERENCE: [f64; 3] = [3.0e-7, 3.6e-8, 5.6e-9];
    let mut strict = 0;
    let mut in_band = true;
    let mut slowest = Duration::ZERO;
    let mut lines = Vec::new();
    for seed in 0..5 {
        let cfg = ScenarioConfig {
            seed,
            ..Default::default()
        };
        let inputs = RunInputs {
            experts: prepare_experts(&cfg, seed).expect("experts"),
            bounds: None,
        };
        for mode in Mode::COMPARED {
            let start = Instant::now();
            run(&ScenarioConfig { mode, ..cfg.clone() }, &inputs).expect("run");
            slowest = slowest.max(start.elapsed());
        }
        let (c, _) = compare(&cfg, &inputs).expect("compare");
        let s = &c.squared_mean_e;
        strict += usize::from(c.ordering_holds);
        for (v, r) in [s.no_gp, s.local_gp, s.distributed_gp].iter().zip(REFERENCE) {
            in_band &= within_factor(*v, r, 30.0);
        }
        lines.push(format!(
            "seed {seed}: {:.2e}/{:.2e}/{:.2e}",
            s.no_gp, s.local_gp, s.distributed_gp
        ));
    }
    let fast = slowest.as_secs_f64() <= 60.0;
    outcome(
        strict >= 4 && in_band && fast,
        format!(
            "strict ordering {strict}/5, all within 30x of reference: {in_band}, slowest mode {:.2} s; {}",
            slowest.as_secs_f64(),
            lines.join("; ")
        ),
    )
}

/// SE-ARD kernel, written out independently of the library.
fn se_ard(a: &Vector4<f64>, b: &Vector4<f64>, sf: f64, l: &[f64; 4]) -> f64 {
    let mut s = 0.0;
    for d in 0..4 {
        s += ((a[d] - b[d]) / l[d]).powi(2);
    }
    sf * sf * (-0.5 * s).exp()
}

fn gp_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let m = rng.random_range(1..=50);
        let xs: Vec<Vector4<f64>> = (0..m)
            .map(|_| Vector4::from_fn(|_, _| rng.random_range(-2.0..2.0)))
            .collect();
        let ys: Vec<Vector4<f64>> = (0..m)
            .map(|_| Vector4::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let noise = Vector4::from_fn(|_, _| rng.random_range(0.05..0.5));
        let hyper = HyperParams {
            channels: std::array::from_fn(|_| {
                ChannelHyper::new(
                    rng.random_range(0.3..2.0),
                    std::array::from_fn(|_| rng.random_range(0.3..3.0)),
                )
            }),
        };
        let d = Dataset::new(xs.clone(), ys.clone(), noise).unwrap();
        let expert = gp::fit(&d, &hyper).unwrap();
        for _ in 0..5 {
            let x = Vector4::from_fn(|_, _| rng.random_range(-2.5..2.5));
            let p = expert.predict(&x);
            for c in 0..4 {
                let h = &hyper.channels[c];
                let k = DMatrix::from_fn(m, m, |i, j| {
                    se_ard(&xs[i], &xs[j], h.sigma_f, &h.lengthscales) + if i == j { noise[c].powi(2) } else { 0.0 }
                });
                let kinv = k.try_inverse().unwrap();
                let ks = DVector::from_fn(m, |i, _| se_ard(&xs[i], &x, h.sigma_f, &h.lengthscales));
                let y = DVector::from_fn(m, |i, _| ys[i][c]);
                let mu = (ks.transpose() * &kinv * y)[0];
                let var =
                    (h.sigma_f.powi(2) - (ks.transpose() * &kinv * &ks)[0]).clamp(gp::VAR_FLOOR, h.sigma_f.powi(2));
                worst = worst.max((p.mu[c] - mu).abs()).max((p.var[c] - var).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && secs <= 5.0,
        format!("max abs deviation {worst:.2e} over 100 instances in {secs:.2} s"),
    )
}

fn random_prediction(rng: &mut ChaCha8Rng) -> Prediction {
    Prediction {
        mu: Vector4::from_fn(|_, _| rng.random_range(-5.0..5.0)),
        var: Vector4::from_fn(|_, _| 10f64.powf(rng.random_range(-4.0..1.0))),
    }
}

fn poe_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = rng.random_range(1..8);
        let members: Vec<Prediction> = (0..k).map(|_| random_prediction(&mut rng)).collect();
        let f = fuse(&members).unwrap();
        for j in 0..4 {
            let precision: f64 = members.iter().map(|m| 1.0 / m.var[j]).sum();
            worst = worst.max(((1.0 / f.var[j]) - precision).abs() / precision);
            let w_sum: f64 = f.weights.iter().map(|w| w[j]).sum();
            worst = worst.max((w_sum - 1.0).abs());
            for (w, m) in f.weights.iter().zip(&members) {
                worst = worst.max((w[j] - (1.0 / m.var[j]) / precision).abs());
            }
        }
        let p = members[0];
        let dup = fuse(&[p, p]).unwrap();
        worst = worst.max(((dup.var - p.var * 0.5).component_div(&p.var)).amax());
        worst = worst.max((dup.mu - p.mu).amax());
        let single = fuse(&[p]).unwrap();
        worst = worst.max((single.mu - p.mu).amax()).max((single.var - p.var).amax());
    }
    outcome(worst <= 1e-12, format!("max deviation {worst:.2e} over 1000 instances"))
}

fn states_matrices(sim: &Simulator) -> Vec<Matrix4<f64>> {
    let mut out = vec![sim.state.target.matrix()];
    for e in &sim.state.errors {
        out.push(e.g_c.matrix());
        out.push(e.g_e.matrix());
    }
    out
}

fn offsets() -> ErrorState {
    ErrorState::new(
        Pose::from_xyz_theta(0.05, -0.03, 0.02, 0.1),
        Pose::from_xyz_theta(-0.02, 0.04, 0.01, -0.1),
    )
}

/// Central difference of the integrated trajectory at `t_star` against the right-hand side there.
fn central_difference_error(cfg: &ScenarioConfig, inputs: &RunInputs, h: f64, t_star: f64) -> (f64, bool) {
    let mut sim = Simulator::new(cfg, inputs).unwrap();
    sim.sense();
    let k_star = (t_star / h).round() as usize;
    let mut before = None;
    let mut at = None;
    for k in 0..=k_star + 1 {
        if k == k_star - 1 {
            before = Some(states_matrices(&sim));
        }
        if k == k_star {
            at = Some(sim.state.clone());
        }
        if k == k_star + 1 {
            break;
        }
        sim.advance(h, None);
    }
    let after = states_matrices(&sim);
    let before = before.unwrap();
    let at = at.unwrap();
    let (dt, de) = sim.rhs(&at);
    let mut rhs = vec![dt];
    for (c, e) in de {
        rhs.push(c);
        rhs.push(e);
    }
    let err = rhs
        .iter()
        .zip(before.iter().zip(&after))
        .map(|(f, (b, a))| ((a - b) / (2.0 * h) - f).amax())
        .fold(0.0, f64::max);
    (err, sim.visible.iter().all(|&v| v))
}

fn dynamics_order() -> Outcome {
    let cfg = ScenarioConfig {
        initial_errors: Some(vec![offsets(); 3]),
        ..Default::default()
    };
    let inputs = RunInputs {
        experts: prepare_experts(&cfg, 0).unwrap(),
        bounds: None,
    };
    let hs = [0.004, 0.002, 0.001];
    let errs: Vec<(f64, bool)> = hs
        .iter()
        .map(|&h| central_difference_error(&cfg, &inputs, h, 1.0))
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0].0 / w[1].0).log2()).collect();
    let ok = orders.iter().all(|&p| p >= 1.9) && errs.iter().all(|e| e.1);
    outcome(
        ok,
        format!(
            "errors {:.2e}/{:.2e}/{:.2e} at dt {:?}, observed orders {:.2}/{:.2}",
            errs[0].0, errs[1].0, errs[2].0, hs, orders[0], orders[1]
        ),
    )
}

fn oracle_convergence() -> Outcome {
    let cfg = ScenarioConfig {
        mode: Mode::Oracle,
        duration: 12.0,
        trace_every: 1,
        initial_errors: Some(vec![offsets(); 3]),
        ..Default::default()
    };
    let out = run(&cfg, &RunInputs::default()).unwrap();
    let rows: Vec<_> = out.trace.drone(0).collect();
    let all_visible = out.trace.rows.iter().all(|r| r.visible);
    let norm_at = |i: usize| -> f64 {
        out.trace.rows[3 * i..3 * i + 3]
            .iter()
            .map(|r| r.e_sq)
            .sum::<f64>()
            .sqrt()
    };
    let late = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.t >= 10.0)
        .map(|(i, _)| norm_at(i))
        .fold(0.0, f64::max);
    // rounding slack for storage values that have decayed to ~1e-30
    const SLACK: f64 = 1e-14;
    let mut worst_rise = 0.0f64;
    let mut norm_rise = 0.0f64;
    for (i, pair) in rows.windows(2).enumerate() {
        if pair[0].t > 0.5 {
            worst_rise = worst_rise.max(pair[1].storage_total - pair[0].storage_total);
            norm_rise = norm_rise.max(norm_at(i + 1) - norm_at(i));
        }
    }
    outcome(
        all_visible && late < 1e-3 && worst_rise <= SLACK,
        format!(
            "max |e| for t >= 10 s {late:.2e}, max storage rise after 0.5 s {worst_rise:.2e}, max |e| rise {norm_rise:.2e}, all visible {all_visible}"
        ),
    )
}

fn random_connected(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    // random spanning tree plus chords
    let mut edges: Vec<(usize, usize)> = (1..n).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..rng.random_range(0..2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.push((a, b));
        }
    }
    edges
}

fn weighted_h() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut min_pd = f64::INFINITY;
    let mut max_singular = 0.0f64;
    let mut ok = true;
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let edges = random_connected(&mut rng, n);
        let d: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
        let g = DroneGraph::new(n, edges.clone(), d.clone()).unwrap();
        let mut visible: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let forced = rng.random_range(0..n);
        visible[forced] = true;
        let h = g.h_matrix(&visible).unwrap();
        // independent construction and Cholesky test
        let mut oracle = DMatrix::zeros(n, n);
        let mut set = std::collections::BTreeSet::new();
        for (a, b) in edges {
            set.insert((a.min(b), a.max(b)));
        }
        for (a, b) in set {
            oracle[(a, b)] -= 1.0;
            oracle[(b, a)] -= 1.0;
            oracle[(a, a)] += 1.0;
            oracle[(b, b)] += 1.0;
        }
        for i in 0..n {
            if visible[i] {
                oracle[(i, i)] += d[i];
            }
        }
        ok &= (&h.matrix - &oracle).amax() == 0.0;
        ok &= oracle.clone().cholesky().is_some();
        ok &= h.check_positive_definite().is_ok();
        min_pd = min_pd.min(h.min_eigenvalue);
        let none = g.h_matrix(&vec![false; n]).unwrap();
        ok &= (&none.matrix - g.laplacian()).amax() == 0.0;
        ok &= none.check_positive_definite().is_err();
        max_singular = max_singular.max(none.min_eigenvalue.abs());
    }
    outcome(
        ok && min_pd > 0.0 && max_singular < 1e-10,
        format!(
            "min eigenvalue with a visible drone {min_pd:.2e}, |min eigenvalue| with none visible {max_singular:.2e}"
        ),
    )
}

fn bound_coverage() -> Outcome {
    let mut covered = 0.0;
    let mut worst_run = 1.0f64;
    let runs = 10;
    for seed in 0..runs {
        let cfg = ScenarioConfig {
            seed,
            ..Default::default()
        };
        let experts = prepare_experts(&cfg, seed).unwrap();
        let region = trajectory_region(&cfg);
        let report = gain_condition_report(&experts, &region, cfg.gp.beta_rule, 0.1).unwrap();
        let inputs = RunInputs {
            experts,
            bounds: Some(report.per_drone),
        };
        let c = run(&cfg, &inputs).unwrap().metrics.bound_coverage.unwrap();
        covered += c;
        worst_run = worst_run.min(c);
    }
    let mean = covered / runs as f64;
    outcome(
        mean >= 0.9,
        format!("covered fraction {mean:.4} over {runs} runs (worst run {worst_run:.4})"),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn cubic_cost() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut dataset = |m: usize| {
        let xs: Vec<Vector4<f64>> = (0..m)
            .map(|_| Vector4::from_fn(|_, _| rng.random_range(-3.0..3.0)))
            .collect();
        let ys: Vec<Vector4<f64>> = xs.iter().map(|x| x.map(f64::sin)).collect();
        Dataset::new(xs, ys, Vector4::repeat(0.1)).unwrap()
    };
    let small: Vec<Dataset> = (0..3).map(|_| dataset(200)).collect();
    let large = dataset(600);
    let hyper = HyperParams::uniform(ChannelHyper::new(1.0, [1.0; 4]));
    let time = |ds: &[Dataset]| {
        let start = Instant::now();
        for d in ds {
            std::hint::black_box(gp::fit(d, &hyper).unwrap());
        }
        start.elapsed().as_secs_f64()
    };
    let three = median((0..7).map(|_| time(&small)).collect());
    let one = median((0..7).map(|_| time(std::slice::from_ref(&large))).collect());
    let ratio = one / three;
    outcome(
        ratio >= 3.0,
        format!(
            "3 x M=200: {:.2} ms, 1 x M=600: {:.2} ms, ratio {ratio:.2}",
            three * 1e3,
            one * 1e3
        ),
    )
}

fn determinism() -> Outcome {
    let cfg = ScenarioConfig {
        seed: 11,
        pixel_noise_std: 1e-3,
        trace_every: 1,
        ..Default::default()
    };
    let once = || {
        let inputs = RunInputs {
            experts: prepare_experts(&cfg, cfg.seed).unwrap(),
            bounds: None,
        };
        let mut buf = Vec::new();
        run(&cfg, &inputs).unwrap().trace.write_csv(&mut buf).unwrap();
        buf
    };
    let (a, b) = (once(), once());
    outcome(
        a == b && !a.is_empty(),
        format!("{} bytes, identical {}", a.len(), a == b),
    )
}

fn pose_rk4_oracle(g: &Pose, v: &BodyVelocity, t: f64, steps: usize) -> Matrix4<f64> {
    let mut xi = Matrix4::zeros();
    xi[(0, 1)] = -v.omega;
    xi[(1, 0)] = v.omega;
    xi[(0, 3)] = v.v.x;
    xi[(1, 3)] = v.v.y;
    xi[(2, 3)] = v.v.z;
    let h = t / steps as f64;
    let mut m = g.matrix();
    for _ in 0..steps {
        let k1 = m * xi;
        let k2 = (m + k1 * (h / 2.0)) * xi;
        let k3 = (m + k2 * (h / 2.0)) * xi;
        let k4 = (m + k3 * h) * xi;
        m += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    m
}

fn geometry_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pose = |rng: &mut ChaCha8Rng| {
        Pose::from_xyz_theta(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-PI..PI),
        )
    };
    let (mut assoc, mut inv, mut flow, mut ident) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (a, b, c) = (pose(&mut rng), pose(&mut rng), pose(&mut rng));
        let l = compose(&compose(&a, &b), &c).matrix();
        let r = compose(&a, &compose(&b, &c)).matrix();
        assoc = assoc.max((l - r).amax());
        inv = inv.max((compose(&a, &inverse(&a)).matrix() - Matrix4::identity()).amax());
        inv = inv.max((compose(&inverse(&a), &a).matrix() - Matrix4::identity()).amax());

        let v = BodyVelocity::new(
            Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)),
            rng.random_range(-2.0..2.0),
        );
        let exact = integrate(&a, &v, 1.0).matrix();
        flow = flow.max((exact - pose_rk4_oracle(&a, &v, 1.0, 1000)).amax());

        // phi(theta) = ||I - R||_F^2 / 2 and vec = [p; sin(theta)] read off the matrix
        let m = a.matrix();
        let rot = m.fixed_view::<3, 3>(0, 0).into_owned();
        let frob = (nalgebra::Matrix3::identity() - rot).norm_squared() / 2.0;
        ident = ident.max((phi(a.theta) - frob).abs());
        let v4 = vec_of(&a);
        ident = ident.max((v4 - Vector4::new(m[(0, 3)], m[(1, 3)], m[(2, 3)], m[(1, 0)])).amax());
        ident = ident.max((phi(a.theta) - 2.0 * (1.0 - a.theta.cos())).abs());
    }
    let ok = assoc < 1e-12 && inv < 1e-12 && flow <= 1e-8 && ident < 1e-12;
    outcome(
        ok,
        format!("associativity {assoc:.1e}, inverse {inv:.1e}, exact vs RK4 {flow:.1e}, identities {ident:.1e}"),
    )
}
