//! `dgp-pursuit`: file-driven front end for dataset generation, training,
//! closed-loop runs, the three-mode comparison and bound reports.
//!
//! Exit codes: 0 success, 2 config or input error, 3 dataset generation
//! error, 4 run ended early (artifacts are still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dgp_pursuit::gp::GpExpert;
use dgp_pursuit::scenario::data::{
    self, datasets_for, fit_experts, read_dataset_dir, read_json, train, trajectory_region, write_json, TrainedHyper,
};
use dgp_pursuit::scenario::{compare, gain_condition_report, run, RunInputs, RunStatus, RunTrace};
use dgp_pursuit::{Error, Mode, ScenarioConfig};

const HYPER_FILE: &str = "hyper.json";
const THREADS_ENV: &str = "DGP_PURSUIT_THREADS";

#[derive(Parser)]
#[command(
    name = "dgp-pursuit",
    version,
    about = "Cooperative visual pursuit with distributed GP experts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample one training set per drone from a target rollout.
    GenData(Common),
    /// Optimize per-drone hyperparameters on a generated dataset directory.
    Train(Common),
    /// Run one closed-loop simulation.
    Simulate(Common),
    /// Run no_gp, local_gp and distributed_gp on identical inputs.
    Compare(Common),
    /// Report L_mu, Delta_bar, gamma^2 and beta for the trained experts.
    Bounds(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario JSON; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    duration: Option<f64>,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Hyperparameter file written by train.
    #[arg(long)]
    hyper: Option<PathBuf>,
}

enum Failure {
    Input(Error),
    Generation(Error),
    Run(RunStatus),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::EmptySector { .. } => Failure::Generation(e),
            e => Failure::Input(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::GenData(c) => gen_data(&c),
        Command::Train(c) => train_cmd(&c),
        Command::Simulate(c) => simulate(&c),
        Command::Compare(c) => compare_cmd(&c),
        Command::Bounds(c) => bounds(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Generation(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Run(status)) => {
            eprintln!(
                "run ended early: {}",
                serde_json::to_string(&status).unwrap_or_default()
            );
            ExitCode::from(4)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load_config(c: &Common) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &c.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = c.mode {
        cfg.mode = mode;
    }
    if let Some(dt) = c.dt {
        cfg.dt = dt;
    }
    if let Some(duration) = c.duration {
        cfg.duration = duration;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_out(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })
}

fn require<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path, Error> {
    p.as_deref()
        .ok_or_else(|| Error::MissingInput(format!("{what} required (--{what})")))
}

/// Rebuilds the experts from a dataset directory and a hyperparameter file.
fn load_experts(c: &Common, cfg: &ScenarioConfig) -> Result<Vec<GpExpert>, Error> {
    let (_, samples) = read_dataset_dir(require(&c.data, "data")?)?;
    let hypers: Vec<TrainedHyper> = read_json(require(&c.hyper, "hyper")?)?;
    fit_experts(&datasets_for(cfg, &samples)?, &hypers)
}

fn run_inputs(c: &Common, cfg: &ScenarioConfig, needed: bool) -> Result<RunInputs, Error> {
    if !needed {
        return Ok(RunInputs::default());
    }
    let experts = load_experts(c, cfg)?;
    let region = trajectory_region(cfg);
    let report = gain_condition_report(&experts, &region, cfg.gp.beta_rule, cfg.gp.delta)?;
    Ok(RunInputs {
        experts,
        bounds: Some(report.per_drone),
    })
}

fn gen_data(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let samples = data::generate_for(&cfg, cfg.seed)?;
    data::write_dataset_dir(&c.out, &cfg, cfg.seed, &samples)?;
    eprintln!("wrote {} datasets to {}", samples.len(), c.out.display());
    Ok(())
}

fn train_cmd(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let (_, samples) = read_dataset_dir(require(&c.data, "data")?)?;
    let hypers = train(&datasets_for(&cfg, &samples)?, cfg.gp.optimizer_budget);
    create_out(&c.out)?;
    write_json(&c.out.join(HYPER_FILE), &hypers)?;
    Ok(())
}

fn simulate(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let inputs = run_inputs(c, &cfg, cfg.mode.needs_experts())?;
    let out = run(&cfg, &inputs)?;
    create_out(&c.out)?;
    out.trace.save(&c.out.join("trace.csv"))?;
    write_json(&c.out.join("metrics.json"), &out.metrics)?;
    write_json(&c.out.join("timings.json"), &out.timings)?;
    eprintln!(
        "{}: squared_mean_e = {:.3e}",
        cfg.mode.name(),
        out.metrics.squared_mean_e
    );
    match out.metrics.status {
        RunStatus::Completed => Ok(()),
        s => Err(Failure::Run(s)),
    }
}

fn compare_cmd(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let inputs = run_inputs(c, &cfg, true)?;
    let (comparison, outputs) = compare(&cfg, &inputs)?;
    create_out(&c.out)?;
    let traces: Vec<(Mode, &RunTrace)> = outputs.iter().map(|o| (o.metrics.mode, &o.trace)).collect();
    RunTrace::save_combined(&c.out.join("combined.csv"), &traces)?;
    write_json(&c.out.join("comparison.json"), &comparison)?;
    let timings: Vec<_> = outputs.iter().map(|o| (o.metrics.mode, &o.timings)).collect();
    write_json(&c.out.join("timings.json"), &timings)?;
    let sm = &comparison.squared_mean_e;
    eprintln!(
        "squared_mean_e no_gp {:.3e} local_gp {:.3e} distributed_gp {:.3e} ordering_holds {}",
        sm.no_gp, sm.local_gp, sm.distributed_gp, comparison.ordering_holds
    );
    match outputs
        .iter()
        .map(|o| o.metrics.status)
        .find(|&s| s != RunStatus::Completed)
    {
        None => Ok(()),
        Some(s) => Err(Failure::Run(s)),
    }
}

fn bounds(c: &Common) -> CmdResult {
    let cfg = load_config(c)?;
    let experts = load_experts(c, &cfg)?;
    let region = trajectory_region(&cfg);
    let report = gain_condition_report(&experts, &region, cfg.gp.beta_rule, cfg.gp.delta)?;
    create_out(&c.out)?;
    write_json(&c.out.join("bounds.json"), &report)?;
    eprintln!(
        "L_mu {:.3e} Delta_bar {:.3e} gamma^2 max {:.3e}",
        report.l_mu, report.delta_bar, report.gamma_sq_max
    );
    Ok(())
}
