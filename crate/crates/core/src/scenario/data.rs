//! Expert datasets: generation from a target roll-out, CSV/JSON files, training.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector4;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{self, Dataset, GpExpert, HyperParams, Region};

use super::config::{ExpertRegions, ScenarioConfig};
use super::target::{rollout, TargetMotion};
use crate::geometry::Pose;

pub const DATASET_HEADER: [&str; 8] = ["px", "py", "pz", "theta", "y1", "y2", "y3", "y4"];

/// Raw samples for one drone, before noise floor handling.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub inputs: Vec<Vector4<f64>>,
    pub outputs: Vec<Vector4<f64>>,
}

/// Picks `m` samples per sector, spread uniformly in arc length along the
/// part of the trajectory inside the sector, and labels them with the
/// velocity field plus Gaussian noise of variance `noise_var`.
pub fn generate_dataset(
    target: &TargetMotion,
    initial: &Pose,
    regions: &ExpertRegions,
    rollout_duration: f64,
    rollout_dt: f64,
    noise_var: f64,
    seed: u64,
) -> Result<Vec<Samples>> {
    let traj = rollout(target, initial, rollout_duration, rollout_dt);
    let n = regions.len();
    // per sector: (trajectory index, cumulative in-sector arc length)
    let mut members: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut arc = vec![0.0; n];
    for (k, (_, g)) in traj.iter().enumerate() {
        let s = regions.sector_of(g.p.x, g.p.y);
        if k > 0 && regions.sector_of(traj[k - 1].1.p.x, traj[k - 1].1.p.y) == s {
            arc[s] += (g.p - traj[k - 1].1.p).norm();
        }
        members[s].push((k, arc[s]));
    }
    let noise = Normal::new(0.0, noise_var.sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = regions.samples_per_drone;
    let mut out = Vec::with_capacity(n);
    for (drone, sector) in members.iter().enumerate() {
        if sector.is_empty() {
            return Err(Error::EmptySector { drone });
        }
        let total = arc[drone];
        let mut cursor = 0;
        let mut samples = Samples {
            inputs: Vec::with_capacity(m),
            outputs: Vec::with_capacity(m),
        };
        for j in 0..m {
            let goal = total * (j as f64 + 0.5) / m as f64;
            while cursor + 1 < sector.len() && sector[cursor + 1].1 <= goal {
                cursor += 1;
            }
            let (t, g) = traj[sector[cursor].0];
            let v = target.velocity(&g, t).to_vector();
            let eps = Vector4::from_fn(|_, _| noise.sample(&mut rng));
            samples.inputs.push(g.flatten());
            samples.outputs.push(v + eps);
        }
        out.push(samples);
    }
    Ok(out)
}

pub fn generate_for(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<Samples>> {
    generate_dataset(
        &cfg.target,
        &cfg.initial_target(),
        &cfg.regions,
        cfg.gp.rollout_duration,
        cfg.gp.rollout_dt,
        cfg.gp.noise_var,
        seed,
    )
}

impl Samples {
    pub fn to_dataset(&self, noise_std: f64) -> Result<Dataset> {
        Ok(Dataset::new(
            self.inputs.clone(),
            self.outputs.clone(),
            Vector4::repeat(noise_std),
        )?)
    }
}

/// Bounded region of the target roll-out in input space, used for bound sup-norms.
pub fn trajectory_region(cfg: &ScenarioConfig) -> Region {
    let traj = rollout(
        &cfg.target,
        &cfg.initial_target(),
        cfg.gp.rollout_duration,
        cfg.gp.rollout_dt,
    );
    let points: Vec<Vector4<f64>> = traj.iter().map(|(_, g)| g.flatten()).collect();
    Region::bounding(&points, cfg.gp.region_pad, cfg.gp.region_points_per_dim)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn dataset_file_name(drone: usize) -> String {
    format!("drone_{drone}.csv")
}

pub fn write_samples_csv(path: &Path, samples: &Samples) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(DATASET_HEADER)?;
    for (x, y) in samples.inputs.iter().zip(&samples.outputs) {
        w.write_record(x.iter().chain(y.iter()).map(|v| v.to_string()))?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_samples_csv(path: &Path) -> Result<Samples> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != DATASET_HEADER {
        return Err(Error::Config(format!(
            "{}: expected columns {:?}, found {header:?}",
            path.display(),
            DATASET_HEADER
        )));
    }
    let mut samples = Samples {
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    for record in r.records() {
        let record = record?;
        let vals: Vec<f64> = record
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if vals.len() != 8 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{}: malformed row", path.display())));
        }
        samples.inputs.push(Vector4::new(vals[0], vals[1], vals[2], vals[3]));
        samples.outputs.push(Vector4::new(vals[4], vals[5], vals[6], vals[7]));
    }
    if samples.inputs.is_empty() {
        return Err(Error::Config(format!("{}: no rows", path.display())));
    }
    Ok(samples)
}

/// Record of a generated dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub noise_var: f64,
    pub boundaries_deg: Vec<f64>,
    pub samples_per_drone: usize,
    pub files: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Writes one CSV per drone plus the manifest; returns the CSV paths.
pub fn write_dataset_dir(dir: &Path, cfg: &ScenarioConfig, seed: u64, samples: &[Samples]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut paths = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let path = dir.join(dataset_file_name(i));
        write_samples_csv(&path, s)?;
        paths.push(path);
    }
    let manifest = Manifest {
        seed,
        noise_var: cfg.gp.noise_var,
        boundaries_deg: cfg.regions.boundaries_deg.clone(),
        samples_per_drone: cfg.regions.samples_per_drone,
        files: (0..samples.len()).map(dataset_file_name).collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(paths)
}

/// Reads the per-drone CSVs listed in `dir/manifest.json`.
pub fn read_dataset_dir(dir: &Path) -> Result<(Manifest, Vec<Samples>)> {
    let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
    let samples = manifest
        .files
        .iter()
        .map(|f| read_samples_csv(&dir.join(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, samples))
}

/// Trained hyperparameters of one drone's expert.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedHyper {
    pub drone: usize,
    pub hyper: HyperParams,
    pub lml_init: [f64; 4],
    pub lml: [f64; 4],
}

/// Optimizes every drone's hyperparameters, in parallel, from the data-driven
/// heuristic starting point.
pub fn train(datasets: &[Dataset], budget: usize) -> Vec<TrainedHyper> {
    datasets
        .par_iter()
        .enumerate()
        .map(|(drone, d)| {
            let r = gp::optimize_hyperparams(d, &HyperParams::heuristic(d), budget);
            TrainedHyper {
                drone,
                hyper: r.hyper,
                lml_init: r.lml_init.into(),
                lml: r.lml.into(),
            }
        })
        .collect()
}

pub fn datasets_for(cfg: &ScenarioConfig, samples: &[Samples]) -> Result<Vec<Dataset>> {
    if samples.len() != cfg.n() {
        return Err(Error::Config(format!(
            "{} datasets for {} drones",
            samples.len(),
            cfg.n()
        )));
    }
    let std = cfg.gp.training_noise_std();
    samples.iter().map(|s| s.to_dataset(std)).collect()
}

pub fn fit_experts(datasets: &[Dataset], hypers: &[TrainedHyper]) -> Result<Vec<GpExpert>> {
    if datasets.len() != hypers.len() {
        return Err(Error::Config(format!(
            "{} hyperparameter sets for {} datasets",
            hypers.len(),
            datasets.len()
        )));
    }
    datasets
        .iter()
        .zip(hypers)
        .map(|(d, h)| Ok(gp::fit(d, &h.hyper)?))
        .collect()
}

/// Generate, train and fit in one go.
pub fn prepare_experts(cfg: &ScenarioConfig, seed: u64) -> Result<Vec<GpExpert>> {
    let samples = generate_for(cfg, seed)?;
    let datasets = datasets_for(cfg, &samples)?;
    let hypers = train(&datasets, cfg.gp.optimizer_budget);
    fit_experts(&datasets, &hypers)
}
