use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dgp-pursuit"));
    c.env_remove("DGP_PURSUIT_THREADS");
    c
}

fn exec(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dgp-pursuit")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

/// Generated data and trained hyperparameters for the default scenario.
struct Prepared {
    _tmp: TempDir,
    root: PathBuf,
    data: PathBuf,
    hyper: PathBuf,
}

fn prepare(extra: &[&str]) -> Prepared {
    let tmp = TempDir::new().unwrap();
    let root = tmp.path().to_path_buf();
    let data = root.join("data");
    let train = root.join("train");
    let mut args = vec!["gen-data", "--out", s(&data)];
    args.extend_from_slice(extra);
    let out = exec(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut args = vec!["train", "--data", s(&data), "--out", s(&train)];
    args.extend_from_slice(extra);
    let out = exec(&args);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    Prepared {
        _tmp: tmp,
        root,
        data,
        hyper: train.join("hyper.json"),
    }
}

#[test]
fn gen_data_writes_one_file_per_drone() {
    let p = prepare(&[]);
    for i in 0..3 {
        let text = std::fs::read_to_string(p.data.join(format!("drone_{i}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "px,py,pz,theta,y1,y2,y3,y4");
        assert_eq!(lines.count(), 10);
    }
    let manifest = read_json(&p.data.join("manifest.json"));
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["noise_var"], 0.01);
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
}

#[test]
fn train_does_not_lower_the_likelihood() {
    let p = prepare(&[]);
    let hypers = read_json(&p.hyper);
    let hypers = hypers.as_array().unwrap();
    assert_eq!(hypers.len(), 3);
    for h in hypers {
        let init = h["lml_init"].as_array().unwrap();
        let lml = h["lml"].as_array().unwrap();
        for (a, b) in init.iter().zip(lml) {
            assert!(b.as_f64().unwrap() >= a.as_f64().unwrap() - 1e-9);
        }
    }
}

#[test]
fn simulate_distributed_run_reports_metrics() {
    let p = prepare(&[]);
    let out_dir = p.root.join("sim");
    let out = exec(&[
        "simulate",
        "--data",
        s(&p.data),
        "--hyper",
        s(&p.hyper),
        "--duration",
        "2",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let m = read_json(&out_dir.join("metrics.json"));
    assert_eq!(m["mode"], "distributed_gp");
    assert_eq!(m["status"], "completed");
    assert!(m["squared_mean_e"].as_f64().unwrap() >= 0.0);
    assert!(m["bound_coverage"].as_f64().is_some());
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("t,drone,ec1"));
    assert!(out_dir.join("timings.json").exists());
}

#[test]
fn no_gp_needs_no_gp_files() {
    let tmp = TempDir::new().unwrap();
    let out = exec(&["simulate", "--mode", "no_gp", "--duration", "1", "--out", s(tmp.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(read_json(&tmp.path().join("metrics.json"))["mode"], "no_gp");
}

#[test]
fn missing_hyperparameters_exit_2() {
    let p = prepare(&[]);
    let out = exec(&[
        "simulate",
        "--mode",
        "local_gp",
        "--data",
        s(&p.data),
        "--out",
        s(&p.root.join("sim")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("hyper"), "{}", stderr(&out));
    assert!(!p.root.join("sim").exists());
}

#[test]
fn config_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("out");
    let missing = tmp.path().join("nope.json");
    let out = exec(&["gen-data", "--config", s(&missing), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);

    let unknown = write_config(tmp.path(), "unknown.json", r#"{"gainz": 1}"#);
    let out = exec(&["gen-data", "--config", s(&unknown), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("gainz"), "{}", stderr(&out));

    let bad = write_config(tmp.path(), "bad.json", r#"{"dt": -1.0}"#);
    let out = exec(&["simulate", "--config", s(&bad), "--mode", "no_gp", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);

    let out = exec(&["simulate", "--mode", "sideways", "--out", s(&out_dir)]);
    assert_eq!(code(&out), 2);
    assert!(!out_dir.exists());
}

#[test]
fn unreadable_dataset_exit_2() {
    let p = prepare(&[]);
    std::fs::write(p.data.join("drone_1.csv"), "px,py\nnot,numbers\n").unwrap();
    let out = exec(&["train", "--data", s(&p.data), "--out", s(&p.root.join("t2"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn empty_sector_exit_3() {
    let tmp = TempDir::new().unwrap();
    // drifting along +x from (1, 0) stays in the last sector; drone 0 is the first empty one
    let cfg = write_config(
        tmp.path(),
        "drift.json",
        r#"{
            "target": {"kind": "constant", "velocity": [0.01, 0.0, 0.0, 0.0]},
            "target_initial": {"p": [1.0, 0.0, 0.0], "theta": 0.0}
        }"#,
    );
    let out = exec(&["gen-data", "--config", s(&cfg), "--out", s(&tmp.path().join("d"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("drone 0"), "{}", stderr(&out));
}

#[test]
fn early_stop_exit_4_keeps_partial_trace() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bent.json",
        r#"{
            "mode": "no_gp",
            "theta_limit": 0.5,
            "initial_errors": [
                {"g_c": {"p": [0, 0, 0], "theta": 0.6}, "g_e": {"p": [0, 0, 0], "theta": 0}},
                {"g_c": {"p": [0, 0, 0], "theta": 0}, "g_e": {"p": [0, 0, 0], "theta": 0}},
                {"g_c": {"p": [0, 0, 0], "theta": 0}, "g_e": {"p": [0, 0, 0], "theta": 0}}
            ]
        }"#,
    );
    let out_dir = tmp.path().join("sim");
    let out = exec(&["simulate", "--config", s(&cfg), "--out", s(&out_dir)]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert_eq!(read_json(&out_dir.join("metrics.json"))["status"], "angle_violation");
    let trace = std::fs::read_to_string(out_dir.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
}

fn key_paths(v: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                out.insert(path.clone());
                key_paths(child, &path, out);
            }
        }
        Value::Array(items) => {
            for item in items.iter().filter(|i| i.is_object()) {
                key_paths(item, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn comparison_schema_matches_golden() {
    let p = prepare(&[]);
    let out_dir = p.root.join("cmp");
    let out = exec(&[
        "compare",
        "--data",
        s(&p.data),
        "--hyper",
        s(&p.hyper),
        "--duration",
        "1",
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut keys = BTreeSet::new();
    key_paths(&read_json(&out_dir.join("comparison.json")), "", &mut keys);
    let golden: BTreeSet<String> = include_str!("golden/comparison_keys.txt")
        .lines()
        .map(str::to_owned)
        .collect();
    assert_eq!(keys, golden);
    let combined = std::fs::read_to_string(out_dir.join("combined.csv")).unwrap();
    assert!(combined.starts_with("mode,t,drone,"));
    for mode in ["no_gp", "local_gp", "distributed_gp"] {
        assert!(combined.lines().any(|l| l.starts_with(&format!("{mode},"))));
    }
}

#[test]
fn single_drone_compare_has_equal_gp_entries() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        "solo.json",
        r#"{
            "graph": {"n": 1, "edges": []},
            "regions": {"boundaries_deg": [0.0], "samples_per_drone": 10}
        }"#,
    );
    let data = tmp.path().join("data");
    let train = tmp.path().join("train");
    let cmp = tmp.path().join("cmp");
    assert_eq!(code(&exec(&["gen-data", "--config", s(&cfg), "--out", s(&data)])), 0);
    assert_eq!(
        code(&exec(&[
            "train",
            "--config",
            s(&cfg),
            "--data",
            s(&data),
            "--out",
            s(&train)
        ])),
        0
    );
    let hyper = train.join("hyper.json");
    let out = exec(&[
        "compare",
        "--config",
        s(&cfg),
        "--data",
        s(&data),
        "--hyper",
        s(&hyper),
        "--duration",
        "2",
        "--out",
        s(&cmp),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let c = read_json(&cmp.join("comparison.json"));
    assert_eq!(c["squared_mean_e"]["local_gp"], c["squared_mean_e"]["distributed_gp"]);
}

#[test]
fn bounds_fields_present_and_nonnegative() {
    let p = prepare(&[]);
    let out_dir = p.root.join("b");
    let out = exec(&[
        "bounds",
        "--data",
        s(&p.data),
        "--hyper",
        s(&p.hyper),
        "--out",
        s(&out_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let b = read_json(&out_dir.join("bounds.json"));
    assert_eq!(b["delta"], 0.1);
    for key in ["l_mu", "delta_bar", "gamma_sq_max", "reference_l_mu"] {
        assert!(b[key].as_f64().unwrap() >= 0.0, "{key}");
    }
    let per_drone = b["per_drone"].as_array().unwrap();
    assert_eq!(per_drone.len(), 3);
    for r in per_drone {
        for key in ["l_mu", "gamma_sq", "beta", "delta_bar"] {
            let v = r[key].as_array().unwrap_or_else(|| panic!("{key} missing"));
            assert_eq!(v.len(), 4);
            assert!(v.iter().all(|x| x.as_f64().unwrap() >= 0.0), "{key}");
        }
    }
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "timings.json")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn every_command_is_idempotent() {
    let a = prepare(&["--seed", "5"]);
    let b = prepare(&["--seed", "5"]);
    assert_eq!(snapshot(&a.data), snapshot(&b.data));
    assert_eq!(std::fs::read(&a.hyper).unwrap(), std::fs::read(&b.hyper).unwrap());
    let inputs = ["--data", s(&a.data), "--hyper", s(&a.hyper), "--duration", "1"];
    for cmd in ["simulate", "compare", "bounds"] {
        let dirs: Vec<PathBuf> = (0..2).map(|k| a.root.join(format!("{cmd}{k}"))).collect();
        for d in &dirs {
            let mut args = vec![cmd, "--out", s(d)];
            args.extend_from_slice(&inputs);
            let out = exec(&args);
            assert_eq!(code(&out), 0, "{cmd}: {}", stderr(&out));
        }
        assert_eq!(snapshot(&dirs[0]), snapshot(&dirs[1]), "{cmd}");
    }
}

#[test]
fn thread_cap_does_not_change_results() {
    let p = prepare(&[]);
    let run = |threads: &str, dir: &Path| {
        let out = bin()
            .env("DGP_PURSUIT_THREADS", threads)
            .args(["bounds", "--data", s(&p.data), "--hyper", s(&p.hyper), "--out", s(dir)])
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        std::fs::read(dir.join("bounds.json")).unwrap()
    };
    assert_eq!(run("1", &p.root.join("b1")), run("4", &p.root.join("b4")));
    let out = bin()
        .env("DGP_PURSUIT_THREADS", "zero")
        .args(["gen-data", "--out", s(&p.root.join("x"))])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}
