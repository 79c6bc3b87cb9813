use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn fkpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkpp")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn write_recipe(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

const CLASSICAL: &str = "\
alpha = 1
half_width = 200
n = 8192
dt = 0.02
t_end = 30
snapshot_every = 0.5
kind = smooth_bump
eps = 0.5
r0 = 5
ramp = 2
level = 0.5
linear_window = 20, 30
exp_window = 20, 30
snapshot_stride = 8
";

const SMALL_SWEEP: &str = "\
alpha = 0.9
half_width = 400
n = 8192
dt = 0.02
t_end = 6
snapshot_every = 0.25
kind = smooth_bump
eps = 0.5
r0 = 5
ramp = 2
level = 0.5
linear_window = 1, 3
exp_window = 4, 6
alphas = 0.9, 0.8
";

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn kernel_closed_forms() {
    let o = fkpp(&["kernel", "--alpha", "0.5", "--xs", "0,1,3"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&stdout(&o));
    for (row, x) in rows.iter().zip([0.0f64, 1.0, 3.0]) {
        let p: f64 = row[1].parse().unwrap();
        let cauchy = 1.0 / (std::f64::consts::PI * (1.0 + x * x));
        assert!((p - cauchy).abs() < 1e-12, "{p} vs {cauchy}");
    }
    let o = fkpp(&["kernel", "--alpha", "1", "--xs", "0"]);
    let p: f64 = csv_rows(&stdout(&o))[0][1].parse().unwrap();
    assert!((p - 0.28209479177387814).abs() < 1e-15);
}

#[test]
fn kernel_paths_agree_in_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k");
    let o = fkpp(&[
        "kernel", "--alpha", "0.75", "--d", "2", "--grid", "0.5:4:8", "--method", "both", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("manifest.json"));
    assert!(m["details"]["max_discrepancy"].as_f64().unwrap() <= 1e-5);
    assert_eq!(csv_rows(&fs::read_to_string(out.join("kernel.csv")).unwrap()).len(), 16);
}

#[test]
fn usage_and_domain_errors() {
    assert_eq!(code(&fkpp(&["tau", "--alphas", ""])), 1);
    assert_eq!(code(&fkpp(&["kernel", "--alpha", "1.5", "--xs", "0"])), 2);
    assert_eq!(code(&fkpp(&["kernel", "--alpha", "0.5", "--grid", "0:1"])), 1);
    assert_eq!(code(&fkpp(&["no-such-command"])), 1);
    assert_eq!(code(&fkpp(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let bad = write_recipe(dir.path(), "bad.cfg", &format!("{CLASSICAL}colour = red\n"));
    let out = dir.path().join("o");
    assert_eq!(code(&fkpp(&["front", bad.to_str().unwrap(), "--out", out.to_str().unwrap()])), 1);
    let missing = dir.path().join("absent.cfg");
    assert_eq!(code(&fkpp(&["solve", missing.to_str().unwrap(), "--out", out.to_str().unwrap()])), 1);
}

#[test]
fn thread_count_must_be_positive() {
    let o = Command::new(env!("CARGO_BIN_EXE_fkpp"))
        .env("FKPP_THREADS", "0")
        .args(["tau", "--alphas", "0.9"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn tau_reports_both_timescales() {
    let o = fkpp(&["tau", "--k-range", "3:4"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert!(r["tau_alpha"].as_f64().unwrap() > r["tau_log"].as_f64().unwrap());
    }
}

#[test]
fn zero_horizon_front_has_one_snapshot_and_no_fit() {
    let dir = tempfile::tempdir().unwrap();
    let text = CLASSICAL.replace("t_end = 30", "t_end = 0").replace("snapshot_every = 0.5\n", "");
    let cfg = write_recipe(dir.path(), "zero.cfg", &text);
    let out = dir.path().join("o");
    let o = fkpp(&["front", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let snaps = fs::read_to_string(out.join("snapshots.csv")).unwrap();
    let times: std::collections::BTreeSet<String> = csv_rows(&snaps).into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(times.len(), 1);
    assert!(!out.join("fit.json").exists());
}

#[test]
fn classical_front_speed_and_reproducible_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_recipe(dir.path(), "classical.cfg", CLASSICAL);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = fkpp(&["front", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a");
    let b = run("b");

    let fit = read_json(&a.join("fit.json"));
    let sigma = fit["sigma_linear"].as_f64().unwrap();
    assert!((1.85..=2.0).contains(&sigma), "{sigma}");
    assert!(fit["tau_log"].is_null());

    for f in ["snapshots.csv", "trace.csv", "fit.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let m = read_json(&a.join("manifest.json"));
    assert_eq!(m["truncated"], Value::Bool(false));
    for rec in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(a.join(rec["file"].as_str().unwrap())).unwrap();
        assert_eq!(rec["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(rec["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
    }
}

#[test]
fn truncation_exits_five_and_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let text = CLASSICAL
        .replace("half_width = 200", "half_width = 30")
        .replace("n = 8192", "n = 4096");
    let cfg = write_recipe(dir.path(), "narrow.cfg", &text);
    let out = dir.path().join("o");
    let o = fkpp(&["front", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["truncated"], Value::Bool(true));
    assert!(!fs::read_to_string(out.join("snapshots.csv")).unwrap().is_empty());
    assert!(csv_rows(&fs::read_to_string(out.join("trace.csv")).unwrap()).len() > 1);
}

#[test]
fn sweep_writes_one_directory_per_member() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_recipe(dir.path(), "sweep.cfg", SMALL_SWEEP);
    let out = dir.path().join("o");
    let o = fkpp(&["sweep", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for a in ["0.8", "0.9"] {
        let sub = out.join(format!("alpha_{a}"));
        for f in ["trace.csv", "fit.json", "run.json"] {
            assert!(sub.join(f).exists(), "{}", sub.join(f).display());
        }
    }
    let rows = csv_rows(&fs::read_to_string(out.join("transition.csv")).unwrap());
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][0], "0.8");
}
