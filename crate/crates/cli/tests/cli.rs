//! End-to-end tests of the `qlink` binary: exit codes, output layout,
//! determinism, and the sweep contract.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qlink"))
}

fn tmpdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qlink-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write(dir: &PathBuf, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const COOLING_SCN: &str = "name = \"cooltest\"\nexperiment = \"cooling\"\nseed = 3\n\n[params]\nn_cycles = 50\n";
const TELEPORT_SCN: &str =
    "name = \"teletest\"\nexperiment = \"teleport\"\nseed = 7\n\n[params]\nmode = \"feedforward\"\n";

#[test]
fn invalid_experiment_kind_exits_1() {
    let dir = tmpdir("badkind");
    let cfg = write(&dir, "bad.toml", "name = \"x\"\nexperiment = \"bogus\"\n");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment kind"));
}

#[test]
fn unknown_figure_exits_1() {
    let out = bin().args(["reproduce", "9z"]).output().unwrap();
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown figure id"));
}

#[test]
fn missing_config_exits_1() {
    let out = bin()
        .args(["run", "/nonexistent/qlink-scenario.toml"])
        .output()
        .unwrap();
    assert_code(&out, 1);
}

#[test]
fn malformed_toml_reports_position() {
    let dir = tmpdir("badtoml");
    let cfg = write(&dir, "bad.toml", "name = \"x\"\nexperiment = = \"cooling\"\n");
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn unknown_parameter_exits_1() {
    let dir = tmpdir("badparam");
    let cfg = write(
        &dir,
        "bad.toml",
        "name = \"x\"\nexperiment = \"cooling\"\n\n[params]\nbogus_knob = 1\n",
    );
    let out = bin().arg("run").arg(&cfg).output().unwrap();
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_knob"));
}

#[test]
fn run_writes_outputs_and_is_deterministic() {
    let dir = tmpdir("determinism");
    let cfg = write(&dir, "cool.toml", COOLING_SCN);
    for sub in ["a", "b"] {
        let out = bin()
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        assert_code(&out, 0);
    }
    for name in ["cooling.csv", "manifest.json"] {
        let a = fs::read(dir.join("a/cooltest").join(name)).unwrap();
        let b = fs::read(dir.join("b/cooltest").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("a/cooltest/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["experiment"], "cooling");
    assert!(manifest["metrics"]["final_cable_population"].is_number());
    assert!(manifest["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v == "cooling.csv"));
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tmpdir("envout");
    let cfg = write(&dir, "cool.toml", COOLING_SCN);
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .env("QLINK_OUTPUT_DIR", dir.join("from-env"))
        .current_dir(&dir)
        .output()
        .unwrap();
    assert_code(&out, 0);
    assert!(dir.join("from-env/cooltest/cooling.csv").exists());
}

#[test]
fn one_point_sweep_matches_run() {
    let dir = tmpdir("onepoint");
    let cfg = write(&dir, "tele.toml", TELEPORT_SCN);
    let run = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("run"))
        .output()
        .unwrap();
    assert_code(&run, 0);
    let sweep = bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--axis", "feedforward_latency_us=1.3:1"])
        .arg("--out")
        .arg(dir.join("sweep"))
        .output()
        .unwrap();
    assert_code(&sweep, 0);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run/teletest/manifest.json")).unwrap())
            .unwrap();
    let csv = fs::read_to_string(dir.join("sweep/teletest-sweep/sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert!(lines.next().is_none(), "expected exactly one sweep point");
    // the scenario's default latency is 1.3 us, so the single sweep point at
    // the same latency must reproduce the plain-run metrics
    for (k, v) in header.iter().zip(&row).skip(2) {
        let from_run = manifest["metrics"][*k].as_f64().unwrap();
        let from_sweep: f64 = v.parse().unwrap();
        assert!(
            (from_run - from_sweep).abs() <= 1e-11 * from_run.abs().max(1.0),
            "{k}: run {from_run} vs sweep {from_sweep}"
        );
    }
}

#[test]
fn sweep_is_deterministic_across_worker_counts_and_monotone_in_latency() {
    let dir = tmpdir("sweepdet");
    let cfg = write(&dir, "tele.toml", TELEPORT_SCN);
    for (sub, workers) in [("w1", "1"), ("w3", "3")] {
        let out = bin()
            .arg("sweep")
            .arg(&cfg)
            .args(["--axis", "feedforward_latency_us=0..3:5"])
            .args(["--workers", workers])
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        assert_code(&out, 0);
    }
    let a = fs::read(dir.join("w1/teletest-sweep/sweep.csv")).unwrap();
    let b = fs::read(dir.join("w3/teletest-sweep/sweep.csv")).unwrap();
    assert_eq!(a, b, "sweep.csv differs across worker counts");

    let csv = String::from_utf8(a).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header
        .iter()
        .position(|h| *h == "avg_state_fidelity_ff")
        .unwrap();
    let fids: Vec<f64> = lines
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect();
    assert_eq!(fids.len(), 5);
    for w in fids.windows(2) {
        assert!(
            w[1] < w[0],
            "teleportation fidelity must decrease with feed-forward latency: {fids:?}"
        );
    }
}

#[test]
fn sweep_cap_refused_with_computed_size() {
    let dir = tmpdir("sweepcap");
    let cfg = write(
        &dir,
        "tele.toml",
        "name = \"capped\"\nexperiment = \"teleport\"\nmax_sweep_points = 3\n\n[params]\nmode = \"feedforward\"\n",
    );
    let out = bin()
        .arg("sweep")
        .arg(&cfg)
        .args(["--axis", "feedforward_latency_us=0..3:5"])
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_code(&out, 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('5') && err.contains('3'), "stderr: {err}");
}

#[test]
fn reproduce_writes_readme_and_dataset() {
    let dir = tmpdir("repro");
    let out = bin()
        .args(["reproduce", "S3"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_code(&out, 0);
    let readme = fs::read_to_string(dir.join("figS3/README.md")).unwrap();
    assert!(readme.contains("Figure S3"));
    assert!(dir.join("figS3/cooling.csv").exists());
    assert!(dir.join("figS3/manifest.json").exists());
}

#[test]
fn budget_reports_the_measured_decomposition() {
    let dir = tmpdir("budget");
    let cfg = write(&dir, "device.toml", "[device]\n");
    let out = bin()
        .arg("budget")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_code(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/budget/manifest.json")).unwrap())
            .unwrap();
    let m = &manifest["metrics"];
    let get = |k: &str| m[k].as_f64().unwrap();
    assert!((get("cable_loss") - 0.0047).abs() < 0.0005);
    assert!((get("thermal_photons") - 0.013).abs() < 1e-12);
    assert!((get("cable_joints") - 0.010).abs() < 0.001);
    assert!((get("residual") - 0.056).abs() < 0.01);
    assert!(dir.join("out/budget/budget.csv").exists());
}

#[test]
fn device_override_flows_into_results() {
    let dir = tmpdir("override");
    // halving the cable length halves the transit time
    let cfg = write(
        &dir,
        "short.toml",
        "name = \"short\"\nexperiment = \"transfer\"\n\n[device]\ncable_length_m = 32.0\n\n[params]\neta = 1.0\n",
    );
    let out = bin()
        .arg("run")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_code(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/short/manifest.json")).unwrap())
            .unwrap();
    let tau = manifest["metrics"]["tau_st_ns"].as_f64().unwrap();
    assert!((tau - 133.1).abs() < 2.0, "tau_st {tau} ns");
}
