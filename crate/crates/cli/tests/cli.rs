//! End-to-end checks of the command-line interface: exit codes, output
//! files, and reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dde-stability"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, body).unwrap();
    path
}

const EXAMPLE_ONE: &str = r#"
[model]
kind = "nicholson"
p = 5.0
delta = 1.0
a = 1.0

[delay]
variant = "frozen_schedule"
switch_times = [0.0]
samples = [-1.0]

[history]
kind = "linear_ramp"
start_time = -1.0
start_value = 0.0
end_value = 1.0

[run]
horizon = 10.0
step = 0.01

[output]
dir = "out"
"#;

#[test]
fn simulate_writes_expected_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), EXAMPLE_ONE);
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv = fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x"));
    let mut checked = 0;
    for line in lines {
        let (t, x) = line.split_once(',').unwrap();
        let t: f64 = t.parse().unwrap();
        let x: f64 = x.parse().unwrap();
        assert!(
            (x - (-t).exp()).abs() < 1e-6,
            "row t = {t} deviates from exp(-t)"
        );
        checked += 1;
    }
    assert_eq!(checked, 1001);

    for name in ["manifest.json", "tail.json"] {
        let meta = fs::metadata(out_dir.join(name)).unwrap();
        assert!(meta.len() > 0, "{name} is empty");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["fading_memory"], serde_json::json!(false));
    assert!(manifest["config_hash"].as_str().unwrap().len() == 16);
}

#[test]
fn oversized_step_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[model]
kind = "nicholson"
p = 5.0
delta = 1.0
a = 1.0

[delay]
variant = "atoms"
atoms = [[1.0, 10.0]]

[history]
kind = "constant"
value = 0.3

[run]
horizon = 50.0
step = 3.0
"#,
    );
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("min positive lag"), "stderr: {stderr}");
}

#[test]
fn analyze_reports_regime_and_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[model]
kind = "nicholson"
p = 10.0
delta = 1.0
a = 1.0
"#,
    );
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "analyze",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(
        report["report"]["regime"],
        serde_json::json!("DelayDependent")
    );
    let tau_l = report["report"]["thresholds"]["tau_l"].as_f64().unwrap();
    assert!((tau_l - 1.0 / 11.0).abs() < 1e-12);
    let tau0 = report["report"]["hopf_delays"][0].as_f64().unwrap();
    assert!((tau0 - 2.930442).abs() < 1e-5);

    // Nonpositive parameters are a config error.
    let bad = write_config(
        tmp.path(),
        "[model]\nkind = \"nicholson\"\np = -1.0\ndelta = 1.0\na = 1.0\n",
    );
    let out_bad = run(&["analyze", "--config", bad.to_str().unwrap()]);
    assert_eq!(out_bad.status.code(), Some(2));
}

#[test]
fn counterexample_validates_band() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"
[model]
kind = "nicholson"
p = {}
delta = 1.0
a = 1.0

[counterexample]
r = 1.0
target_low = 0.5
target_high = 6.0
cycles = 3
"#,
            std::f64::consts::E.powi(3)
        ),
    );
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "counterexample",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let validation: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("validation.json")).unwrap())
            .unwrap();
    assert_eq!(validation["pass"], serde_json::json!(true));
    let schedule: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("schedule.json")).unwrap()).unwrap();
    assert_eq!(schedule["switch_times"].as_array().unwrap().len(), 6);
    assert!(fs::metadata(out_dir.join("trajectory.csv")).unwrap().len() > 0);
}

#[test]
fn sweep_rows_keep_threshold_ordering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[model]
kind = "nicholson"
p = 10.0
delta = 1.0
a = 1.0

[sweep]
parameter = "p"
values = [8.0, 14.0, 20.0]
"#,
    );
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--jobs",
        "2",
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("p,regime,"));
    let mut values = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        values.push(fields[0].parse::<f64>().unwrap());
        let tau_l: f64 = fields[5].parse().unwrap();
        let tau_l_star: f64 = fields[6].parse().unwrap();
        let tau_cmp: f64 = fields[7].parse().unwrap();
        assert!(
            tau_l_star > tau_cmp && tau_cmp > tau_l,
            "ordering broken: {line}"
        );
    }
    assert_eq!(values, vec![8.0, 14.0, 20.0]);

    // A single-point grid reproduces the analyze output for that point.
    let single = write_config(
        tmp.path(),
        r#"
[model]
kind = "nicholson"
p = 10.0
delta = 1.0
a = 1.0

[sweep]
parameter = "p"
values = [10.0]
"#,
    );
    let single_dir = tmp.path().join("single");
    let out_single = run(&[
        "sweep",
        "--config",
        single.to_str().unwrap(),
        "--output-dir",
        single_dir.to_str().unwrap(),
    ]);
    assert!(out_single.status.success());
    let single_csv = fs::read_to_string(single_dir.join("sweep.csv")).unwrap();
    let row: Vec<&str> = single_csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[1], "delay_dependent");
    assert!((row[5].parse::<f64>().unwrap() - 1.0 / 11.0).abs() < 1e-12);
    assert!((row[9].parse::<f64>().unwrap() - 2.930442).abs() < 1e-5);

    // Empty grid is a config error.
    let bad = write_config(
        tmp.path(),
        r#"
[model]
kind = "nicholson"
p = 10.0
delta = 1.0
a = 1.0

[sweep]
parameter = "p"
values = []
"#,
    );
    let out_bad = run(&["sweep", "--config", bad.to_str().unwrap()]);
    assert_eq!(out_bad.status.code(), Some(2));
}

#[test]
fn identical_config_and_seed_reproduce_bitwise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"
[model]
kind = "nicholson"
p = 10.0
delta = 1.0
a = 1.0

[delay]
variant = "atoms"
atoms = [[0.5, 1.0], [0.5, 2.5]]

[history]
kind = "sampled_constant"
lo = 0.2
hi = 3.0

[run]
horizon = 60.0
step = 0.01
seed = 12345

[output]
stride = 7
"#,
    );
    let (d1, d2) = (tmp.path().join("r1"), tmp.path().join("r2"));
    for d in [&d1, &d2] {
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            d.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    for name in ["trajectory.csv", "tail.json"] {
        let a = fs::read(d1.join(name)).unwrap();
        let b = fs::read(d2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn verify_filter_selects_criteria() {
    let out = run(&["verify", "--filter", "replica"]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("criterion 01"));
    assert!(stdout.contains("1/1 criteria passed"));

    let none = run(&["verify", "--filter", "no-such-criterion"]);
    assert_eq!(none.status.code(), Some(2));
}
