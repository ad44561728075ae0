//! End-to-end runs of the `kinreact` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
mesh.n_x = 5
mesh.n_v_half = 3
mesh.v_max = 4.0
profile1.family = "gaussian"
initial.family = "perturbed-equilibrium"
initial.amplitude = 0.3
bounds.rho_min = 0.5
bounds.rho_max = 2.0
time.dt = 0.1
time.t_final = 3.0
"#;

fn kinreact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinreact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn summary_of(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is the summary JSON")
}

#[test]
fn run_writes_csv_and_summary_sidecar() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let out = kinreact(&["run", "--config", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = dir.path().join("small.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("step,time,entropy,dissipation,gamma"));
    assert_eq!(lines.count(), 31);

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("small.csv.summary.json")).unwrap()).unwrap();
    assert_eq!(sidecar["status"], "completed");
    assert_eq!(sidecar["steps_completed"], 30);
    assert_eq!(summary_of(&out)["n_steps"], 30);
}

#[test]
fn jsonl_output_ends_with_summary() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.toml", &format!("{SMALL}output.format = \"jsonl\"\n"));
    let target = dir.path().join("records.jsonl");
    let out = kinreact(&["run", "--config", arg(&cfg), "--output", arg(&target)]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&target).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 32);
    assert_eq!(lines[0]["step"], 0);
    assert_eq!(lines[31]["summary"]["status"], "completed");
}

#[test]
fn invalid_config_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "bad.toml", &SMALL.replace("time.t_final = 3.0", "time.t_final = -1.0"));
    let out = kinreact(&["run", "--config", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("time.t_final"));

    let missing = dir.path().join("missing.toml");
    assert_eq!(kinreact(&["run", "--config", arg(&missing)]).status.code(), Some(1));
}

#[test]
fn initial_state_outside_bounds_is_rejected_when_fatal() {
    let dir = TempDir::new().unwrap();
    let text = SMALL.replace("initial.amplitude = 0.3", "initial.amplitude = 0.9");
    let cfg = write_config(&dir, "wide.toml", &text);
    assert_eq!(kinreact(&["run", "--config", arg(&cfg)]).status.code(), Some(0));
    let out = kinreact(&["run", "--config", arg(&cfg), "--check-level", "fatal"]);
    assert_eq!(out.status.code(), Some(1));
}

const SLOPPY: &str = r#"
mesh.n_x = 5
mesh.n_v_half = 3
mesh.v_max = 4.0
profile1.family = "gaussian"
initial.family = "uniform-densities"
initial.rho_a = 0.5
initial.rho_b = 0.5
bounds.rho_min = 0.4
bounds.rho_max = 2.5
time.dt = 3.0
time.t_final = 30.0
solver.picard_tol = 0.5
"#;

#[test]
fn failed_inequality_exits_with_two_only_when_fatal() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "sloppy.toml", SLOPPY);
    let logged = kinreact(&["run", "--config", arg(&cfg), "--check-level", "log"]);
    assert_eq!(logged.status.code(), Some(0));
    assert!(summary_of(&logged)["inequality_failures"].as_u64().unwrap() > 0);

    let fatal = kinreact(&["run", "--config", arg(&cfg), "--check-level", "fatal"]);
    assert_eq!(fatal.status.code(), Some(2));
    assert_eq!(summary_of(&fatal)["status"], "inequality-failure");
}

#[test]
fn picard_cap_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "capped.toml", &format!("{SMALL}solver.picard_max_iter = 1\n"));
    let out = kinreact(&["run", "--config", arg(&cfg)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(summary_of(&out)["status"], "solver-failure");
}

#[test]
fn fit_reads_back_the_decay_rate() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "small.toml", SMALL);
    let run = kinreact(&["run", "--config", arg(&cfg)]);
    let kappa = summary_of(&run)["kappa_norm"]["kappa"].as_f64().unwrap();

    let csv = dir.path().join("small.csv");
    let out = kinreact(&["fit", "--input", arg(&csv), "--column", "norm_dev"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let fitted: f64 = stdout.lines().next().unwrap().strip_prefix("kappa ").unwrap().parse().unwrap();
    assert!((fitted - kappa).abs() <= 1e-12 * kappa.abs());

    let bad = kinreact(&["fit", "--input", arg(&csv), "--column", "nope"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn verify_passes_on_the_reference_setup() {
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml");
    let out = Command::new(env!("CARGO_BIN_EXE_kinreact"))
        .args(["verify", "--config", arg(&cfg), "--samples", "10"])
        .env("SEED", "3")
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.starts_with("seed 3\n"));
    assert!(stdout.lines().skip(1).all(|l| l.starts_with("PASS ")));
}
