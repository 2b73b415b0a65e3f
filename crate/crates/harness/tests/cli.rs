//! End-to-end runs of the `cheapctl` binary.

use std::path::Path;
use std::process::{Command, Output};

use cheapctl::output::{read_phase_long, read_phase_matrix, read_sweep_file, SCHEMA_LINE};

const SMALL_SCENARIO: &str = "\
name = small
system = linear_nmp, linear_nmp_unstable
epsilon_list = 1, 1e-2
T_list = 0.5, 2
dt = 0.5
x0_list = 0, 1; 1, 0
sim_time = 4
seed = 3
";

fn cheapctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cheapctl"))
        .args(args)
        .env_remove("CHEAPCTL_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let path = dir.join("scenario_in.cfg");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn sweep_bytes(scenario: &str, out: &Path, workers: &str) -> Vec<u8> {
    let o = cheapctl(&[
        "sweep",
        "--scenario",
        scenario,
        "--out",
        out.to_str().unwrap(),
        "--workers",
        workers,
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    std::fs::read(out.join("sweep.csv")).unwrap()
}

#[test]
fn bound_from_unit_constants() {
    let o = cheapctl(&[
        "bound",
        "--alpha-v",
        "1",
        "--alpha-w-hi",
        "1",
        "--alpha-w-lo",
        "1",
        "--k-w",
        "1",
        "--dt",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let t_star: f64 = text
        .lines()
        .find_map(|l| l.strip_prefix("T* = "))
        .expect("T* line")
        .trim()
        .parse()
        .unwrap();
    // M = e^{-1/2}, T* = 2 / (1 - M)
    let expected = 2.0 / (1.0 - (-0.5f64).exp());
    assert!((t_star - expected).abs() < 1e-5, "{t_star}");
    assert!(text.contains("M(dt) = 0.606531"));
}

#[test]
fn bound_with_partial_constants_is_a_config_error() {
    let o = cheapctl(&["bound", "--alpha-v", "1", "--dt", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn vi_compare_defaults_agree() {
    let o = cheapctl(&["vi-compare"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("max |P_k - P_DRE| = "))
        .expect("summary line");
    let gap: f64 = line.split_whitespace().next().unwrap().parse().unwrap();
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn vi_compare_rejects_nonlinear_plant() {
    let o = cheapctl(&["vi-compare", "--system", "pendulum"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_epsilon_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        &SMALL_SCENARIO.replace("epsilon_list = 1, 1e-2", "epsilon_list ="),
    );
    let o = cheapctl(&[
        "sweep",
        "--scenario",
        &sc,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("epsilon_list"));
}

#[test]
fn unknown_system_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(
        dir.path(),
        &SMALL_SCENARIO.replace("linear_nmp_unstable", "warp_drive"),
    );
    let o = cheapctl(&[
        "sweep",
        "--scenario",
        &sc,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_config_code() {
    assert_eq!(
        cheapctl(&["simulate", "--epsilon", "abc"]).status.code(),
        Some(2)
    );
    assert_eq!(cheapctl(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(cheapctl(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_writes_versioned_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = cheapctl(&[
        "simulate",
        "--system",
        "linear_nmp",
        "--epsilon",
        "1e-2",
        "--horizon",
        "4",
        "--dt",
        "0.25",
        "--x0",
        "0,1",
        "--sim-time",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert_eq!(trace.lines().next(), Some(SCHEMA_LINE));
    assert!(trace.lines().count() > 3);
}

#[test]
fn sweep_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), SMALL_SCENARIO);
    let (a, b, c) = (
        dir.path().join("a"),
        dir.path().join("b"),
        dir.path().join("c"),
    );
    let serial = sweep_bytes(&sc, &a, "1");
    let rerun = sweep_bytes(&sc, &b, "1");
    let parallel = sweep_bytes(&sc, &c, "4");
    assert_eq!(serial, rerun);
    assert_eq!(serial, parallel);

    let result = read_sweep_file(&a.join("sweep.csv")).unwrap();
    assert_eq!(result.scenario, "small");
    assert_eq!(result.seed, 3);
    assert_eq!(result.rows.len(), 16);

    let m = read_phase_matrix(std::fs::File::open(a.join("phase_linear_nmp_x0-0.csv")).unwrap())
        .unwrap();
    assert_eq!(m.epsilons, vec![1.0, 1e-2]);
    assert_eq!(m.horizons, vec![0.5, 2.0]);
    let long = read_phase_long(std::fs::File::open(a.join("phase_long.csv")).unwrap()).unwrap();
    assert_eq!(long.len(), 16);

    let copy = std::fs::read_to_string(a.join("scenario.cfg")).unwrap();
    let reparsed = cheapctl::Scenario::parse(&copy).unwrap();
    assert_eq!(reparsed, cheapctl::Scenario::parse(SMALL_SCENARIO).unwrap());
}
