//! The `evrace` binary end to end: exit codes and files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn evrace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evrace")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn race(scenario: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["race", "--scenario", p(scenario), "--out", p(out), "--quiet"];
    args.extend_from_slice(extra);
    evrace(&args)
}

#[test]
fn fit_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = evrace(&["fit", "--data", p(&data("machine.csv")), "--component", "machine", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("machine: a=1.190509e-7"), "{}", stdout(&out));
    let report = std::fs::read_to_string(dir.path().join("machine_fit.toml")).unwrap();
    assert!(report.contains("component = \"machine\""));
    assert!(report.contains("samples = 200"));
}

#[test]
fn fit_recovers_a_lossless_component() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ideal.csv");
    let rows: String = (1..=20).map(|i| format!("{0},{0}\n", 5000.0 * i as f64)).collect();
    std::fs::write(&csv, format!("p_out_w,p_in_w\n{rows}")).unwrap();
    let out = evrace(&["fit", "--data", p(&csv), "--component", "ideal", "--out", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: toml::Table = std::fs::read_to_string(dir.path().join("ideal_fit.toml")).unwrap().parse().unwrap();
    let get = |k: &str| report[k].as_float().unwrap();
    assert!(get("a_fit").abs() < 1e-15);
    assert!((get("b_fit") - 1.0).abs() < 1e-9);
    assert!(get("c_fit").abs() < 1e-6);
}

#[test]
fn fit_rejects_degenerate_data() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flat.csv");
    std::fs::write(&csv, "p_out_w,p_in_w\n1000,1100\n1000,1100\n1000,1100\n").unwrap();
    let out = evrace(&["fit", "--data", p(&csv), "--out", p(dir.path())]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn missing_input_is_an_io_error_naming_the_file() {
    let out = evrace(&["fit", "--data", "/nonexistent/losses.csv"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("/nonexistent/losses.csv"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(code(&evrace(&["race"])), 2);
    assert_eq!(code(&evrace(&["frobnicate"])), 2);
    assert_eq!(code(&evrace(&["--help"])), 0);
}

#[test]
fn mesh_reports_its_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = evrace(&["mesh", "--scenario", p(&data("cold.toml")), "--out", p(dir.path())]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("231 nodes, 230 intervals"), "{text}");
    assert!(text.contains("NLP size: 3230 variables, 4150 constraints"), "{text}");
    let mesh = std::fs::read_to_string(dir.path().join("mesh.csv")).unwrap();
    assert_eq!(mesh.lines().filter(|l| !l.starts_with('#')).count(), 232);
}

#[test]
fn unknown_scenario_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(data("cold.toml")).unwrap() + "\n[solver]\nmax_iterations = 10\n";
    let scenario = dir.path().join("typo.toml");
    std::fs::write(&scenario, text).unwrap();
    for name in ["oval.csv", "params.toml", "thermal.toml"] {
        std::fs::copy(data(name), dir.path().join(name)).unwrap();
    }
    let out = evrace(&["mesh", "--scenario", p(&scenario)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("max_iterations"), "{}", stderr(&out));
}

#[test]
fn iteration_limit_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    // a stale trajectory from an earlier run must not survive
    std::fs::write(dir.path().join("solution.csv"), "stale").unwrap();
    let out = race(&data("cold.toml"), dir.path(), &["--max-iter", "3"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("solver_report.txt")).unwrap();
    assert!(report.contains("config_sha256"));
    assert!(!dir.path().join("solution.csv").exists());
}

#[test]
fn race_then_verify_round_trip() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = race(&data("cold.toml"), a.path(), &[]);
    assert_eq!(code(&first), 0, "{}{}", stdout(&first), stderr(&first));
    assert!(stdout(&first).contains("race time 40.747"), "{}", stdout(&first));
    let second = race(&data("cold.toml"), b.path(), &[]);
    assert_eq!(code(&second), 0);
    for name in ["solution.csv", "summary.txt", "scenario.toml", "mesh.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs between identical runs");
    }

    let verified = evrace(&["verify", p(a.path())]);
    assert_eq!(code(&verified), 0, "{}{}", stdout(&verified), stderr(&verified));
    assert!(a.path().join("verify.txt").exists());
    assert!(a.path().join("trace.csv").exists());

    // the plain open-loop replay does not hold the car on the road
    let open = evrace(&["verify", p(a.path()), "--mode", "open-loop", "--out", p(b.path())]);
    assert_eq!(code(&open), 4);

    // a trajectory edited after the solve fails the replay
    let path = b.path().join("solution.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = Vec::new();
    let mut v_col = None;
    for line in text.lines() {
        if line.starts_with('#') {
            lines.push(line.to_string());
        } else if v_col.is_none() {
            v_col = line.split(',').position(|h| h == "v");
            lines.push(line.to_string());
        } else {
            let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
            let k = v_col.expect("speed column");
            cells[k] = format!("{}", cells[k].parse::<f64>().unwrap() * 1.01);
            lines.push(cells.join(","));
        }
    }
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let tampered = evrace(&["verify", p(b.path())]);
    assert_eq!(code(&tampered), 4, "{}", stdout(&tampered));
}
