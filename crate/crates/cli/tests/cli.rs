use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_cbf-lab");

const DOUBLE_INTEGRATOR: &str = r#"{
    "A": [[0, 1], [0, 0]], "B": [[0], [1]], "c": [1, 0], "d": 2,
    "K": [[1, 2]], "alphas": [1, 2]
}"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CBF_LAB_FIXTURES")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn analyze_exit_codes_follow_the_verdict() {
    let out = run(&["analyze", "@aircraft"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains(&format!("{:<22}GES\n", "verdict")));

    for name in ["@fig2-top", "@fig2-bottom"] {
        let out = run(&["analyze", name]);
        assert_eq!(code(&out), 3, "{}", stderr(&out));
        assert!(stdout(&out).contains("Indeterminate"));
    }
}

#[test]
fn analyze_reports_unbounded_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // Ã = A − B·cᵀA/(cᵀB) has the eigenvalue +1 for any K.
    let path = write(
        dir.path(),
        "unstable.json",
        r#"{"A": [[1, 0], [0, -1]], "B": [[1], [1]], "c": [0, 1], "d": 1, "K": [[3, 0]]}"#,
    );
    let out = run(&["analyze", &path]);
    assert_eq!(code(&out), 2, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("Unbounded"));
}

#[test]
fn analyze_rejects_the_fig1_gains() {
    for name in ["@fig1-bottom-right", "@fig1-bottom-left"] {
        let out = run(&["analyze", name]);
        assert_eq!(code(&out), 1);
        assert!(stderr(&out).contains("not Hurwitz"), "{}", stderr(&out));
    }
}

#[test]
fn malformed_input_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.json", "{ not json");
    let out = run(&["analyze", &path]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("parse error"));

    let out = run(&["analyze", "/nonexistent/problem.json"]);
    assert_eq!(code(&out), 1);
    let out = run(&["analyze", "@nope"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("unknown fixture"));
    let out = run(&["--tol", "-1", "analyze", "@aircraft"]);
    assert_eq!(code(&out), 1);
    let out = run(&["analyze", "@aircraft", "--format", "csv"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn console_output_is_deterministic() {
    let a = stdout(&run(&["analyze", "@fig2-bottom"]));
    let b = stdout(&run(&["analyze", "@fig2-bottom"]));
    assert_eq!(a, b);
    let first: Vec<&str> = a
        .lines()
        .take(4)
        .map(|l| l.split_at(22).0.trim_end())
        .collect();
    assert_eq!(first, ["problem", "dimensions", "verdict", "xi"]);
}

#[test]
fn analyze_json_and_filter_dump() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "analyze",
        "@fig2-top",
        "--format",
        "json",
        "--dump-filter",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    let report = read_json(&dir.path().join("analysis.json"));
    assert_eq!(report["verdict"], "Indeterminate");
    assert_eq!(report["eigen"]["eigenvalues"].as_array().unwrap().len(), 3);
    let filter = read_json(&dir.path().join("filter.json"));
    assert_eq!(filter["relative_degree"], 1);
    assert_eq!(filter["alpha"], 5.0);
}

#[test]
fn design_succeeds_on_the_aircraft() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "design",
        "@aircraft",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rep = read_json(&dir.path().join("design.json"));
    assert_eq!(rep["feasible"], true);
    let k = rep["solution"]["K"].as_array().unwrap();
    assert_eq!(k.len(), 2);
    assert_eq!(k[0].as_array().unwrap().len(), 4);
    assert!(rep["solution"]["abscissa_a0"].as_f64().unwrap() < -1e-6);
    assert!(rep["solution"]["abscissa_a_tilde"].as_f64().unwrap() < -1e-6);
}

#[test]
fn design_succeeds_on_a_full_degree_chain() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "di.json", DOUBLE_INTEGRATOR);
    let out = run(&["design", &path, "--max-iter", "2000"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let rep: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rep["feasible"], true);
}

#[test]
fn design_reports_the_single_input_obstruction() {
    let out = run(&["design", "@fig1-bottom-left"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("m=1 spectral obstruction"));
    let rep: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(rep["feasible"], false);
    assert!(rep["note"]
        .as_str()
        .unwrap()
        .starts_with("m=1 spectral obstruction"));

    let out = run(&["design", "@aircraft", "--eps", "0"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "di.json", DOUBLE_INTEGRATOR);
    let out = run(&[
        "simulate",
        &path,
        "--x0",
        "-1,0.5",
        "--horizon",
        "1",
        "--record-every",
        "100",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("run,t,x1,x2,mode,h0,h1"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    assert!(rows[0].starts_with("0,0.000000,-1.000000000e0,5.000000000e-1,"));

    let out = run(&["simulate", &path, "--x0", "1,2,3"]);
    assert_eq!(code(&out), 1);
    let out = run(&["simulate", &path]);
    assert_eq!(code(&out), 1);
    let out = run(&["simulate", &path, "--x0", "0,0", "--step", "0"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn simulate_grid_to_json_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = run(&[
        "simulate",
        "@fig2-top",
        "--grid",
        "2",
        "--extent",
        "0.5",
        "--horizon",
        "1",
        "--format",
        "json",
        "--out-dir",
        d,
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let runs = read_json(&dir.path().join("trajectories.json"));
    let runs = runs.as_array().unwrap();
    assert!(!runs.is_empty() && runs.len() <= 8);
    assert_eq!(runs[0]["x0"].as_array().unwrap().len(), 3);

    let out = run(&[
        "simulate",
        "@fig2-top",
        "--grid",
        "2",
        "--extent",
        "0.5",
        "--horizon",
        "1",
        "--format",
        "svg",
        "--out-dir",
        d,
    ]);
    assert_eq!(code(&out), 0);
    let svg = std::fs::read_to_string(dir.path().join("phase.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn reproduce_fig3_clamps_the_roll_rate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "reproduce",
        "fig3",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    for f in ["fig3.csv", "fig3.svg", "summary.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary = read_json(&dir.path().join("summary.json"));
    assert!(summary
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["pass"] == true));
    let csv = std::fs::read_to_string(dir.path().join("fig3.csv")).unwrap();
    assert!(csv.starts_with("t,y_cmd,p_s_nominal,p_s_filtered\n"));
}

#[test]
fn reproduce_fig3_fails_when_the_command_never_reaches_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "reproduce",
        "fig3",
        "--command",
        "0:0,1:0.1",
        "--format",
        "json",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 5, "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
    assert!(!dir.path().join("fig3.csv").exists());
}

#[test]
fn reproduce_fig2_matches_both_behaviours() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "reproduce",
        "fig2",
        "--format",
        "svg",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(dir.path().join("fig2-top.svg").exists());
    assert!(dir.path().join("fig2-bottom.svg").exists());
    assert!(!dir.path().join("fig2-top.csv").exists());
}

#[test]
fn reproduce_fig1_fails_on_the_printed_gains() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "reproduce",
        "fig1",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("not Hurwitz"));
}

#[test]
fn fixture_directory_override() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "aircraft.json", DOUBLE_INTEGRATOR);
    let out = Command::new(BIN)
        .args(["analyze", "@aircraft"])
        .env("CBF_LAB_FIXTURES", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("n=2 m=1 r=2"));

    let out = Command::new(BIN)
        .args(["analyze", "@fig2-top"])
        .env("CBF_LAB_FIXTURES", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("cannot read"));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["reproduce", "fig9"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["simulate", "--help"])), 0);
}
