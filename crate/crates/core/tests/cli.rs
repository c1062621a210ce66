use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use levyepi::output::parse_trajectory_csv;
use levyepi::scenario::Scenario;

fn levyepi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyepi")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path_arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn threshold_exit_codes() {
    let out = levyepi(&["thresholds", "--preset", "table1-extinction"]);
    assert_eq!(code(&out), 0);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["report"]["verdict"], "ExtinctionCertified");
    assert_eq!(json["metadata"]["tool"], "levyepi");
    assert!(json["report"]["kappa"].as_f64().unwrap() < 0.0);

    let out = levyepi(&["thresholds", "--preset", "table1-persistence"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn indeterminate_scenario_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::preset("table1-extinction").unwrap();
    s.model.beta = 0.5;
    s.model.beta_m = 0.6;
    let file = dir.path().join("mid.scn");
    fs::write(&file, s.to_text()).unwrap();
    let out = levyepi(&["thresholds", "--scenario", path_arg(&file)]);
    assert_eq!(code(&out), 2);
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["report"]["verdict"], "Indeterminate");
    assert!(json["report"]["kappa"].as_f64().unwrap() > 0.0);
    assert!(json["report"]["r0_tilde"].as_f64().unwrap() <= 1.0);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&levyepi(&["simulate", "--preset", "table1-extinction", "--dt", "0"])), 64);
    assert_eq!(code(&levyepi(&["simulate", "--preset", "no-such-preset"])), 64);
    assert_eq!(code(&levyepi(&["simulate"])), 64);
    assert_eq!(code(&levyepi(&["frobnicate"])), 64);
    assert_eq!(code(&levyepi(&["--help"])), 0);

    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.scn");
    let text = Scenario::preset("table1-extinction")
        .unwrap()
        .to_text()
        .replace("jumps.atom.0.xi2 = 0.8", "jumps.atom.0.xi2 = -1.5");
    fs::write(&file, text).unwrap();
    let out = levyepi(&["thresholds", "--scenario", path_arg(&file)]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("xi2"));
}

#[test]
fn missing_scenario_file_exits_74() {
    let out = levyepi(&["thresholds", "--scenario", "/nonexistent/dir/x.scn"]);
    assert_eq!(code(&out), 74);
}

#[test]
fn simulate_writes_csv_jumps_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let jumps = dir.path().join("jumps.csv");
    let svg = dir.path().join("plot.svg");
    let out = levyepi(&[
        "simulate",
        "--preset",
        "table1-extinction",
        "--seed",
        "42",
        "--t-end",
        "200",
        "--out",
        path_arg(&csv),
        "--jumps-out",
        path_arg(&jumps),
        "--svg",
        path_arg(&svg),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("# levyepi"));
    assert!(text.contains("# seed = 42"));
    assert!(text.lines().any(|l| l == "t,S,I,S_m,I_m"));
    let (times, states) = parse_trajectory_csv(&text).unwrap();
    assert_eq!(*times.last().unwrap(), 200.0);
    let last = states.last().unwrap();
    assert!(last.i < 1e-2 && last.i_m < 1e-2, "{last:?}");

    let embedded: String =
        text.lines().filter_map(|l| l.strip_prefix("# ")).skip(2).map(|l| format!("{l}\n")).collect();
    let s = Scenario::parse(&embedded).unwrap();
    assert_eq!(s.sim.seed, 42);
    assert_eq!(s.model, Scenario::preset("table1-extinction").unwrap().model);

    assert!(fs::read_to_string(&jumps).unwrap().lines().any(|l| l.starts_with("t,atom")));
    let svg = fs::read_to_string(&svg).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert_eq!(svg.matches("<polyline").count(), 4);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--preset", "table1-persistence", "--seed", "7", "--t-end", "20"];
    let a = levyepi(&args);
    let b = levyepi(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = levyepi(&["simulate", "--preset", "table1-persistence", "--seed", "8", "--t-end", "20"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn ensemble_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let paths = dir.path().join("paths.csv");
    let run = |workers: &str, paths_out: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_levyepi"));
        cmd.env("LEVYEPI_WORKERS", workers).args([
            "ensemble",
            "--preset",
            "table1-extinction",
            "--paths",
            "12",
            "--t-end",
            "20",
        ]);
        if let Some(p) = paths_out {
            cmd.args(["--paths-out", path_arg(p)]);
        }
        cmd.output().unwrap()
    };
    let one = run("1", Some(&paths));
    let four = run("4", None);
    assert_eq!(code(&one), 0, "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, four.stdout);
    let json: serde_json::Value = serde_json::from_str(&stdout(&one)).unwrap();
    assert_eq!(json["metadata"]["n_paths"], 12);
    assert_eq!(json["report"]["n_paths"], 12);
    let csv = fs::read_to_string(&paths).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 13);
}

#[test]
fn verify_tables_passes() {
    let out = levyepi(&["verify", "--preset", "table1-extinction", "--target", "tables"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(json["report"]["passed"], true);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[PASS]"));
}

#[test]
fn thresholds_report_written_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("report.json");
    let out = levyepi(&["thresholds", "--preset", "table1-persistence", "--out", path_arg(&file)]);
    assert_eq!(code(&out), 1);
    let saved = fs::read_to_string(&file).unwrap();
    assert_eq!(saved.trim(), stdout(&out).trim());
}
