use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pimc_cli::report_value;

fn pimc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pimc")).args(args).output().unwrap()
}

fn write_model(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

const PAIR: &str = r#"{"n": 2, "edges": [[0, 1, -1.0]], "b": [0.0, 0.0], "gamma": [1.0, 1.0]}"#;

#[test]
fn threshold_reports() {
    let dir = tempfile::tempdir().unwrap();
    let edgeless = write_model(dir.path(), "free.json", r#"{"n": 3, "edges": [], "b": [0, 0, 0], "gamma": [1, 1, 1]}"#);
    let o = pimc(&["threshold", "--model", edgeless.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    for key in ["beta_simple", "beta_log", "beta_degree_weighted"] {
        assert_eq!(report_value(&text, key), Some("unbounded"));
    }

    let edges: Vec<String> = (0..7).flat_map(|i| ((i + 1)..7).map(move |j| format!("[{i},{j},1.0]"))).collect();
    let json = format!(r#"{{"n": 7, "edges": [{}], "b": [0,0,0,0,0,0,0], "gamma": [1,1,1,1,1,1,1]}}"#, edges.join(","));
    let complete = write_model(dir.path(), "k7.json", &json);
    let o = pimc(&["threshold", "--model", complete.to_str().unwrap(), "--kelvin"]);
    let text = stdout(&o);
    assert_eq!(report_value(&text, "beta_simple"), Some("0.0625"));
    assert!(report_value(&text, "temperature_simple_kelvin").is_some());
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_model(dir.path(), "bad.json", r#"{"n": 2, "edges": [[0, 0, 1.0]], "b": [0, 0], "gamma": [1, 1]}"#);
    assert_eq!(pimc(&["threshold", "--model", bad.to_str().unwrap()]).status.code(), Some(2));
    let missing = dir.path().join("missing.json");
    assert_eq!(pimc(&["threshold", "--model", missing.to_str().unwrap()]).status.code(), Some(2));
    let good = write_model(dir.path(), "pair.json", PAIR);
    let o = pimc(&["sample", "--model", good.to_str().unwrap(), "--beta", "0.1", "--eps", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn above_threshold_exits_3_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "pair.json", PAIR);
    let m = model.to_str().unwrap();
    let o = pimc(&["sample", "--model", m, "--beta", "2", "--samples", "10", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(pimc(&["estimate-z", "--model", m, "--beta", "2", "--seed", "1"]).status.code(), Some(3));

    let out = dir.path().join("forced.csv");
    let o = pimc(&["sample", "--model", m, "--beta", "2", "--samples", "10", "--seed", "1", "--force-steps", "40", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("heuristic"));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 11);
}

#[test]
fn budget_failure_exits_4_without_writing_samples() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "strong.json", r#"{"n": 2, "edges": [[0, 1, 0.1]], "b": [2.0, -2.0], "gamma": [3.0, 3.0]}"#);
    let out = dir.path().join("s.csv");
    let o = pimc(&[
        "sample", "--model", model.to_str().unwrap(), "--beta", "3", "--samples", "50", "--seed", "2",
        "--force-steps", "20", "--retry-cap", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(report_value(&stdout(&o), "valid"), Some("false"));
    assert!(!out.exists());
}

#[test]
fn sample_report_lists_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "pair.json", PAIR);
    let o = pimc(&["sample", "--model", model.to_str().unwrap(), "--temp-ghz", "20", "--samples", "5", "--seed", "9"]);
    assert!(o.status.success());
    let report = String::from_utf8(o.stderr.clone()).unwrap();
    for key in ["seed", "beta", "eps", "workers", "retry_cap", "fail_prob", "alpha", "t_mix", "jump_budget", "failures"] {
        assert!(report_value(&report, key).is_some(), "missing {key}");
    }
    assert_eq!(report_value(&report, "beta"), Some("0.05"));
    assert_eq!(report_value(&report, "seed"), Some("9"));
    let csv = stdout(&o);
    assert_eq!(csv.lines().next(), Some("z0,z1"));
    assert!(csv.lines().skip(1).all(|l| l.split(',').all(|z| z == "1" || z == "-1")));
}

#[test]
fn unseeded_runs_report_their_seed() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "pair.json", PAIR);
    let o = pimc(&["sample", "--model", model.to_str().unwrap(), "--beta", "0.05", "--samples", "3"]);
    let report = String::from_utf8(o.stderr.clone()).unwrap();
    assert!(report_value(&report, "seed").unwrap().parse::<u64>().is_ok());
}

#[test]
fn estimate_on_classical_model_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "c.json", r#"{"n": 2, "edges": [[0, 1, 1.0]], "b": [0.5, 0.0], "gamma": [0.0, 0.0]}"#);
    let o = pimc(&["estimate-z", "--model", model.to_str().unwrap(), "--beta", "0.3", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(report_value(&text, "method"), Some("classical-enumeration"));
    let z: f64 = report_value(&text, "z").unwrap().parse().unwrap();
    let exact: f64 = [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        .iter()
        .map(|&(a, b): &(i32, i32)| (-0.3 * ((a * b) as f64 + 0.5 * a as f64)).exp())
        .sum();
    assert!((z - exact).abs() < 1e-12 * exact);
}

#[test]
fn estimate_report_has_stages_and_interval() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "pair.json", PAIR);
    let o = pimc(&["estimate-z", "--model", model.to_str().unwrap(), "--beta", "0.1", "--seed", "4"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let stages: usize = report_value(&text, "stages").unwrap().parse().unwrap();
    assert!(stages > 0);
    assert!(report_value(&text, "stage.0").is_some());
    let lo: f64 = report_value(&text, "ci95_low").unwrap().parse().unwrap();
    let hi: f64 = report_value(&text, "ci95_high").unwrap().parse().unwrap();
    let z: f64 = report_value(&text, "z").unwrap().parse().unwrap();
    assert!(lo < z && z < hi);
    assert!(report_value(&text, "anchor_remainder").is_some());
}

#[test]
fn verify_small_model_passes() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "pair.json", r#"{"n": 2, "edges": [[0, 1, 0.8]], "b": [0.3, -0.2], "gamma": [1.0, 0.7]}"#);
    let o = pimc(&["verify", "--model", model.to_str().unwrap(), "--beta", "0.1", "--seed", "3", "--samples", "5000", "--updates", "20000"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split('\t').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 5 && r[1] == "PASS"), "{text}");
    assert!(rows.iter().any(|r| r[0] == "stationarity"));
}

#[test]
fn verify_reports_size_guards_per_check() {
    let dir = tempfile::tempdir().unwrap();
    let n = 12;
    let edges: Vec<String> = (0..n).map(|i| format!("[{i},{},0.5]", (i + 1) % n)).collect();
    let zeros = vec!["0"; n].join(",");
    let ones = vec!["1"; n].join(",");
    let json = format!(r#"{{"n": {n}, "edges": [{}], "b": [{zeros}], "gamma": [{ones}]}}"#, edges.join(","));
    let model = write_model(dir.path(), "ring.json", &json);
    let o = pimc(&["verify", "--model", model.to_str().unwrap(), "--beta", "0.05", "--seed", "1", "--updates", "2000", "--tv-instances", "5"]);
    let text = stdout(&o);
    assert!(o.status.success(), "{text}");
    for check in ["stationarity", "trotter_convergence", "mu_oracle"] {
        let row = text.lines().find(|l| l.starts_with(check)).unwrap();
        assert!(row.contains("SKIP") && row.contains("size guard"), "{row}");
    }
}
