use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cfx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cfx")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generated(dir: &TempDir, n: usize, d: usize, e: usize, seed: u64) -> PathBuf {
    let path = dir.path().join(format!("inst_{n}_{d}_{e}_{seed}.json"));
    let out = cfx(&[
        "generate",
        "--n",
        &n.to_string(),
        "--d",
        &d.to_string(),
        "--e",
        &e.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path_str(&path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Summary line value, e.g. `W2^2           12.5` → 12.5.
fn summary_value(text: &str, key: &str) -> f64 {
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {text}"));
    line[key.len()..].split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn generate_is_deterministic_and_reloads() {
    let dir = TempDir::new().unwrap();
    let a = generated(&dir, 30, 6, 5, 1);
    let text_a = std::fs::read_to_string(&a).unwrap();
    std::fs::rename(&a, dir.path().join("first.json")).unwrap();
    let b = generated(&dir, 30, 6, 5, 1);
    assert_eq!(text_a, std::fs::read_to_string(&b).unwrap());
    let inst = cfx_core::Instance::load(&b).unwrap();
    assert_eq!(inst.n_locations(), 11);
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.json");
    assert_eq!(code(&cfx(&["generate", "--n", "4", "--d", "0", "--out", path_str(&out)])), 2);
    assert_eq!(code(&cfx(&["generate", "--n", "4"])), 2);
    assert_eq!(code(&cfx(&["frobnicate"])), 2);
}

#[test]
fn infeasible_desired_space_exits_three() {
    let dir = TempDir::new().unwrap();
    let inst = generated(&dir, 4, 3, 2, 1);
    let out = cfx(&["explain", "--instance", path_str(&inst), "--budget", "1", "--force-open", "0,1"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("forced open"));
}

#[test]
fn factual_desired_space_costs_nothing() {
    let dir = TempDir::new().unwrap();
    let inst = generated(&dir, 8, 4, 2, 5);
    let report = dir.path().join("bound.json");
    let out = cfx(&["bound", "--instance", path_str(&inst), "--budget", "2", "--out", path_str(&report)]);
    assert_eq!(code(&out), 0);
    let open: Vec<String> = read_json(&report)["factual"]["open"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.to_string())
        .collect();
    let open = open.join(",");
    let out = cfx(&["explain", "--instance", path_str(&inst), "--budget", "2", "--alpha", "1", "--force-open", &open]);
    assert_eq!(code(&out), 0);
    assert_eq!(summary_value(&stdout(&out), "objective"), 0.0);
    let out = cfx(&["bound", "--instance", path_str(&inst), "--budget", "2", "--force-open", &open]);
    assert_eq!(summary_value(&stdout(&out), "global bound"), 0.0);
}

#[test]
fn distribution_dump_and_regularization() {
    let dir = TempDir::new().unwrap();
    let inst = generated(&dir, 4, 3, 2, 7);
    let dump = dir.path().join("dist.csv");
    let mut w = Vec::new();
    for lambda in ["0", "0.1"] {
        let out = cfx(&[
            "explain",
            "--instance",
            path_str(&inst),
            "--budget",
            "1",
            "--lambda",
            lambda,
            "--distributions",
            path_str(&dump),
        ]);
        assert_eq!(code(&out), 0);
        w.push(summary_value(&stdout(&out), "W2^2"));
    }
    assert!(w[1] <= w[0] + 1e-9, "{w:?}");

    let mut rdr = csv::Reader::from_path(&dump).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["customer", "alternative", "kind", "factual", "counterfactual"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4 * 5);
    for n in 0..4 {
        let mine: Vec<&csv::StringRecord> = rows.iter().filter(|r| r[0] == *n.to_string()).collect();
        assert_eq!(mine.len(), 5);
        for col in [3, 4] {
            let total: f64 = mine.iter().map(|r| r[col].parse::<f64>().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn bound_never_exceeds_explanation() {
    let dir = TempDir::new().unwrap();
    let inst = generated(&dir, 10, 5, 3, 2);
    let lambda = 0.5;
    let args = ["--instance", path_str(&inst), "--budget", "2", "--lambda", "0.5"];
    let b = cfx(&[&["bound"][..], &args].concat());
    let e = cfx(&[&["explain"][..], &args].concat());
    assert_eq!((code(&b), code(&e)), (0, 0));
    let bound = summary_value(&stdout(&b), "global bound");
    let total = summary_value(&stdout(&e), "objective");
    assert!(bound <= total / lambda + 1e-6, "{bound} > {total}/{lambda}");
}

#[test]
fn bound_report_is_stable() {
    let dir = TempDir::new().unwrap();
    let inst = generated(&dir, 6, 4, 2, 3);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert_eq!(code(&cfx(&["bound", "--instance", path_str(&inst), "--budget", "2", "--out", path_str(p)])), 0);
    }
    assert_eq!(std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    let v = read_json(&a);
    assert_eq!(v["schema_version"], 1);
    assert!(v["bound"]["per_z"].is_array());
}

#[test]
fn time_limit_with_incumbent_exits_four() {
    let dir = TempDir::new().unwrap();
    let inst = generated(&dir, 6, 4, 2, 3);
    let out = cfx(&["explain", "--instance", path_str(&inst), "--budget", "2", "--time-limit", "0"]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("time limit"));
}

#[test]
fn experiment_writes_one_row_per_cell() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"n": [5], "d": [4], "r": [2], "lambda": [0.1], "instances_per_cell": 2,
            "n_competitors": 2, "time_limit_s": 60, "base_seed": 1,
            "solver": {"multistarts": 2, "max_iterations": 300}}"#,
    )
    .unwrap();
    let csv_path = dir.path().join("report.csv");
    let raw = dir.path().join("raw.jsonl");
    let timings = dir.path().join("timings.csv");
    for _ in 0..2 {
        let out = cfx(&[
            "experiment",
            path_str(&spec),
            "--csv",
            path_str(&csv_path),
            "--raw",
            path_str(&raw),
            "--timings",
            path_str(&timings),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&csv_path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,D,r,lambda,q_factual,q_new,w2,sparsity,avg_time_s,median_time_s,tl_count,gap");
    // appended twice: one header, two identical-config rows
    assert_eq!(lines.len(), 3);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..4], ["5", "4", "2", "0.1"]);
    let avg: f64 = fields[8].parse().unwrap();
    let median: f64 = fields[9].parse().unwrap();
    assert!(avg >= 0.0 && median >= 0.0 && median <= avg * 2.0);
    assert_eq!(fields[10], "0");
    assert_eq!(fields[11], "-");
    let raw_lines: Vec<Value> =
        std::fs::read_to_string(&raw).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(raw_lines.len(), 4);
    assert!(raw_lines.iter().all(|v| v["schema_version"] == 1 && v["error"].is_null()));
    assert_eq!(std::fs::read_to_string(&timings).unwrap().lines().count(), 3);
}

#[test]
fn experiment_rejects_invalid_spec() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, r#"{"n": [5], "d": [4], "r": [2], "lambda": [0.1], "instances_per_cell": 0}"#).unwrap();
    assert_eq!(code(&cfx(&["experiment", path_str(&spec)])), 2);
}
