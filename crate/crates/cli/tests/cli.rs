use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coded-stream"))
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    bin()
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, body: &str) -> PathBuf {
    let path = dir.path().join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn summary_value(out: &Path, key: &str) -> String {
    read_csv(&out.join("summary.csv"))
        .into_iter()
        .find(|r| r[0] == key)
        .map(|r| r[1..].join(","))
        .unwrap_or_else(|| panic!("no {key} in summary"))
}

#[test]
fn split_five_workers() {
    let out = TempDir::new().unwrap();
    let o = run(&["split"], &shipped("five_workers.json"), out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.path().join("summary.csv"));
    assert_eq!(rows[0], ["split", "worker", "id", "kappa_real", "kappa", "score", "theta", "mismatch"]);
    let optimal: Vec<usize> = rows[1..].iter().filter(|r| r[0] == "optimal").map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(optimal.len(), 5);
    assert_eq!(optimal.iter().sum::<usize>(), 55);
    let uniform: Vec<usize> = rows[1..].iter().filter(|r| r[0] == "uniform").map(|r| r[4].parse().unwrap()).collect();
    assert_eq!(uniform, vec![11; 5]);
}

#[test]
fn split_single_worker_takes_everything() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, r#"{"workers": [{"id": 0, "mu": 2.0, "comm_delay": 0.1}], "code": {"k": 8, "complexity": 1, "omega": 1.25}}"#);
    let o = run(&["split"], &cfg, dir.path());
    assert!(o.status.success());
    let rows = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(rows[1][4], "10");
}

#[test]
fn invalid_moments_exit_2_naming_worker() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"workers": [{"id": 0, "mu": 1.0}, {"id": 42, "mean_unit_time": 2.0, "second_moment_unit_time": 3.0}], "code": {"k": 4, "complexity": 1}}"#,
    );
    let o = run(&["split"], &cfg, dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("worker 42"));
}

#[test]
fn degenerate_worker_exit_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"workers": [{"id": 5, "mean_unit_time": 0.0, "second_moment_unit_time": 0.0}], "code": {"k": 4, "complexity": 1}}"#,
    );
    assert_eq!(run(&["split"], &cfg, dir.path()).status.code(), Some(3));
}

#[test]
fn malformed_config_exit_2() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "{ not json");
    assert_eq!(run(&["split"], &cfg, dir.path()).status.code(), Some(2));
    let missing = dir.path().join("absent.json");
    assert_eq!(run(&["split"], &missing, dir.path()).status.code(), Some(2));
    let cfg = write_config(&dir, r#"{"workers": [{"id": 0, "mu": 1.0}], "code": {"k": 4, "complexity": 1}}"#);
    // no arrival model
    assert_eq!(run(&["simulate"], &cfg, dir.path()).status.code(), Some(2));
}

#[test]
fn analyze_reports_queue_statistics() {
    let out = TempDir::new().unwrap();
    let o = run(&["analyze"], &shipped("five_workers.json"), out.path());
    assert!(o.status.success());
    assert_eq!(summary_value(out.path(), "stable"), "true");
    let kingman: f64 = summary_value(out.path(), "delay_kingman").parse().unwrap();
    let pk: f64 = summary_value(out.path(), "delay_pk").parse().unwrap();
    assert!((kingman - pk).abs() <= 1e-9 * pk);
    let bound: f64 = summary_value(out.path(), "lower_bound").parse().unwrap();
    assert!(bound < pk);
}

#[test]
fn simulate_is_byte_identical_for_same_seed() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    let cfg = shipped("five_workers.json");
    for out in [&a, &b] {
        assert!(run(&["simulate", "--jobs", "100", "--seed", "9"], &cfg, out.path()).status.success());
    }
    assert!(run(&["simulate", "--jobs", "100", "--seed", "10"], &cfg, c.path()).status.success());
    for file in ["delays.csv", "trace.csv", "summary.csv"] {
        let x = fs::read(a.path().join(file)).unwrap();
        assert_eq!(x, fs::read(b.path().join(file)).unwrap(), "{file}");
        assert!(!x.is_empty());
    }
    assert_ne!(fs::read(a.path().join("delays.csv")).unwrap(), fs::read(c.path().join("delays.csv")).unwrap());
    let delays = read_csv(&a.path().join("delays.csv"));
    assert_eq!(delays[0], ["job_index", "arrival_time", "completion_time", "delay"]);
    assert_eq!(delays.len(), 101);
    let trace = read_csv(&a.path().join("trace.csv"));
    assert_eq!(trace[0], ["time", "worker", "state", "job", "iteration"]);
}

#[test]
fn purging_flag_overrides_config() {
    let on = TempDir::new().unwrap();
    let off = TempDir::new().unwrap();
    let cfg = shipped("five_workers.json");
    assert!(run(&["simulate", "--jobs", "50", "--purging", "on"], &cfg, on.path()).status.success());
    assert!(run(&["simulate", "--jobs", "50", "--purging", "off"], &cfg, off.path()).status.success());
    assert_eq!(summary_value(off.path(), "tasks_purged"), "0");
    assert_ne!(summary_value(on.path(), "tasks_purged"), "0");
    let d_on: f64 = summary_value(on.path(), "mean_delay").parse().unwrap();
    let d_off: f64 = summary_value(off.path(), "mean_delay").parse().unwrap();
    assert!(d_on <= d_off);
}

#[test]
fn sweep_single_point_matches_theory() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{
            "workers": [{"id": 0, "mu": 3.0, "comm_delay": 0.05}, {"id": 1, "mu": 1.0, "comm_delay": 0.02}, {"id": 2, "mu": 2.0}],
            "arrival": {"kind": "poisson", "rate": 0.1},
            "code": {"k": 12, "complexity": 1},
            "sim": {"iterations": 2, "jobs": 4000, "omega_grid": [1.0]},
            "seed": 3
        }"#,
    );
    let o = run(&["sweep-omega"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][..5], ["Omega", "delay_optimal_sim", "delay_uniform_sim", "delay_theory_nopurge", "lower_bound"]);
    let sim: f64 = rows[1][1].parse().unwrap();
    let theory: f64 = rows[1][3].parse().unwrap();
    assert!((sim - theory).abs() <= 0.05 * theory, "{sim} vs {theory}");
}

#[test]
fn sweep_flags_unstable_rows() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{
            "workers": [{"id": 0, "mu": 10.0}, {"id": 1, "mu": 0.5}],
            "arrival": {"kind": "poisson", "rate": 0.15},
            "code": {"k": 10, "complexity": 1},
            "sim": {"iterations": 1, "jobs": 300, "omega_grid": [1.0, 2.0]},
            "seed": 1
        }"#,
    );
    let o = run(&["sweep-omega"], &cfg, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 3);
    // the lower bound does not depend on Omega
    assert_eq!(rows[1][4], rows[2][4]);
    let stable: Vec<&str> = rows[1..].iter().map(|r| r[6].as_str()).collect();
    let uniform_growing: Vec<&str> = rows[1..].iter().map(|r| r[8].as_str()).collect();
    assert_eq!(uniform_growing[0], "true", "{rows:?}");
    assert_eq!(stable[0], "true");
    assert_eq!(rows[1][7], "false");
}

#[test]
fn optimize_code_table_and_best_row() {
    let out = TempDir::new().unwrap();
    let o = run(&["optimize-code"], &shipped("code_search.json"), out.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.path().join("candidates.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "K,C,Omega,theta,active_workers,mismatch");
    let rows = read_csv(&out.path().join("candidates.csv"));
    assert_eq!(rows.len(), 52);
    let (mut best_k, mut best) = (String::new(), f64::INFINITY);
    for r in &rows[1..] {
        let m: f64 = r[5].parse().unwrap();
        if m < best {
            best = m;
            best_k = r[0].clone();
        }
    }
    assert_eq!(summary_value(out.path(), "K"), best_k);
}

#[test]
fn optimize_code_single_and_empty() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        r#"{"workers": [{"id": 0, "mu": 1.0}, {"id": 1, "mu": 3.0}],
            "code": {"candidates": {"kind": "explicit", "candidates": [{"k": 20, "complexity": 2.5, "omega": 1.1}]}}}"#,
    );
    assert!(run(&["optimize-code"], &cfg, dir.path()).status.success());
    let rows = read_csv(&dir.path().join("candidates.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[1][..3], ["20", "2.5", "1.1"]);

    let cfg = write_config(
        &dir,
        r#"{"workers": [{"id": 0, "mu": 1.0}], "code": {"candidates": {"kind": "explicit", "candidates": []}}}"#,
    );
    assert_eq!(run(&["optimize-code"], &cfg, dir.path()).status.code(), Some(2));
}

#[test]
fn validate_code_variants() {
    let out = TempDir::new().unwrap();
    let o = run(&["validate-code"], &shipped("three_task_code.json"), out.path());
    assert!(o.status.success());
    assert_eq!(summary_value(out.path(), "valid"), "true");

    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("b.csv"), "1,0\n0,1\n").unwrap();
    let cfg = write_config(&dir, r#"{"code": {"k": 1, "matrix_file": "b.csv"}}"#);
    let o = run(&["validate-code"], &cfg, dir.path());
    assert!(o.status.success());
    assert_eq!(summary_value(dir.path(), "valid"), "false");
    assert_eq!(summary_value(dir.path(), "failing_subset"), "[0]");

    let cfg = write_config(&dir, r#"{"code": {"k": 5, "omega": 1.2, "chunks": 6, "chunks_per_task": 2}}"#);
    let o = run(&["validate-code"], &cfg, dir.path());
    assert!(o.status.success());
    assert_eq!(summary_value(dir.path(), "valid"), "true");
    assert_eq!(read_csv(&dir.path().join("matrix.csv")).len(), 6);
}
