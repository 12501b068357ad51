use std::path::Path;
use std::process::{Command, Output};

use kernel_iv::bench::{read_csv_file, CSV_HEADER};

fn kiv_bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kiv-bench")).args(args).output().unwrap()
}

fn sweep_into(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["sweep", "--design", "linear", "--n-total", "60", "--reps", "2", "--out", out];
    args.extend_from_slice(extra);
    kiv_bench(&args)
}

#[test]
fn sweep_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = sweep_into(dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["results.csv", "results.json", "summary.csv", "series.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let text = std::fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
    let records = read_csv_file(&dir.path().join("results.csv")).unwrap();
    assert_eq!(records.len(), 4 * 2);
    assert!(records.iter().all(|r| r.rho.is_none() && r.mse.is_some()));

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(json["sweeps"][0]["replications"], 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("twosls"));
}

#[test]
fn repeated_sweeps_agree_except_wall_time() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(sweep_into(a.path(), &["--estimators", "kiv,sieve"]).status.success());
    assert!(sweep_into(b.path(), &["--estimators", "kiv,sieve", "--jobs", "1"]).status.success());
    let strip = |p: &Path| {
        let mut records = read_csv_file(&p.join("results.csv")).unwrap();
        records.iter_mut().for_each(|r| r.wall_ms = 0);
        records
    };
    assert_eq!(strip(a.path()), strip(b.path()));
}

#[test]
fn demand_records_carry_rho() {
    let dir = tempfile::tempdir().unwrap();
    let out = kiv_bench(&[
        "sweep", "--design", "demand", "--estimators", "twosls", "--rho", "0.9,0.1", "--n-total", "80", "--reps",
        "1", "--out", dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let rhos: Vec<_> = read_csv_file(&dir.path().join("results.csv")).unwrap().iter().map(|r| r.rho).collect();
    assert_eq!(rhos, [Some(0.1), Some(0.9)]);
}

#[test]
fn failed_runs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = sweep_into(dir.path(), &["--estimators", "kiv", "--lengthscale", "1e-200"]);
    assert_eq!(out.status.code(), Some(2));
    let records = read_csv_file(&dir.path().join("results.csv")).unwrap();
    assert!(records.iter().all(|r| r.is_error()));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(sweep_into(dir.path(), &["--estimators", "nope"]).status.code(), Some(1));
    assert_eq!(sweep_into(dir.path(), &["--split-ratio", "1.5"]).status.code(), Some(1));
    let missing = dir.path().join("absent.csv");
    assert_eq!(kiv_bench(&["summarize", "--input", missing.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn summarize_rebuilds_summaries() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sweep_into(dir.path(), &[]).status.success());
    let summary = dir.path().join("summary.csv");
    let before = std::fs::read_to_string(&summary).unwrap();
    std::fs::remove_file(&summary).unwrap();
    let out = kiv_bench(&["summarize", "--input", dir.path().join("results.csv").to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&summary).unwrap(), before);
}

#[test]
fn robustness_labels_each_override() {
    let dir = tempfile::tempdir().unwrap();
    let out = kiv_bench(&[
        "robustness", "--lengthscale", "0.2,1.0", "--n-total", "60", "--reps", "1", "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let labels: Vec<_> =
        read_csv_file(&dir.path().join("results.csv")).unwrap().into_iter().map(|r| r.estimator).collect();
    assert_eq!(labels, ["kiv", "kiv_ls0.2", "kiv_ls1.0"]);
}
