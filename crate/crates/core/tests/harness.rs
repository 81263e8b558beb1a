mod common;

use std::process::Command;

use ppod::dp::Epsilon;
use ppod::harness::{run_sweep, SweepConfig, REPORT_HEADER};

use common::iris_path;

fn ppod() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ppod"))
}

#[test]
fn very_small_budget_is_near_chance() {
    let config = SweepConfig::new(iris_path(), vec![Epsilon::new(0.01).unwrap()], 30);
    let report = run_sweep(&config).unwrap();
    let mean = report.mean_accuracy()[0].1;
    assert!((0.2..=0.6).contains(&mean), "mean accuracy {mean}");
}

#[test]
fn rows_sorted_by_epsilon_then_trial() {
    let eps = vec![Epsilon::INFINITY, Epsilon::new(2.0).unwrap(), Epsilon::new(0.5).unwrap()];
    let mut config = SweepConfig::new(iris_path(), eps, 3);
    let parallel = run_sweep(&config).unwrap();
    let order: Vec<(String, usize)> = parallel.rows.iter().map(|r| (r.epsilon.to_string(), r.trial)).collect();
    assert_eq!(order[0], ("0.5".to_string(), 0));
    assert_eq!(order[3], ("2".to_string(), 0));
    assert_eq!(order[8], ("inf".to_string(), 2));
    config.parallel = false;
    let serial = run_sweep(&config).unwrap();
    assert_eq!(parallel.rows, serial.rows);
}

#[test]
fn noiseless_trials_share_splits_across_epsilon() {
    let config = SweepConfig::new(iris_path(), vec![Epsilon::INFINITY, Epsilon::INFINITY], 2);
    let report = run_sweep(&config).unwrap();
    assert_eq!(report.rows[0].accuracy, report.rows[2].accuracy);
    assert_eq!(report.rows[1].accuracy, report.rows[3].accuracy);
    assert_ne!(report.rows[0].seed, report.rows[2].seed);
}

#[test]
fn cli_writes_report_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let log = dir.path().join("l.jsonl");
    let status = ppod()
        .args(["--epsilon", "1,inf", "--trials", "2", "--dataset"])
        .arg(iris_path())
        .arg("--out")
        .arg(&out)
        .arg("--log")
        .arg(&log)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], REPORT_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(lines[3].starts_with("inf,0,"));
    let log_text = std::fs::read_to_string(&log).unwrap();
    let headers = log_text.lines().filter(|l| l.starts_with("{\"epsilon\"")).count();
    assert_eq!(headers, 4);
    for line in log_text.lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn cli_exit_codes() {
    assert_eq!(ppod().status().unwrap().code(), Some(2));
    let bad_eps = ppod().args(["--dataset", "x.csv", "--epsilon", "-1"]).output().unwrap();
    assert_eq!(bad_eps.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_eps.stderr).contains("epsilon"));
    let bad_split = ppod().args(["--dataset", "x.csv", "--split", "0"]).output().unwrap();
    assert_eq!(bad_split.status.code(), Some(2));
    let missing = ppod().args(["--dataset", "/definitely/not/here.csv"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(ppod().arg("--help").status().unwrap().code(), Some(0));
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let out = ppod()
        .args(["--trials", "1", "--epsilon", "inf", "--out", "/nonexistent-dir/r.csv", "--dataset"])
        .arg(iris_path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_dataset_row_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b,label\n1,2,x\n3,oops,y\n").unwrap();
    let out = ppod().arg("--dataset").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("oops"), "{err}");
}

#[test]
fn single_noiseless_row_matches_direct_oracle() {
    let config = SweepConfig::new(iris_path(), vec![Epsilon::INFINITY], 1);
    let report = run_sweep(&config).unwrap();
    assert_eq!(report.rows.len(), 1);
    let (_, data) = common::iris_trial(3, 0.7, 42, 0);
    let (schema, _) = common::iris_owners(3);
    let predicted: Vec<String> = common::direct_oracle(&schema, &data.train, &data.queries)
        .into_iter()
        .map(|(l, _)| l)
        .collect();
    let expected = ppod::classifier::accuracy(&predicted, &data.truth).unwrap();
    assert_eq!(report.rows[0].accuracy, expected);
}

#[test]
fn repeated_sweeps_are_identical_and_complete() {
    let eps = vec![Epsilon::new(0.5).unwrap(), Epsilon::INFINITY];
    let mut config = SweepConfig::new(iris_path(), eps, 3);
    config.base_seed = 7;
    let a = run_sweep(&config).unwrap();
    let b = run_sweep(&config).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows.len() + a.aborted.len(), 6);
    assert!(a.rows.iter().all(|r| (0.0..=1.0).contains(&r.accuracy)));
    assert_eq!(
        ppod::harness::format_report(&a),
        ppod::harness::format_report(&b)
    );
}

#[test]
fn parse_cli_example() {
    let c = ppod::harness::parse_cli(
        "ppod --dataset iris.csv --epsilon 0.1,1,inf --trials 30 --fog-nodes 2 --seed 7 --out r.csv"
            .split(' '),
    )
    .unwrap();
    assert_eq!(c.epsilons.len(), 3);
    assert_eq!(c.base_seed, 7);
    assert_eq!(c.fog_nodes, 2);
    assert!(ppod::harness::parse_cli(["ppod", "--dataset", "x", "--bogus"]).is_err());
}
