use fbctl::output::read_policy;
use std::path::Path;
use std::process::{Command, Output};

fn fbctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbctl")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_key_is_a_config_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"snr\": 13\n}");
    let out = fbctl(&["allocate-rates", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config.json:2:"), "{err}");
}

#[test]
fn infeasible_budget_and_bad_thread_count_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let cfg = write_config(dir.path(), r#"{"b_bar": 1e9}"#);
    assert_eq!(fbctl(&["allocate-rates", "--config", &cfg, "--out", d]).status.code(), Some(2));
    assert_eq!(fbctl(&["allocate-rates", "--out", d, "--threads", "0"]).status.code(), Some(2));
    assert_eq!(fbctl(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn solved_policy_round_trips_and_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), r#"{"kernel": {"samples": 50000}, "b_bar": 8}"#);
    let o = fbctl(&["solve-policy", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (prov, policy) = read_policy(&out.join("policy.csv")).unwrap();
    assert_eq!(prov.seed, 4);
    assert_eq!(prov.config_hash.len(), 64);
    assert_eq!((policy.rows(), policy.cols()), (16, 16));
    assert!(policy.avg_rate > 0.0 && policy.avg_rate <= 4.0 + 1e-9);
    assert!(policy.lambda > 0.0);
    let report = std::fs::read_to_string(out.join("policy_structure.txt")).unwrap();
    assert!(report.starts_with("# fbctl config_hash="));
    assert!(report.contains("violations: 0"));
}

#[test]
fn zero_budget_gives_the_all_zero_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"kernel": {"samples": 20000}, "b_bar": 0}"#);
    let o = fbctl(&["solve-policy", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (_, policy) = read_policy(&dir.path().join("policy.csv")).unwrap();
    assert!(policy.table.iter().flatten().all(|&b| b == 0));
    assert_eq!(policy.avg_rate, 0.0);
}

#[test]
fn allocation_output_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"b_bar": 20, "network": {"interferer_distances": [1, 3]}}"#);
    let o = fbctl(&["allocate-rates", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("rates.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(2).map(|l| l.split(',').collect()).collect();
    let rate = |r: &Vec<&str>| r[6].parse::<f64>().unwrap();
    // b1 + b2 = 20 and b1 - b2 = 3·3·log2 3.
    let gap = 9.0 * 3f64.log2();
    assert!((rate(&rows[0]) - (20.0 + gap) / 2.0).abs() < 1e-9);
    assert!((rate(&rows[1]) - (20.0 - gap) / 2.0).abs() < 1e-9);
}
