// Copyright (c) 2026 fedprice contributors
// SPDX-License-Identifier: Apache-2.0

//! End-to-end CLI checks: exit codes, output determinism, and a round trip
//! from emitted tables back into the payoff arithmetic.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedprice"))
}

fn replication_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/replication.toml")
}

fn read_dir_sorted(dir: &Path) -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    paths
}

#[test]
fn solve_vertical_writes_tables() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["solve", "vertical", "--scenario"])
        .arg(replication_path())
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert!(status.success());
    let names: Vec<String> = read_dir_sorted(out.path())
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(
        names,
        vec![
            "contract.csv",
            "contract.txt",
            "schedule.csv",
            "schedule.txt",
            "summary.csv",
            "summary.txt"
        ]
    );
}

#[test]
fn identical_inputs_produce_identical_bytes() {
    let out_a = tempfile::tempdir().unwrap();
    let out_b = tempfile::tempdir().unwrap();
    for out in [out_a.path(), out_b.path()] {
        let status = bin()
            .args(["solve", "vertical", "--scenario"])
            .arg(replication_path())
            .arg("--out")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for (a, b) in read_dir_sorted(out_a.path()).iter().zip(read_dir_sorted(out_b.path()).iter()) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(
            std::fs::read(a).unwrap(),
            std::fs::read(b).unwrap(),
            "{:?} differs between runs",
            a.file_name()
        );
    }
}

#[test]
fn emitted_tables_round_trip_payoffs() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["solve", "vertical", "--scenario"])
        .arg(replication_path())
        .arg("--out")
        .arg(out.path())
        .args(["--format", "csv"])
        .status()
        .unwrap();
    assert!(status.success());

    let summary = std::fs::read_to_string(out.path().join("summary.csv")).unwrap();
    let common_cost: f64 = summary
        .lines()
        .find(|l| l.starts_with("common_cost"))
        .and_then(|l| l.split(',').nth(1))
        .unwrap()
        .parse()
        .unwrap();

    let contract = std::fs::read_to_string(out.path().join("contract.csv")).unwrap();
    let mut checked = 0;
    for line in contract.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let theta: f64 = fields[1].parse().unwrap();
        let data: f64 = fields[3].parse().unwrap();
        let reward: f64 = fields[4].parse().unwrap();
        let payoff: f64 = fields[5].parse().unwrap();
        if data > 0.0 {
            // Recompute the payoff from the parsed item and common cost.
            let recomputed = reward - theta * data - common_cost;
            let scale = reward.abs().max(common_cost.abs()).max(1.0);
            assert!(
                (recomputed - payoff).abs() <= 1e-8 * scale,
                "payoff mismatch: {recomputed} vs {payoff}"
            );
            checked += 1;
        }
    }
    assert!(checked >= 3);
}

#[test]
fn invalid_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        r#"
num_slots = 1
background_usage = [1.0]
price_cap = 10.0
congestion_coeff = 0.1
operator_cost_coeff = 0.1
reward_weight = 0.01
max_data = 2.0
user_types = [{ theta = 3.0, count = 1 }, { theta = 3.0, count = 1 }]
"#,
    )
    .unwrap();
    let output = bin()
        .args(["solve", "vertical", "--scenario"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("user_types.theta not strictly increasing"));
}

#[test]
fn compare_solves_all_mechanisms() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["compare", "--scenario"])
        .arg(replication_path())
        .arg("--out")
        .arg(out.path())
        .args(["--format", "csv"])
        .status()
        .unwrap();
    assert!(status.success());
    let table = std::fs::read_to_string(out.path().join("comparison.csv")).unwrap();
    assert!(table.lines().count() >= 4);
    for mech in ["IJD", "NJO", "NDP"] {
        assert!(table.contains(mech), "missing {mech} row");
    }
    // Infinite NJO server cost is the explicit sentinel, never NaN.
    assert!(table.contains("inf"));
    assert!(!table.to_lowercase().contains("nan"));
}

#[test]
fn horizontal_reports_nonexistence_on_bundle() {
    let out = tempfile::tempdir().unwrap();
    let output = bin()
        .args(["solve", "horizontal", "--scenario"])
        .arg(replication_path())
        .arg("--out")
        .arg(out.path())
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("does not exist"));
    assert!(out.path().join("cycle.txt").exists());
}

#[test]
fn tolerant_uses_uniform_chosen_prices() {
    let out = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["solve", "tolerant", "--scenario"])
        .arg(replication_path())
        .arg("--out")
        .arg(out.path())
        .args(["--format", "csv"])
        .status()
        .unwrap();
    assert!(status.success());
    let schedule = std::fs::read_to_string(out.path().join("schedule.csv")).unwrap();
    let mut chosen_prices = Vec::new();
    for line in schedule.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        let users: f64 = fields[2].parse().unwrap();
        if users > 0.0 {
            chosen_prices.push(fields[4].to_string());
        }
    }
    assert!(!chosen_prices.is_empty());
    assert!(chosen_prices.iter().all(|p| p == &chosen_prices[0]), "chosen prices not uniform");
}

#[test]
fn verify_passes_on_bundle() {
    let output = bin()
        .args(["verify", "--scenario"])
        .arg(replication_path())
        .args(["--trials", "5", "--seed", "3"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "verify failed:\n{stdout}");
    assert_eq!(stdout.matches("PASS").count(), 3);
}

#[test]
fn sweep_runs_directory() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios = dir.path().join("scenarios");
    std::fs::create_dir_all(&scenarios).unwrap();
    for name in ["a.toml", "b.toml"] {
        std::fs::write(
            scenarios.join(name),
            r#"
num_slots = 2
background_usage = [0.4, 0.9]
price_cap = 40.0
congestion_coeff = 0.05
operator_cost_coeff = 0.05
reward_weight = 0.004
max_data = 3.0
user_types = [{ theta = 0.5, count = 2 }, { theta = 1.1, count = 2 }]
"#,
        )
        .unwrap();
    }
    let out = dir.path().join("out");
    let status = bin()
        .args(["sweep", "--scenarios"])
        .arg(&scenarios)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("a").join("summary.txt").exists());
    assert!(out.join("b").join("summary.txt").exists());
}
