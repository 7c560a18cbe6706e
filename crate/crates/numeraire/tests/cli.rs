//! Black-box tests of the `numeraire` binary.

use std::path::Path;
use std::process::{Command, Output};

use numeraire::market::FiniteMarket;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_numeraire"))
}

fn write_json(path: &Path, value: &serde_json::Value) {
    std::fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn run_solves_tree_scenario() {
    let dir = tempfile::tempdir().unwrap();
    FiniteMarket::binomial(1.0, 1.2, 0.9, 0.6, 1)
        .unwrap()
        .save(dir.path().join("market.json"))
        .unwrap();
    let config = dir.path().join("cfg.json");
    write_json(
        &config,
        &serde_json::json!({"kind": "tree", "market_file": "market.json"}),
    );
    let out_dir = dir.path().join("out");
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--threads", "1", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr(&output));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let log_value = report["scalars"]["log_value"].as_f64().unwrap();
    assert!((log_value - 0.14834174943487517).abs() < 1e-9, "log_value {log_value}");
    assert!(report["scalars"]["duality_gap"].as_f64().unwrap() <= 1e-9);
    assert!(report["provenance"]["config_hash"].as_str().unwrap().len() == 64);
    assert!(out_dir.join("curves.csv").is_file());
    assert!(stdout(&output).contains("wrote"));
}

#[test]
fn run_reports_power_family_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    write_json(
        &config,
        &serde_json::json!({
            "kind": "lognormal",
            "lognormal": {"mode": "power", "a": 1.0, "p": 1.0, "b": 1.0, "q": 0.0},
            "series_terms": 300
        }),
    );
    let out_dir = dir.path().join("out");
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(stdout(&output).contains("verdict: NAA"), "stdout: {}", stdout(&output));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["verdict"], "NAA");
    assert!(report["basis"].as_str().unwrap().contains("Lemma 4(a)"));
    assert!(out_dir.join("series.csv").is_file());
}

#[test]
fn bad_grid_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    write_json(
        &config,
        &serde_json::json!({
            "kind": "lognormal",
            "lognormal": {"mode": "power", "a": 1.0, "p": 1.0, "b": 1.0, "q": 0.0},
            "grids": {"m_grid": []}
        }),
    );
    let output = bin().args(["run", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("m_grid"), "stderr: {}", stderr(&output));
}

#[test]
fn arbitrage_market_exits_with_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    FiniteMarket::binomial(1.0, 1.3, 1.1, 0.5, 1)
        .unwrap()
        .save(dir.path().join("market.json"))
        .unwrap();
    let config = dir.path().join("cfg.json");
    write_json(
        &config,
        &serde_json::json!({"kind": "tree", "market_file": "market.json"}),
    );
    let output = bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3), "stderr: {}", stderr(&output));
    assert!(stderr(&output).contains("arbitrage"), "stderr: {}", stderr(&output));
}

#[test]
fn reruns_reproduce_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    write_json(
        &config,
        &serde_json::json!({
            "kind": "tree-sequence",
            "binomial_family": {"u": 1.25, "d": 0.85, "p": 0.55},
            "n_list": [1, 2, 3]
        }),
    );
    for side in ["a", "b"] {
        let output = bin()
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(side))
            .output()
            .unwrap();
        assert!(output.status.success(), "stderr: {}", stderr(&output));
    }
    let stripped = |side: &str| -> String {
        std::fs::read_to_string(dir.path().join(side).join("report.json"))
            .unwrap()
            .lines()
            .filter(|line| !line.contains("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(stripped("a"), stripped("b"));
}

#[test]
fn validate_accepts_and_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("cfg.json");
    write_json(
        &config,
        &serde_json::json!({
            "kind": "lognormal",
            "lognormal": {"mode": "numeric", "mu": [0.1], "sigma": [0.2]}
        }),
    );
    let output = bin().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    assert!(stdout(&output).starts_with("ok:"));

    std::fs::write(&config, b"{ not json").unwrap();
    let output = bin().args(["validate", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = bin()
        .args(["validate", "--config"])
        .arg(dir.path().join("missing.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("missing.json"));
}
