use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn mpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpp")).args(args).output().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

/// The stderr diagnostic must be a single JSON line.
fn diagnostic(out: &Output) -> Value {
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    serde_json::from_str(err.trim_end()).unwrap()
}

fn bundled() -> String {
    format!("{}/data/weekly_12.csv", env!("CARGO_MANIFEST_DIR"))
}

const THREE_POINT: &str = "date,A\n2024-01-05,0.01\n2024-01-12,0.02\n2024-01-19,0.03\n";

#[test]
fn estimate_three_point_file() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "r.csv", THREE_POINT);
    let out = mpp(&[
        "estimate", "--input", s(&input), "--kind", "returns", "--prior", "diffuse", "--gamma", "1", "--wealth", "1",
        "--t", "0", "--horizon", "1", "--rf", "0.0",
    ]);
    let v = stdout_json(&out);
    let w = v["weights"][0].as_f64().unwrap();
    assert!((w - 200.0).abs() < 1e-9, "{w}");
    assert_eq!(v["meta"]["n"], 3);
    assert_eq!(v["meta"]["k"], 1);
    assert_eq!(v["meta"]["B"], 100_000);
    assert_eq!(v["meta"]["seed"], 42);
    assert_eq!(v["meta"]["prior"], "diffuse");
    assert_eq!(v["meta"]["t"], 0);
    assert_eq!(v["meta"]["T"], 1);
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = mpp(&["estimate", "--input", "x.csv", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(diagnostic(&out)["error"], "UsageError");
    assert_eq!(mpp(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn n_not_above_k_is_numerical_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "r.csv", "date,A,B\n2024-01-05,0.01,0.02\n2024-01-12,0.03,0.01\n");
    let out = mpp(&["estimate", "--input", s(&input), "--prior", "diffuse"]);
    assert_eq!(out.status.code(), Some(4));
    let d = diagnostic(&out);
    assert_eq!(d["error"], "DegenerateSample");
    assert_eq!(d["exit_code"], 4);
}

#[test]
fn data_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let dup = write(&dir, "dup.csv", "date,A\n2024-01-05,0.01\n2024-01-05,0.02\n");
    let out = mpp(&["estimate", "--input", s(&dup)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(diagnostic(&out)["error"], "NonMonotoneDates");

    let missing = mpp(&["estimate", "--input", s(&dir.path().join("nope.csv"))]);
    assert_eq!(missing.status.code(), Some(3));

    let input = write(&dir, "r.csv", THREE_POINT);
    let rf = write(&dir, "rf.csv", "date,rf\n2024-01-05,0.001\n2024-01-13,0.001\n2024-01-19,0.001\n");
    let out = mpp(&["estimate", "--input", s(&input), "--rf-file", s(&rf)]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(diagnostic(&out)["error"], "RfMismatch");
}

#[test]
fn rf_file_uses_last_rate() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "r.csv", THREE_POINT);
    let rf = write(&dir, "rf.csv", "date,rf\n2024-01-05,0.005\n2024-01-12,0.005\n2024-01-19,0.01\n");
    let v = stdout_json(&mpp(&["estimate", "--input", s(&input), "--rf-file", s(&rf)]));
    assert_eq!(v["rf"], 0.01);
    // 2·(0.02 − 0.01)/0.0002
    assert!((v["weights"][0].as_f64().unwrap() - 100.0).abs() < 1e-9);
}

#[test]
fn flags_override_config() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "r.csv", THREE_POINT);
    let cfg = write(&dir, "c.json", r#"{"gamma": 2.0, "seed": 7, "draws": 500}"#);
    let v = stdout_json(&mpp(&["estimate", "--input", s(&input), "--config", s(&cfg), "--seed", "9"]));
    assert!((v["weights"][0].as_f64().unwrap() - 100.0).abs() < 1e-9);
    assert_eq!(v["meta"]["seed"], 9);
    assert_eq!(v["meta"]["B"], 500);

    let bad = write(&dir, "bad.json", r#"{"gama": 2.0}"#);
    assert_eq!(mpp(&["estimate", "--input", s(&input), "--config", s(&bad)]).status.code(), Some(2));
}

#[test]
fn conjugate_without_hyperparameters_is_usage_error() {
    let out = mpp(&["estimate", "--input", &bundled(), "--prior", "conjugate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_prior_output_feeds_conjugate_estimate() {
    let dir = TempDir::new().unwrap();
    let fit = stdout_json(&mpp(&["fit-prior", "--input", &bundled(), "--presample-n", "100", "--r0", "5"]));
    assert_eq!(fit["prior"]["kind"], "conjugate");
    assert_eq!(fit["prior"]["d0"], 100.0);
    let cfg = write(&dir, "c.json", &serde_json::json!({"prior": fit["prior"]}).to_string());
    let v = stdout_json(&mpp(&["estimate", "--input", &bundled(), "--config", s(&cfg), "--window", "52"]));
    assert_eq!(v["meta"]["prior"], "conjugate");
    assert_eq!(v["posterior"]["precision"], 57.0);
}

#[test]
fn sample_weights_csv_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let args = |out: &str| {
        vec![
            "sample-weights".to_owned(),
            "--input".into(),
            bundled(),
            "--window".into(),
            "104".into(),
            "--draws".into(),
            "2000".into(),
            "--csv".into(),
            out.to_owned(),
        ]
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let ja = mpp(&args(s(&a)).iter().map(String::as_str).collect::<Vec<_>>());
    let _ = stdout_json(&ja);
    mpp(&args(s(&b)).iter().map(String::as_str).collect::<Vec<_>>());
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    assert_eq!(ta.lines().count(), 2001);
    assert!(ta.starts_with("A01,A02"));
}

#[test]
fn predict_wealth_zero_holdings_is_riskless() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "r.csv", THREE_POINT);
    let v = stdout_json(&mpp(&[
        "predict-wealth", "--input", s(&input), "--holdings", "0", "--rf", "0.01", "--wealth", "100", "--draws", "200",
    ]));
    assert!((v["band"]["lower"].as_f64().unwrap() - 101.0).abs() < 1e-9);
    assert!((v["band"]["upper"].as_f64().unwrap() - 101.0).abs() < 1e-9);
    assert_eq!(v["default_probability"], 0.0);

    let out = mpp(&["predict-wealth", "--input", s(&input), "--holdings", "1,2"]);
    assert_eq!(out.status.code(), Some(3));
    let out = mpp(&["predict-wealth", "--input", s(&input), "--level", "1.5", "--draws", "200"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn backtest_writes_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("periods.csv");
    let out = mpp(&[
        "backtest", "--input", &bundled(), "--window", "52", "--horizon", "8", "--draws", "1000", "--gamma", "50",
        "--rf", "0.0004", "--csv", s(&csv),
    ]);
    let v = stdout_json(&out);
    assert_eq!(v["meta"]["T"], 8);
    assert_eq!(v["report"]["periods"].as_array().unwrap().len(), 8);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 9);
    assert!(text.starts_with("prior,t,date"));

    let out = mpp(&["backtest", "--input", &bundled(), "--window", "52"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn backtest_compare_empirical_bayes() {
    let v = stdout_json(&mpp(&[
        "backtest", "--input", &bundled(), "--window", "52", "--horizon", "4", "--draws", "500", "--gamma", "50",
        "--prior", "empirical-bayes", "--compare",
    ]));
    assert_eq!(v["meta"]["prior"], "empirical_bayes");
    assert_eq!(v["diffuse"]["periods"].as_array().unwrap().len(), 4);
    assert_eq!(v["conjugate"]["periods"].as_array().unwrap().len(), 4);
}

#[test]
fn check_normality_reports_each_asset() {
    let v = stdout_json(&mpp(&["check-normality", "--input", &bundled(), "--draws", "5000", "--gamma", "50"]));
    let c = v["coordinates"].as_array().unwrap();
    assert_eq!(c.len(), 12);
    assert!(c.iter().all(|x| x["p_value"].as_f64().unwrap() >= 0.0));
    assert_eq!(v["meta"]["n"], 300);
}

#[test]
fn output_flag_writes_file() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "r.csv", THREE_POINT);
    let target = dir.path().join("o.json");
    let out = mpp(&["estimate", "--input", s(&input), "--output", s(&target)]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&target).unwrap()).unwrap();
    assert!((v["weights"][0].as_f64().unwrap() - 200.0).abs() < 1e-9);
}
