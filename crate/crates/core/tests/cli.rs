use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn tierbound(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tierbound")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = tierbound(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn simulated(dir: &TempDir, n: usize) -> PathBuf {
    let p = path(dir, "data.csv");
    ok(&["simulate", "--n", &n.to_string(), "--seed", "7", "-o", s(&p)]);
    p
}

#[test]
fn simulate_writes_the_fixed_header() {
    let dir = tempfile::tempdir().unwrap();
    let p = simulated(&dir, 5000);
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("w1,w2,x,a,y"));
    assert_eq!(lines.count(), 5000);
}

#[test]
fn with_oracle_appends_potential_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let p = path(&dir, "o.csv");
    ok(&["simulate", "--n", "20", "--with-oracle", "-o", s(&p)]);
    let text = std::fs::read_to_string(p).unwrap();
    assert_eq!(text.lines().next(), Some("w1,w2,x,a,y,y0,y1"));
    assert!(text.lines().all(|l| l.split(',').count() == 7));
}

#[test]
fn zero_units_is_a_usage_error() {
    let out = tierbound(&["simulate", "--n", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn s1s_estimate_round_trips_simulated_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(&dir, 5000);
    let out = path(&dir, "e.json");
    ok(&[
        "estimate", "-i", s(&data), "--estimator", "s1s", "--l", "2000", "--thresholds", "-1.42,1.09", "--H", "5000",
        "-o", s(&out),
    ]);
    let v = json(&out);
    assert_eq!(v["version"], tierbound::VERSION);
    assert_eq!(v["config"]["l"], 2000);
    assert_eq!(v["config"]["thresholds"], serde_json::json!([-1.42, 1.09]));
    let results = v["results"].as_array().unwrap();
    assert_eq!(results[0]["estimator"], "plug-in");
    let s1s = results.iter().find(|r| r["estimator"] == "S1S").unwrap();
    let est = s1s["estimates"].as_array().unwrap();
    let reg = s1s["regions"].as_array().unwrap();
    assert_eq!((est.len(), reg.len()), (2, 2));
    for (e, r) in est.iter().zip(reg) {
        let (lo, up) = (e["lower"].as_f64().unwrap(), e["upper"].as_f64().unwrap());
        assert!(lo < up);
        assert!(e["cov"].is_array());
        assert!(r["lo"].as_f64().unwrap() <= lo && r["hi"].as_f64().unwrap() >= up);
    }
    assert!(v["s1s"].is_object());
}

#[test]
fn one_step_demands_a_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(&dir, 300);
    let out = tierbound(&["estimate", "-i", s(&data), "--estimator", "1s"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--split"));
}

#[test]
fn s1s_without_l_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(&dir, 300);
    let out = tierbound(&["estimate", "-i", s(&data), "--estimator", "s1s"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn harm_and_monotone_sections() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulated(&dir, 1000);
    let out = path(&dir, "e.json");
    ok(&["estimate", "-i", s(&data), "--harm", "--monotone", "--H", "2000", "-o", s(&out)]);
    let v = json(&out);
    assert!(v["harm"].is_object() || v["harm"].is_array(), "{v}");
    assert!(!v["monotone"].is_null());
}

#[test]
fn constant_outcome_is_flagged_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let p = path(&dir, "flat.csv");
    let mut text = String::from("w1,w2,x,a,y\n");
    for i in 0..400 {
        let w1 = (i as f64 * 0.37).sin();
        text.push_str(&format!("{w1},{},{},{},0.5\n", i % 2, (i / 2) % 2, (i / 4 + i) % 2));
    }
    std::fs::write(&p, text).unwrap();
    let out = path(&dir, "e.json");
    ok(&["estimate", "-i", s(&p), "--estimator", "1s", "--split", "0.5", "--H", "2000", "-o", s(&out)]);
    let v = json(&out);
    for r in v["results"].as_array().unwrap() {
        for e in r["estimates"].as_array().unwrap() {
            assert_eq!(e["flags"]["degenerate_sigma"], true, "{e}");
            assert!(e["lower"].is_number() && e["upper"].is_number());
        }
    }
}

#[test]
fn data_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let missing = path(&dir, "m.csv");
    std::fs::write(&missing, "w1,x,a\n0.1,0,1\n").unwrap();
    let out = tierbound(&["estimate", "-i", s(&missing)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`y`"));

    let bad_a = path(&dir, "a.csv");
    std::fs::write(&bad_a, "w1,w2,x,a,y\n0.1,0,0,2,0.3\n").unwrap();
    assert_eq!(tierbound(&["estimate", "-i", s(&bad_a)]).status.code(), Some(3));
}

#[test]
fn extra_w_columns_are_ingested() {
    let dir = tempfile::tempdir().unwrap();
    let p = path(&dir, "wide.csv");
    let mut text = String::from("w1,w2,w3,x,a,y\n");
    for i in 0..600 {
        let t = i as f64;
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            (t * 0.37).sin(),
            i % 2,
            (t * 0.11).cos(),
            (i / 3) % 2,
            u8::from((t * 1.3).sin() > 0.0),
            (t * 0.7).sin() * 2.0
        ));
    }
    std::fs::write(&p, text).unwrap();
    let out = path(&dir, "e.json");
    ok(&["estimate", "-i", s(&p), "--basis-propensity", "1,w1,w3,x", "--H", "1000", "-o", s(&out)]);
    assert_eq!(json(&out)["nuisance"]["propensity"]["basis"], serde_json::json!(["1", "w1", "w3", "x"]));
}

#[test]
fn benchmark_rejects_unknown_estimators() {
    let out = tierbound(&["benchmark", "--estimators", "bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn benchmark_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let csv = path(&dir, "b.csv");
    let summary = path(&dir, "b.json");
    ok(&[
        "benchmark", "--estimators", "plug-in,1s,s1s", "--n", "400", "--l", "150", "--reps", "3", "-o", s(&csv),
        "--summary", s(&summary),
    ]);
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some(tierbound::inference::benchmark::CSV_HEADER));
    assert_eq!(text.lines().count(), 1 + 3 * 2);
    let v = json(&summary);
    assert_eq!(v["version"], tierbound::VERSION);
    assert_eq!(v["config"]["reps"], 3);
}

#[test]
fn witness_defaults_to_the_three_tier_example() {
    let out = ok(&["witness"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["K"], 3);
    let (a, b) = (v["pb_a"].as_f64().unwrap(), v["pb_b"].as_f64().unwrap());
    assert!((a - 0.3).abs() < 1e-9 && (b - 0.6).abs() < 1e-9);
    assert_eq!(tierbound(&["witness", "--k", "2", "--margins0", "0.5,0.5", "--margins1", "0.2,0.8"]).status.code(), Some(3));
}

#[test]
fn oracle_single_stratum() {
    let out = ok(&["oracle", "--stratum", "1", "--mc", "20000"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let r = &v["results"][0];
    assert_eq!(r["stratum"], 1);
    assert!((r["quadrature"]["pb"].as_f64().unwrap() - 0.3678).abs() < 1e-3);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(&dir, "run.json");
    std::fs::write(&cfg, r#"{"n": 50, "seed": 3}"#).unwrap();
    let a = path(&dir, "a.csv");
    ok(&["--config", s(&cfg), "simulate", "--n", "80", "-o", s(&a)]);
    assert_eq!(std::fs::read_to_string(&a).unwrap().lines().count(), 81);

    let b = path(&dir, "b.csv");
    let c = path(&dir, "c.csv");
    ok(&["--config", s(&cfg), "simulate", "-o", s(&b)]);
    ok(&["simulate", "--n", "50", "--seed", "3", "-o", s(&c)]);
    assert_eq!(std::fs::read(b).unwrap(), std::fs::read(c).unwrap());

    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(tierbound(&["--config", s(&cfg), "simulate"]).status.code(), Some(2));
}
