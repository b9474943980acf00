use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn chainamp(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_chainamp"))
        .args(args)
        .env("CHAINAMP_THREADS", "2")
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn json_ok(args: &[&str]) -> Value {
    let (code, stdout, stderr) = chainamp(args);
    assert_eq!(code, 0, "{stderr}");
    serde_json::from_str(&stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn curve_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let v = json_ok(&["curve", "--eps", "0.05", "--r-min", "1", "--r-max", "6", "--out", path_str(&out)]);
    assert_eq!(v["rows"], 6);
    let got = std::fs::read_to_string(&out).unwrap();
    let golden = include_str!("data/curve_eps005_r1_6.csv");
    assert_eq!(got, golden);
}

#[test]
fn curve_first_row_by_hand() {
    // r = 1: four settings strings; the top three sum to 1 - p-^2 and p_min = p-^2
    let (_, stdout, _) = chainamp(&["curve", "--eps", "0.05", "--r-min", "1", "--r-max", "1"]);
    let row: Vec<f64> = stdout.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    let pm2 = 0.45f64 * 0.45;
    assert!((row[1] - (1.0 - pm2).log2()).abs() < 1e-13);
    assert!((row[2] - pm2.log2()).abs() < 1e-13);
    let beta = (std::f64::consts::PI / 8.0).sin().powi(2);
    assert!((row[3] - beta / pm2).abs() < 1e-13);
    assert!((row[5] - beta / pm2 / 2.0).abs() < 1e-13);
}

#[test]
fn box_round_trips_through_bell() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("box.json");
    json_ok(&["box", "--kind", "quantum", "--N", "8", "--out", path_str(&file)]);
    let v = json_ok(&["bell", "--in", path_str(&file)]);
    let expected = 16.0 * (std::f64::consts::PI / 32.0).sin().powi(2);
    assert!((v["bell_value"].as_f64().unwrap() - expected).abs() < 1e-12);

    let det = dir.path().join("det.json");
    json_ok(&["box", "--kind", "deterministic", "--N", "3", "--alice", "0,1,1", "--bob", "0,1,1", "--out", path_str(&det)]);
    let v = json_ok(&["bell", "--in", path_str(&det)]);
    assert!(v["bell_value"].as_f64().unwrap() >= 1.0);
}

#[test]
fn decomposition_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let dist = dir.path().join("dist.json");
    // mixture of two extremal 2-bit laws at eps = 0.2
    std::fs::write(&dist, r#"{"n": 2, "probs": [0.35, 0.15, 0.2, 0.3]}"#).unwrap();
    let v = json_ok(&["verify", "--in", path_str(&dist), "--eps", "0.2"]);
    assert_eq!(v["pass"], true);
    assert_eq!(v["input"], "distribution");

    let dec = dir.path().join("dec.json");
    json_ok(&["decompose", "--in", path_str(&dist), "--eps", "0.2", "--out", path_str(&dec)]);
    let v = json_ok(&["verify", "--in", path_str(&dec)]);
    assert_eq!(v["input"], "decomposition");
    assert_eq!(v["pass"], true);
    assert_eq!(v["terms_valid"], true);
    assert!((v["total_weight"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn verify_reports_violation() {
    let dir = tempfile::tempdir().unwrap();
    let dist = dir.path().join("dist.json");
    std::fs::write(&dist, r#"{"n": 1, "probs": [0.9, 0.1]}"#).unwrap();
    let v = json_ok(&["verify", "--in", path_str(&dist), "--eps", "0.1"]);
    assert_eq!(v["pass"], false);
    assert_eq!(v["worst_prefix"], "");
}

#[test]
fn simulate_with_strategy_file() {
    let dir = tempfile::tempdir().unwrap();
    let strat = dir.path().join("s.json");
    std::fs::write(
        &strat,
        r#"{"sv": {"kind": "fixed", "signs": "+++++++++++++++"},
            "boxes": [{"weight": 0.8, "kind": "chain_pr"},
                      {"weight": 0.2, "kind": "deterministic", "alice": [0,0,0,0], "bob": [0,0,0,0]}]}"#,
    )
    .unwrap();
    let args = ["simulate", "--r", "2", "--eps", "0.1", "--trials", "20000", "--seed", "7", "--strategy", path_str(&strat), "--json"];
    let a = json_ok(&args);
    let b = json_ok(&args);
    assert_eq!(a, b);
    assert_eq!(a["estimator"], "post_selected_mean");
    let (code, text, _) = chainamp(&args[..args.len() - 1]);
    assert_eq!(code, 0);
    assert!(text.contains("Alice bias"));
}

#[test]
fn errors_are_json_with_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let cases: [(&[&str], i32, &str); 5] = [
        (&["nope"], 2, "unknown_command"),
        (&["kyfan", "--r", "x", "--eps", "0.1"], 3, "malformed_flag"),
        (&["protocol", "--r", "0", "--eps", "0.1"], 4, "invalid_input"),
        (&["bell", "--in", "/definitely/missing.json"], 5, "io"),
        (&["bell", "--in", path_str(&bad)], 6, "parse"),
    ];
    for (args, code, kind) in cases {
        let (got, stdout, stderr) = chainamp(args);
        assert_eq!(got, code, "{args:?}");
        assert!(stdout.is_empty());
        let err: Value = serde_json::from_str(&stderr).unwrap();
        assert_eq!(err["error"]["kind"], kind);
    }
}

#[test]
fn bad_thread_env_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_chainamp"))
        .args(["threshold"])
        .env("CHAINAMP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}
