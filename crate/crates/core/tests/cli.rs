//! End-to-end runs of the `ergoloop` binary.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ergoloop::constants::SQRT2M1;

fn ergoloop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ergoloop"))
        .args(args)
        .env("ERGOLOOP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn report(dir: &Path, command: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join(format!("{command}_report.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, format!("res = 16\nres-t = 16\nns = 10,100\nout = {}\n", out.display())).unwrap();
    let o = ergoloop(&["shorten", "--config", cfg.to_str().unwrap(), "--res", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out, "shorten");
    assert_eq!(r["config"]["res"], 8);
    assert_eq!(r["config"]["res_t"], 16);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(ergoloop(&["shorten", "--bogus", "1"]).status.code(), Some(1));
    assert_eq!(ergoloop(&["average", "--res", "zero"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(ergoloop(&["shorten", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(ergoloop(&["demo", "nowhere"]).status.code(), Some(1));
}

#[test]
fn help_documents_outputs() {
    let o = ergoloop(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("shorten.csv") && text.contains("Exit codes"));
}

#[test]
fn shorten_csv_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = ergoloop(&["shorten", "--res", "16", "--res-t", "16", "--ns", "10,100,1000", "--out", out]);
    assert_eq!(o.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(dir.path().join("shorten.csv")).unwrap();
    assert_eq!(rd.headers().unwrap(), vec!["N", "ell_N", "oracle_bound"]);
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let n: f64 = rec[0].parse().unwrap();
        let ell: f64 = rec[1].parse().unwrap();
        let exact = (PI * n * SQRT2M1).sin().abs() / (n * (PI * SQRT2M1).sin());
        assert!((ell - exact).abs() <= 1e-9, "N = {n}: {ell} vs {exact}");
        rows += 1;
    }
    assert_eq!(rows, 3);
}

#[test]
fn average_is_deterministic() {
    let runs: Vec<String> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let o = ergoloop(&["average", "--res", "16", "--fields", "3", "--seed", "9", "--out", dir.path().to_str().unwrap()]);
            assert_eq!(o.status.code(), Some(0));
            fs::read_to_string(dir.path().join("average.csv")).unwrap()
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert!(runs[0].starts_with("field,side,i,m_i,lemma31A_bound\n"));
}

#[test]
fn verify_only_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(ergoloop(&["cover", "--res", "8", "--fields", "2", "--out", out]).status.code(), Some(0));
    let good = dir.path().join("cover_family.json");
    assert_eq!(ergoloop(&["cover", "--verify-only", good.to_str().unwrap()]).status.code(), Some(0));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"universe":4,"base":[0],"maps":[[0,1,2,3]],"multiplicities":[1]}"#).unwrap();
    let o = ergoloop(&["cover", "--verify-only", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\"universe\":").unwrap();
    assert_eq!(ergoloop(&["cover", "--verify-only", broken.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn identity_demo_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = ergoloop(&["demo", "identity", "--res", "16", "--res-t", "16", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let r = report(dir.path(), "demo");
    assert_eq!(r["command"], "demo");
    assert!(r["verdicts"].as_array().unwrap().iter().all(|v| v["pass"] == true));
}
