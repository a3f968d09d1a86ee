//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::{Command, Output};

fn alqg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alqg"))
        .args(args)
        .env("ALQG_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn dumped_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = alqg(&["solve", "--lambda", "3", "--eps-lo", "-0.5", "--dump-config"]);
    assert!(out.status.success());
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, &out.stdout).unwrap();
    let again = alqg(&["solve", "--config", cfg.to_str().unwrap(), "--dump-config"]);
    assert_eq!(json(&out), json(&again));
    assert_eq!(json(&out)["adversary"]["lambda"], 3.0);
}

#[test]
fn solve_reports_table1_value() {
    let out = alqg(&["solve"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["regime"], "PureUnique");
    assert!((v["value"].as_f64().unwrap() + 4.295454545).abs() < 1e-8);
    let v = json(&alqg(&["solve", "--eps-lo", "1", "--eps-hi", "2"]));
    assert!((v["value"].as_f64().unwrap() + 4.318181818).abs() < 1e-8);
}

#[test]
fn missing_equilibrium_is_not_an_error() {
    let out = alqg(&["solve", "--eps-lo", "0", "--eps-hi", "1"]);
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["regime"], "NoSpe");
    assert!(v["profile"].is_null());
}

#[test]
fn invalid_input_exits_one_and_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"adversary": {"lambda": 2.0, "eps": 1.0}}"#).unwrap();
    let out = alqg(&["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("eps"));

    let out = alqg(&["stationary", "--lambda", "0.25"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr).to_string();
    assert!(
        err.contains("lambda must exceed 1") && err.contains("alpha^2"),
        "{err}"
    );
}

#[test]
fn falsified_profile_exits_three() {
    assert_eq!(alqg(&["verify"]).status.code(), Some(0));
    assert_eq!(alqg(&["verify", "--perturb", "0.1"]).status.code(), Some(3));
}

#[test]
fn all_diverged_simulation_exits_three() {
    let out = alqg(&[
        "simulate",
        "--profile",
        "naive",
        "--eps-lo",
        "-3",
        "--eps-hi",
        "3",
        "--horizon",
        "200",
        "--rollouts",
        "200",
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn csv_body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# seed="), "{text}");
    text
}

#[test]
fn simulation_csv_is_seeded_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let args = |p: &Path| {
        vec![
            "simulate".to_string(),
            "--eps-lo".into(),
            "-1".into(),
            "--rollouts".into(),
            "2000".into(),
            "--seed".into(),
            "9".into(),
            "--out".into(),
            p.to_str().unwrap().to_string(),
        ]
    };
    for p in [&a, &b] {
        let args = args(p);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        assert!(alqg(&refs).status.success());
    }
    let (ta, tb) = (csv_body(&a), csv_body(&b));
    assert_eq!(ta, tb);
    assert!(ta.lines().next().unwrap().contains("seed=9"));
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(ta.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "mean_total_reward"));
    assert_eq!(rdr.records().count(), 1);
}

#[test]
fn fig4_iterates_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("fig4.csv");
    let out = alqg(&["reproduce", "--fig", "4", "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = csv_body(&out_path);
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        headers,
        [
            "n",
            "theta_tilde_L",
            "theta_hat_L",
            "theta_tilde_J",
            "theta_check_J",
            "lambda"
        ]
    );
    assert!(rdr.records().count() > 0);
}
