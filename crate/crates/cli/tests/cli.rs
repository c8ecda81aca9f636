use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const STRADDLE: &str = r#"{"kind":"forward_start_straddle","n":2}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_motbound"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn instance_a(dir: &Path) -> PathBuf {
    write(
        dir,
        "a.json",
        r#"[{"points":[-1,1],"weights":[0.5,0.5]},
            {"points":[-2,0,2],"weights":[0.3333333333333333,0.3333333333333333,0.3333333333333333]}]"#,
    )
}

fn triangular(dir: &Path) -> PathBuf {
    write(
        dir,
        "tri.json",
        r#"{"marginals":[{"kind":"piecewise_linear","knots":[0.8,1.0,1.2],"values":[0,5,0]},
                         {"kind":"piecewise_linear","knots":[0.5,1.0,1.5],"values":[0,2,0]}]}"#,
    )
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn bounds_on_instance_a() {
    let dir = TempDir::new().unwrap();
    let a = instance_a(dir.path());
    let v = stdout_json(&run(&["bounds", "--marginals", a.to_str().unwrap(), "--payoff", STRADDLE]));
    for side in ["lower", "upper"] {
        let r = &v[side];
        assert!((r["value"].as_f64().unwrap() - 7.0 / 6.0).abs() < 1e-9);
        let d = &r["diagnostics"];
        assert!(d["duality_gap"].as_f64().unwrap().abs() < 1e-9);
        assert!(d["max_martingale_residual"].as_f64().unwrap() < 1e-9);
        assert!(d["max_slackness_violation"].as_f64().unwrap() < 1e-6);
        assert_eq!(r["verification"]["valid"], Value::Bool(true));
    }
}

#[test]
fn payoff_from_file_and_single_sense() {
    let dir = TempDir::new().unwrap();
    let a = instance_a(dir.path());
    let p = write(dir.path(), "p.json", STRADDLE);
    let v = stdout_json(&run(&[
        "bounds", "--marginals", a.to_str().unwrap(), "--payoff", p.to_str().unwrap(), "--sense", "upper",
    ]));
    assert!(v.get("lower").is_none());
    assert!((v["upper"]["value"].as_f64().unwrap() - 7.0 / 6.0).abs() < 1e-9);
}

#[test]
fn reversed_marginals_fail_order_check() {
    let dir = TempDir::new().unwrap();
    let rev = write(
        dir.path(),
        "rev.json",
        r#"[{"points":[-2,0,2],"weights":[0.3333333333333333,0.3333333333333333,0.3333333333333333]},
            {"points":[-1,1],"weights":[0.5,0.5]}]"#,
    );
    let out = run(&["check-order", "--marginals", rev.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("strike"), "{stderr}");
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["admissible"], Value::Bool(false));

    let out = run(&["bounds", "--marginals", rev.to_str().unwrap(), "--payoff", STRADDLE]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_has_eleven_ordered_rows() {
    let dir = TempDir::new().unwrap();
    let tri = triangular(dir.path());
    let out = run(&["sweep", "--marginals", tri.to_str().unwrap(), "--grid", "21", "--strikes", "0.5:1.5:0.1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("K,lower,upper"));
    let rows: Vec<Vec<f64>> =
        lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 11);
    for (k, row) in rows.iter().enumerate() {
        assert!((row[0] - (0.5 + 0.1 * k as f64)).abs() < 1e-12);
        assert!(row[1] <= row[2] + 1e-9);
    }
}

#[test]
fn outputs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let tri = triangular(dir.path());
    let args = ["sweep", "--marginals", tri.to_str().unwrap(), "--grid", "15", "--strikes", "0.8,1,1.2"];
    let first = run(&args);
    let second = bin().args(args).env("MOTBOUND_THREADS", "1").output().unwrap();
    assert!(first.status.success() && second.status.success());
    assert_eq!(first.stdout, second.stdout);

    let a = instance_a(dir.path());
    let o1 = dir.path().join("o1.json");
    let o2 = dir.path().join("o2.json");
    for o in [&o1, &o2] {
        let out = run(&["bounds", "--marginals", a.to_str().unwrap(), "--payoff", STRADDLE, "--out", o.to_str().unwrap()]);
        assert!(out.status.success());
        assert!(out.stdout.is_empty());
    }
    assert_eq!(std::fs::read(o1).unwrap(), std::fs::read(o2).unwrap());
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let a = instance_a(dir.path());
    let missing = dir.path().join("missing.json");
    let out = run(&["bounds", "--marginals", missing.to_str().unwrap(), "--payoff", STRADDLE]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["bounds", "--marginals", a.to_str().unwrap(), "--payoff", STRADDLE, "--tol-gap", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let tri = triangular(dir.path());
    let out = run(&["sweep", "--marginals", tri.to_str().unwrap(), "--strikes", "1"]);
    assert_eq!(out.status.code(), Some(2), "density specs need --grid");
    let out = bin().args(["counterexample"]).env("MOTBOUND_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn quotes_round_trip_through_implied_marginals() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("maturity_index,strike,price\n");
    // mu1 = (δ_{-1} + δ_1)/2, mu2 = (δ_{-2} + δ_0 + δ_2)/3 priced on a strike ladder.
    for k in [-3.0f64, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0] {
        let c1 = 0.5 * ((-1.0 - k).max(0.0) + (1.0 - k).max(0.0));
        let c2 = ((-2.0 - k).max(0.0) + (-k).max(0.0) + (2.0 - k).max(0.0)) / 3.0;
        csv.push_str(&format!("0,{k},{c1}\n1,{k},{c2}\n"));
    }
    let q = write(dir.path(), "q.csv", &csv);
    let v = stdout_json(&run(&["implied-marginals", "--quotes", q.to_str().unwrap(), "--s0", "0"]));
    let pts: Vec<f64> = v[1]["points"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(pts, vec![-2.0, 0.0, 2.0]);

    let b = stdout_json(&run(&[
        "bounds", "--quotes", q.to_str().unwrap(), "--s0", "0", "--payoff", STRADDLE, "--sense", "lower",
    ]));
    assert!((b["lower"]["value"].as_f64().unwrap() - 7.0 / 6.0).abs() < 1e-9);
}

#[test]
fn arbitrage_verdicts() {
    let dir = TempDir::new().unwrap();
    let a = instance_a(dir.path());
    let payoff = r#"{"kind":"tabulated","n":2,"params":{"grids":[[-1,1],[-2,0,2]],"values":[1,0,0,0,0,0]}}"#;
    let verdict = |q: &str| {
        let v = stdout_json(&run(&["arb", "--marginals", a.to_str().unwrap(), "--payoff", payoff, "--quoted", q]));
        (v["verdict"]["action"].as_str().unwrap().to_string(), v["hedge"].is_null())
    };
    assert_eq!(verdict("0.2"), ("BUY".to_string(), false));
    assert_eq!(verdict("0.3"), ("NO_ARB".to_string(), true));
    assert_eq!(verdict("0.4"), ("SELL".to_string(), false));
}

#[test]
fn counterexample_reports_barriers() {
    let v = stdout_json(&run(&["counterexample", "--blocks", "3", "--per-block", "8"]));
    let sums = v["partial_sums"].as_array().unwrap();
    let barriers = v["barriers"].as_array().unwrap();
    assert_eq!(sums.len(), barriers.len());
    for (s, b) in sums.iter().zip(barriers) {
        assert!((s.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-10);
    }
    assert!(v["relative_error"].as_f64().unwrap() < 0.1);
    assert!(v["delta_increments"].as_array().unwrap().len() >= 2);
}

#[test]
fn envelope_and_surface() {
    let dir = TempDir::new().unwrap();
    let a = instance_a(dir.path());
    let v = stdout_json(&run(&[
        "envelope", "--marginals", a.to_str().unwrap(), "--payoff", STRADDLE, "--samples", "20", "--seed", "3",
    ]));
    assert!(v["gap_to_lp"].as_f64().unwrap().abs() < 1e-9);
    assert!(v["max_random_excess"].as_f64().unwrap() <= 1e-8);

    let u2 = write(dir.path(), "u2.csv", "s2,u2\n-2,0\n0,0\n2,0\n");
    let v = stdout_json(&run(&[
        "envelope", "--marginals", a.to_str().unwrap(), "--payoff", STRADDLE, "--u2", u2.to_str().unwrap(), "--iters", "5",
    ]));
    assert_eq!(v["start_value"].as_f64().unwrap(), 1.0);
    assert!((v["value"].as_f64().unwrap() - 7.0 / 6.0).abs() < 1e-9);

    let out = run(&["surface", "--marginals", a.to_str().unwrap(), "--payoff", STRADDLE]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("s1,s2,psi,phi,phi_minus_psi\n"));
    for line in text.lines().skip(1) {
        let gap: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(gap >= -1e-8, "{line}");
    }
}
