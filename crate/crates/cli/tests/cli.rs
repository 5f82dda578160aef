use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn wncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wncs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = wncs(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_is_deterministic_and_replayable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_link_power.json");
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for dir in [&a, &b] {
        run_ok(&["simulate", "--config", s(&cfg), "--out", s(dir), "--seed", "9", "--trials", "6", "--grid", "11"]);
    }
    run_ok(&["replay", "--manifest", s(&a.join("manifest.json")), "--out", s(&c)]);
    for name in ["decay.csv", "trajectory.csv", "jumps.csv"] {
        let first = read(&a, name);
        assert_eq!(first, read(&b, name), "{name}");
        assert_eq!(first, read(&c, name), "{name}");
    }
    let manifest = json(&a, "manifest.json");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["command"]["command"], "simulate");
    assert!(manifest["outputs"].as_array().unwrap().len() >= 4);

    run_ok(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("d")), "--seed", "10", "--trials", "6", "--grid", "11"]);
    assert_ne!(read(&a, "trajectory.csv"), read(&tmp.path().join("d"), "trajectory.csv"));
}

#[test]
fn csv_floats_have_seventeen_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&["rate", "--config", s(&configs().join("batch_reactor_rr.json")), "--out", s(tmp.path())]);
    let csv = read(tmp.path(), "lhs_deterministic.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("omega,lhs,rho"));
    let first = lines.next().unwrap().split(',').next().unwrap().to_owned();
    let mantissa = first.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{first}");
    let report = json(tmp.path(), "rate.json");
    assert_eq!(report["reference_rates"].as_array().unwrap().len(), 4);
    assert_eq!(report["report"]["expected_cover"], 7.5);
}

#[test]
fn power_modes_reproduce_the_two_link_design() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("two_link_power.json");
    let lp = tmp.path().join("lp");
    run_ok(&["power", "--config", s(&cfg), "--out", s(&lp)]);
    let p = &json(&lp, "power.json")["solutions"][0]["powers"];
    assert!((p[0].as_f64().unwrap() - 9.844418).abs() < 1e-5);
    assert!((p[1].as_f64().unwrap() - 17.670393).abs() < 1e-5);

    let two = tmp.path().join("two");
    run_ok(&["power", "--config", s(&cfg), "--out", s(&two), "--mode", "two-link"]);
    let eps = json(&two, "power.json")["two_link"]["eps_star"].as_f64().unwrap();
    assert!((eps - 0.378032).abs() < 1e-6);

    let region = tmp.path().join("region");
    run_ok(&["power", "--config", s(&cfg), "--out", s(&region), "--mode", "region", "--grid", "80"]);
    assert_eq!(json(&region, "power.json")["optimum_cell_straddles_boundary"], true);
    assert_eq!(read(&region, "region.csv").lines().count(), 80 * 80 + 1);
}

#[test]
fn cover_reports_formula_and_histogram() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(&["cover", "--config", s(&configs().join("batch_reactor_stochastic.json")), "--out", s(tmp.path()), "--trials", "5000"]);
    let report = json(tmp.path(), "cover.json");
    assert_eq!(report["formula_mean"], 7.5);
    assert_eq!(report["samples"], 5000);
    let hist = read(tmp.path(), "cover_histogram.csv");
    let total: u64 = hist.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 5000);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"protocol": {"kind": "round_robin"}}"#).unwrap();
    let out = wncs(&["rate", "--config", s(&bad), "--out", s(&tmp.path().join("x"))]);
    assert_eq!(out.status.code(), Some(4));

    let unknown = tmp.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"protocol": {"kind": "token_ring"}}"#).unwrap();
    assert_eq!(wncs(&["cover", "--config", s(&unknown), "--out", s(tmp.path())]).status.code(), Some(4));

    // A slack larger than the whole requirement leaves no stability margin.
    let four = configs().join("four_link_power.json");
    let out = wncs(&["power", "--config", s(&four), "--out", s(&tmp.path().join("d")), "--delta", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["binding_bound"], "delta");

    let mut cfg: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&four).unwrap()).unwrap();
    cfg["channel"]["p_max"] = serde_json::json!(5.0);
    let capped = tmp.path().join("capped.json");
    std::fs::write(&capped, cfg.to_string()).unwrap();
    let out = wncs(&["power", "--config", s(&capped), "--out", s(&tmp.path().join("e")), "--grid", "12"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["binding_bound"], "power_cap");
}

#[test]
fn validate_exit_code_matches_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = wncs(&["validate", "--out", s(tmp.path()), "--config", s(&configs().join("two_link_power.json"))]);
    let report = json(tmp.path(), "validate.json");
    let criteria = report["criteria"].as_array().unwrap();
    assert_eq!(criteria.len(), 10);
    let all = criteria.iter().all(|c| c["passed"] == true) && report["config_invariants"]["passed"] == true;
    assert_eq!(out.status.code(), Some(if all { 0 } else { 1 }));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]") || l.starts_with("[FAIL]")).count(), 11);
}
