use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anharmonic")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn value_of(csv: &str, key: &str) -> f64 {
    csv.lines().find_map(|l| l.strip_prefix(&format!("{key},"))).unwrap().parse().unwrap()
}

#[test]
fn asymptotic_constants_for_m2() {
    let o = run(&["asymptotics", "--m", "2", "--theta", "0.8"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!((value_of(&s, "c_k") - 0.41111421986859653).abs() < 1e-10);
    assert!(value_of(&s, "c1_delta") < 1e-10);
}

#[test]
fn kappa_table_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kappa.csv");
    let o = run(&["kappa", "--m", "2", "--theta", "0.6", "--n-range", "1:3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "n,kappa,log_kappa,method,err_estimate,status,log_prediction");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k1: f64 = first[1].parse().unwrap();
    assert!((k1 - 0.3f64.cos().powf(-0.5)).abs() < 1e-10);
    assert_eq!(first[3], "harmonic_exact");
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("kappa.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["command"], "kappa");
    assert_eq!(meta["config"]["command"]["kappa"]["op"]["theta"], 0.6);
    assert!(meta["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert!(meta["version"].is_string() && meta["timestamp_unix"].is_number());
}

#[test]
fn json_format() {
    let o = run(&["spectrum", "--m", "2", "--theta", "0.6", "--n", "3", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 3);
    assert!((v[2]["abs"].as_f64().unwrap() - 5.0).abs() < 1e-12);
    assert_eq!(v[0]["method"], "exact");
}

#[test]
fn config_file_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "m = 2\ntheta = 0.3\nn = 4\nmethod = \"exact\"\n").unwrap();
    let base = run(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert!(base.status.success(), "{}", String::from_utf8_lossy(&base.stderr));
    assert_eq!(stdout(&base).lines().count(), 5);
    let over = run(&["spectrum", "--config", cfg.to_str().unwrap(), "--theta", "0.5", "--n", "2"]);
    assert!(over.status.success());
    let s = stdout(&over);
    assert_eq!(s.lines().count(), 3);
    let im: f64 = s.lines().nth(1).unwrap().split(',').nth(2).unwrap().parse().unwrap();
    assert!((im - 0.25f64.sin()).abs() < 1e-14);
}

fn files(dir: &Path, stem: &str) -> Vec<Vec<u8>> {
    ["", ".contours.json", ".perimeter.json", ".scatter.csv"]
        .iter()
        .map(|s| fs::read(dir.join(format!("{stem}{s}"))).unwrap())
        .collect()
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for stem in ["a.csv", "b.csv"] {
        let out = dir.path().join(stem);
        let o = run(&[
            "--threads",
            "2",
            "pseudospectrum",
            "--m",
            "2",
            "--theta",
            "0.6",
            "--basis-size",
            "80",
            "--window",
            "0:4,-0.5:1.5",
            "--grid",
            "40x30",
            "--eps",
            "0.1,0.01",
            "--scatter",
            "4",
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let (a, b) = (files(dir.path(), "a.csv"), files(dir.path(), "b.csv"));
    assert!(a.iter().all(|f| !f.is_empty()));
    assert_eq!(a, b);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["kappa", "--m", "3", "--theta", "0.1", "--n-range", "1:2"]).status.code(), Some(2));
    assert_eq!(run(&["kappa", "--m", "2", "--theta", "3.5", "--n-range", "1:2"]).status.code(), Some(2));
    assert_eq!(run(&["kappa", "--m", "2", "--theta", "0.6"]).status.code(), Some(2));
    assert_eq!(run(&["kappa", "--m", "4", "--theta", "0.5", "--n-range", "1:2", "--method", "airy"]).status.code(), Some(2));
    let unwritable = run(&["asymptotics", "--m", "1", "--theta", "0.5", "--out", "/nonexistent-dir/x.csv"]);
    assert_eq!(unwritable.status.code(), Some(4));
    let missing_config = run(&["asymptotics", "--config", "/nonexistent-dir/c.toml", "--m", "1", "--theta", "0.5"]);
    assert_eq!(missing_config.status.code(), Some(4));
    // eight basis functions cannot certify the quartic spectrum
    let unconverged = run(&["spectrum", "--m", "4", "--theta", "0.5", "--n", "2", "--basis-size", "8"]);
    assert_eq!(unconverged.status.code(), Some(3), "{}", String::from_utf8_lossy(&unconverged.stderr));
}

#[test]
fn semigroup_threshold_scan() {
    let o = run(&["semigroup", "--m", "2", "--theta", "0.6", "--scan", "0.01:0.6", "--steps", "60"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let t = value_of(&s, "t_critical");
    assert!(value_of(&s, "bracket_lo") <= t && t <= value_of(&s, "bracket_hi"));
}

#[test]
fn semigroup_term_norms() {
    // at t = 1 the terms only turn upward near n = 50
    let o = run(&["semigroup", "--m", "1", "--theta", "0.5", "--t", "0.1,1", "--n-max", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert_eq!(s.lines().next().unwrap(), "t,n,log_term_norm,classification");
    assert_eq!(s.lines().count(), 1 + 2 * 200);
    assert!(s.lines().skip(1).all(|l| l.ends_with(",divergent")));
}
