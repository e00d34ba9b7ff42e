use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str], cfg: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_invariant-kit"))
        .args(args)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn stable_scalar_verifies() {
    let dir = TempDir::new().unwrap();
    let o = run(&["verify"], &config("scalar/stable.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let cert = json(dir.path().join("certificate.json"));
    assert_eq!(cert["verdict"], "invariant");
    assert_eq!(cert["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(cert["box"], serde_json::json!([[-1.0, 1.0]]));
}

#[test]
fn unstable_scalar_is_inconclusive_and_falsified() {
    let dir = TempDir::new().unwrap();
    let cfg = config("scalar/unstable.json");
    let o = run(&["verify"], &cfg, dir.path());
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("falsify"));
    assert_eq!(code(&run(&["family"], &cfg, dir.path())), 2);

    let o = run(&["falsify"], &cfg, dir.path());
    assert_eq!(code(&o), 3, "{}", stdout(&o));
    let report = dir.path().join("falsify_report.json");
    assert!(json(report.clone())["witness_count"].as_u64().unwrap() > 0);

    let replay = run(&["falsify", "--replay", report.to_str().unwrap()], &cfg, dir.path());
    assert_eq!(code(&replay), 3);
    assert!(stdout(&replay).contains("confirmed"));
}

#[test]
fn replayed_witnesses_do_not_hold_for_a_stable_system() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(&["falsify"], &config("scalar/unstable.json"), dir.path())), 3);
    let report = dir.path().join("falsify_report.json");
    let o = run(&["falsify", "--replay", report.to_str().unwrap()], &config("scalar/stable.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn skew_box_is_inconclusive_but_its_paralleletope_verifies() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(&["verify"], &config("rotated2d/box.json"), dir.path())), 2);
    assert_eq!(code(&run(&["falsify"], &config("rotated2d/box.json"), dir.path())), 3);
    let o = run(&["verify"], &config("rotated2d/config.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(json(dir.path().join("certificate.json"))["transform"]["t"].is_array());
}

#[test]
fn rotated_family_emits_nested_paralleletopes() {
    let dir = TempDir::new().unwrap();
    let o = run(&["family"], &config("rotated2d/config.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("family.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1_lo,x2_lo,x1_hi,x2_hi,certified"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() >= 20);
    for w in rows.windows(2) {
        assert!(w[1][0] > w[0][0]);
        for i in 0..2 {
            assert!(w[1][1 + i] >= w[0][1 + i] && w[1][3 + i] <= w[0][3 + i]);
        }
    }
    assert!(rows.iter().all(|r| r[5] == 1.0));
    let fam = json(dir.path().join("family_certificates.json"));
    assert_eq!(fam["members"].as_array().unwrap().len(), rows.len());
    let proj = std::fs::read_to_string(dir.path().join("projection_x1_x2.csv")).unwrap();
    assert_eq!(proj.lines().next(), Some("t,vertex,x1,x2"));
    assert_eq!(proj.lines().count(), 1 + 4 * rows.len());
    assert!(json(dir.path().join("family_transform.json"))["tinv"].is_array());
}

#[test]
fn transform_reports_the_spectrum() {
    let dir = TempDir::new().unwrap();
    let o = run(&["transform"], &config("linear2d/config.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let t = json(dir.path().join("transform.json"));
    assert_eq!(t["spectrum"]["stable"], true);
    assert_eq!(t["spectrum"]["eigenvalues"].as_array().unwrap().len(), 2);
    assert_eq!(code(&run(&["transform"], &config("scalar/unstable.json"), dir.path())), 2);
}

#[test]
fn certified_linear_family_contains_simulations() {
    let dir = TempDir::new().unwrap();
    let o = run(&["simulate"], &config("linear2d/config.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report = json(dir.path().join("simulate_report.json"));
    assert_eq!(report["trajectories"], 100);
    assert_eq!(report["escapes"], 0);
}

#[test]
fn leader_follower_surrogate_verifies() {
    let dir = TempDir::new().unwrap();
    let o = run(&["verify"], &config("leader_follower/config.json"), dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).contains("-6.000000"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    for d in [&a, &b] {
        assert_eq!(code(&run(&["family", "--seed", "5"], &config("rotated2d/config.json"), d.path())), 0);
        assert_eq!(code(&run(&["verify", "--seed", "5"], &config("rotated2d/config.json"), d.path())), 0);
    }
    for f in ["certificate.json", "family.csv", "family_certificates.json", "projection_x1_x2.csv"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_changes_the_config_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = config("scalar/stable.json");
    run(&["verify", "--seed", "1"], &cfg, dir.path());
    let h1 = json(dir.path().join("certificate.json"))["config_hash"].clone();
    run(&["verify", "--seed", "2"], &cfg, dir.path());
    assert_ne!(h1, json(dir.path().join("certificate.json"))["config_hash"]);
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"system": "missing.json", "set": {"kind": "box", "box": [[-1, 1]]}}"#).unwrap();
    let o = run(&["verify"], &bad, dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));

    let sys = dir.path().join("sys.json");
    std::fs::write(&sys, r#"{"n": 2, "p": 0, "q": 0, "f": ["-x1", "-x2"]}"#).unwrap();
    std::fs::write(&bad, r#"{"system": "sys.json", "set": {"kind": "box", "box": [[-1, 1]]}}"#).unwrap();
    let o = run(&["verify"], &bad, dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("expected 2"));
}
