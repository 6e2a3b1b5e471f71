use std::path::{Path, PathBuf};
use std::process::Command;

use netsys::ensemble::planted_unobservable_ring;
use netsys::io::write_model;
use netsys::linalg::Mat;
use netsys::{NetworkedSystem, SubsystemRealization};
use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
    json: Option<Value>,
}

fn netsys(dir: &Path, args: &[&str]) -> Run {
    let report = dir.join("report.json");
    let _ = std::fs::remove_file(&report);
    let out = Command::new(env!("CARGO_BIN_EXE_netsys"))
        .args(args)
        .arg("--json")
        .arg(&report)
        .env_remove("NETSYS_RANK_TOL")
        .env_remove("NETSYS_ZERO_TOL")
        .output()
        .expect("binary runs");
    let json = std::fs::read_to_string(&report).ok().map(|t| serde_json::from_str(&t).unwrap());
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
        json,
    }
}

/// The JSON report, when written, must carry the same verdict as the exit code.
fn assert_consistent(run: &Run) {
    if let Some(j) = &run.json {
        assert_eq!(j["exit_code"].as_i64(), Some(run.code as i64));
        let expected = ["CertifiedYes", "CertifiedNo", "Inconclusive"][run.code as usize];
        assert_eq!(j["status"], expected);
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn write_sys(dir: &Path, name: &str, sys: &NetworkedSystem) -> String {
    write(dir, name, &write_model(sys).unwrap()).to_str().unwrap().to_owned()
}

fn m(rows: usize, cols: usize, v: &[f64]) -> Mat {
    Mat::from_row_slice(rows, cols, v)
}

fn decoupled_observable() -> NetworkedSystem {
    let sub = SubsystemRealization {
        a_tt: m(2, 2, &[0.5, 1.0, 0.0, -0.3]),
        a_ts: Mat::zeros(2, 0),
        b_t: m(2, 1, &[0.0, 1.0]),
        a_st: Mat::zeros(0, 2),
        a_ss: Mat::zeros(0, 0),
        b_s: Mat::zeros(0, 1),
        c_t: m(1, 2, &[1.0, 0.0]),
        c_s: Mat::zeros(1, 0),
        d: Mat::zeros(1, 1),
    };
    NetworkedSystem::new(vec![sub.clone(), sub], Mat::zeros(0, 0), true)
}

/// One subsystem feeding itself with unit loop gain.
fn ill_posed() -> NetworkedSystem {
    let sub = SubsystemRealization {
        a_tt: m(1, 1, &[0.5]),
        a_ts: m(1, 1, &[1.0]),
        b_t: Mat::zeros(1, 0),
        a_st: m(1, 1, &[1.0]),
        a_ss: m(1, 1, &[1.0]),
        b_s: Mat::zeros(1, 0),
        c_t: m(1, 1, &[1.0]),
        c_s: m(1, 1, &[0.0]),
        d: Mat::zeros(1, 0),
    };
    NetworkedSystem::new(vec![sub], m(1, 1, &[1.0]), true)
}

/// Two internal inputs but one output, so `G1` is never of full column rank.
fn wide_g1() -> NetworkedSystem {
    let sub = SubsystemRealization {
        a_tt: m(1, 1, &[0.2]),
        a_ts: m(1, 2, &[1.0, 0.5]),
        b_t: Mat::zeros(1, 0),
        a_st: m(2, 1, &[1.0, 1.0]),
        a_ss: m(2, 2, &[0.1, 0.1, 0.1, 0.1]),
        b_s: Mat::zeros(2, 0),
        c_t: m(1, 1, &[1.0]),
        c_s: m(1, 2, &[0.3, 0.7]),
        d: Mat::zeros(1, 0),
    };
    let phi = m(4, 4, &[0., 0., 1., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0., 1., 0., 0.]);
    NetworkedSystem::new(vec![sub.clone(), sub], phi, true)
}

const EXAMPLE_STMS: &str = r#"[
  [[0.90391, 0.026359, 0], [-0.026359, 0.90391, 0], [0, 0, 1.0243]],
  [[0.67874, 0, 0], [0, 0.86742, 0], [0, 0, 1.0588]],
  [[0.85354, 0, 0], [0, 1.2027, 0], [0, 0, 1.3343]]
]"#;

#[test]
fn validate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let good = write_sys(dir.path(), "good.json", &decoupled_observable());
    let r = netsys(dir.path(), &["validate", &good]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_consistent(&r);
    assert_eq!(r.json.as_ref().unwrap()["admissible"], true);

    let bad = write_sys(dir.path(), "ill.json", &ill_posed());
    let r = netsys(dir.path(), &["validate", &bad]);
    assert_eq!(r.code, 1);
    assert_consistent(&r);
}

#[test]
fn analyze_reports_each_verdict() {
    let dir = TempDir::new().unwrap();
    let yes = write_sys(dir.path(), "yes.json", &decoupled_observable());
    let r = netsys(dir.path(), &["analyze", &yes]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert_consistent(&r);
    assert!(r.stdout.contains("status: CertifiedYes"));
    assert!(r.stdout.contains("singular values of observability matrices"));

    let ring = write_sys(dir.path(), "ring.json", &planted_unobservable_ring(3, 2, 1));
    let r = netsys(dir.path(), &["analyze", "--mode", "observability", &ring]);
    assert_eq!(r.code, 1, "{}", r.stdout);
    assert_consistent(&r);
    assert!(r.json.unwrap()["report"]["consistency_flags"].as_array().unwrap().is_empty());

    let ill = write_sys(dir.path(), "ill.json", &ill_posed());
    let r = netsys(dir.path(), &["analyze", &ill]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("error:"));
}

#[test]
fn zeros_without_full_rank_are_inconclusive() {
    let dir = TempDir::new().unwrap();
    let wide = write_sys(dir.path(), "wide.json", &wide_g1());
    let r = netsys(dir.path(), &["zeros", &wide]);
    assert_eq!(r.code, 2, "{}{}", r.stdout, r.stderr);
    assert_consistent(&r);
}

#[test]
fn malformed_input_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let broken = write(dir.path(), "broken.json", "{\"subsystems\": [");
    let r = netsys(dir.path(), &["validate", broken.to_str().unwrap()]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("broken.json"), "{}", r.stderr);
    assert!(r.json.is_none());

    let missing = dir.path().join("missing.json");
    assert_eq!(netsys(dir.path(), &["lift", missing.to_str().unwrap()]).code, 3);
    assert_eq!(netsys(dir.path(), &["no-such-command"]).code, 3);
    assert_eq!(netsys(dir.path(), &["construct", "x.json", "--kappa", "abc"]).code, 3);

    let stms = write(dir.path(), "stms.json", EXAMPLE_STMS);
    let r = netsys(dir.path(), &["min-io", stms.to_str().unwrap(), "--budget", "1,1"]);
    assert_eq!(r.code, 3);
    assert!(r.stderr.contains("2 budgets for 3 subsystems"));
}

#[test]
fn min_io_on_distinct_spectra_needs_one_each() {
    let dir = TempDir::new().unwrap();
    let stms = write(dir.path(), "stms.json", EXAMPLE_STMS);
    let path = stms.to_str().unwrap();
    let r = netsys(dir.path(), &["min-io", path]);
    assert_eq!(r.code, 0);
    assert_consistent(&r);
    let rows: Vec<Vec<&str>> = r.stdout.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 3);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[..4], [(i + 1).to_string().as_str(), "1", "1", "1"]);
    }
    let sel = &r.json.unwrap()["selection"]["subsystems"];
    assert!(sel.as_array().unwrap().iter().all(|s| s["p_max"] == 1));

    let r = netsys(dir.path(), &["min-io", path, "--budget", "1,0,1"]);
    assert_eq!(r.code, 1);
    assert_consistent(&r);
    assert!(r.stdout.contains("no (short by 1)"));
}

#[test]
fn construct_then_analyze() {
    let dir = TempDir::new().unwrap();
    let stms = write(
        dir.path(),
        "stms.json",
        r#"{"stms": [[[0.5, 1], [0, -0.2]], [[0.1, 0], [0.3, 0.7]], [[-0.4, 0.2], [0.2, 0.6]]], "budgets": [1, 1, 1]}"#,
    );
    let out = dir.path().join("built.json");
    let r = netsys(
        dir.path(),
        &["construct", stms.to_str().unwrap(), "--seed", "3", "--out", out.to_str().unwrap()],
    );
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);
    assert_consistent(&r);
    assert_eq!(r.json.unwrap()["trace"]["converged"], true);
    let built = out.to_str().unwrap();
    let r = netsys(dir.path(), &["analyze", "--mode", "observability", built]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert_consistent(&r);

    let r = netsys(dir.path(), &["construct", stms.to_str().unwrap(), "--controllable"]);
    assert_eq!(r.code, 0, "{}{}", r.stdout, r.stderr);

    let too_small = write(dir.path(), "eye.json", r#"{"stms": [[[1, 0], [0, 1]]], "budgets": [1]}"#);
    let r = netsys(dir.path(), &["construct", too_small.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("p_max"), "{}", r.stderr);
}

#[test]
fn ensemble_members_validate() {
    let dir = TempDir::new().unwrap();
    let members = dir.path().join("members");
    let r = netsys(
        dir.path(),
        &["ensemble", "--count", "5", "--seed", "9", "--n-x", "1..3", "--out-dir", members.to_str().unwrap()],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_consistent(&r);
    assert_eq!(r.json.unwrap()["members"].as_array().unwrap().len(), 5);
    for k in 0..5 {
        let p = members.join(format!("member_{k:04}.json"));
        let r = netsys(dir.path(), &["validate", p.to_str().unwrap()]);
        assert_eq!(r.code, 0);
        assert_consistent(&r);
    }
    assert_eq!(netsys(dir.path(), &["ensemble", "--n-x", "3..1"]).code, 3);
}

#[test]
fn lift_prints_the_global_matrices() {
    let dir = TempDir::new().unwrap();
    let good = write_sys(dir.path(), "good.json", &decoupled_observable());
    let r = netsys(dir.path(), &["lift", &good]);
    assert_eq!(r.code, 0);
    assert_consistent(&r);
    let a = &r.json.unwrap()["A"];
    assert_eq!(a.as_array().unwrap().len(), 4);
    assert_eq!(a[0][1], 1.0);
}
