use std::path::PathBuf;
use std::process::{Command, Output};

use ocsens_core::convex::SetRep;
use ocsens_core::io::{fixtures, problem_to_json};
use ocsens_core::sensitivity::{SensMode, SensitivityReport};
use ocsens_core::serde_ext::round_json;
use ocsens_core::solver::SolveResult;
use ocsens_core::verify::VerifyReport;

fn example(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/examples").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ocsens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(name: &str) -> String {
    example(name).display().to_string()
}

#[test]
fn solve_first_example() {
    let o = run(&["solve", &p("p1.json")]);
    assert_eq!(o.status.code(), Some(0));
    let r: SolveResult = serde_json::from_str(&stdout(&o)).unwrap();
    let z = &r.solution.unwrap().z;
    for (a, b) in z.iter().zip([-0.4, -0.8, 0.4]) {
        assert!((a - b).abs() < 1e-6, "{z:?}");
    }
}

#[test]
fn solve_second_example() {
    let o = run(&["solve", &p("p2.json")]);
    assert_eq!(o.status.code(), Some(0));
    let r: SolveResult = serde_json::from_str(&stdout(&o)).unwrap();
    let z = &r.solution.unwrap().z;
    for (a, b) in z.iter().zip([-1.0, 1.0, 0.0, 1.0, 1.0]) {
        assert!((a - b).abs() < 1e-6, "{z:?}");
    }
}

#[test]
fn missing_file() {
    let o = run(&["solve", "/nonexistent/problem.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("problem.json"));
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n  \"horizon\": 1,\n  oops\n}").unwrap();
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn infeasible_exit_code() {
    let mut prob = fixtures::p1();
    prob.initial_set = ocsens_core::convex::PolyhedralSet::boxed(&[1.0], &[0.0]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inf.json");
    std::fs::write(&path, problem_to_json(&prob)).unwrap();
    let o = run(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sens_modes() {
    let o = run(&["sens", &p("p1.json")]);
    assert_eq!(o.status.code(), Some(0));
    let r: SensitivityReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r.mode, SensMode::SmoothExact);
    assert_eq!(r.subdiff_v, SetRep::singleton(vec![1.3]));
    assert!(r.oracle_check.unwrap().pass);

    let o = run(&["sens", &p("p2.json"), "--mode", "interval"]);
    let r: SensitivityReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r.mode, SensMode::OuterInterval);
    assert_eq!(
        r.subdiff_v,
        SetRep::Box {
            lo: vec![-2.0, -2.0],
            hi: vec![2.0, 2.0]
        }
    );

    let o = run(&["sens", &p("p2.json"), "--mode", "polytope"]);
    let r: SensitivityReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r.mode, SensMode::OuterPolytope);
    let expected = SetRep::Box {
        lo: vec![0.0, -1.0],
        hi: vec![0.0, 1.0],
    };
    assert!(r.subdiff_v.hausdorff(&expected).unwrap() < 1e-8);

    let o = run(&["sens", &p("p2.json")]);
    let r: SensitivityReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r.mode, SensMode::OuterPolytope);
}

#[test]
fn sens_smooth_mode_rejects_kinks() {
    let o = run(&["sens", &p("p2.json"), "--mode", "smooth"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn regularity_failure_exit_code() {
    let mut prob = fixtures::p1();
    prob.t[0] = nalgebra::DMatrix::zeros(1, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t0.json");
    std::fs::write(&path, problem_to_json(&prob)).unwrap();
    let o = run(&["sens", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("failing kernel vector"));
}

#[test]
fn verify_examples_and_corrupted_candidate() {
    let o = run(&["verify", &p("p1.json")]);
    assert_eq!(o.status.code(), Some(0));
    let r: VerifyReport = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r.checks.iter().all(|c| c.margin >= -1e-6));

    let o = run(&["verify", &p("p2.json"), "--mode", "polytope"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&["verify", &p("p1.json"), "--candidate", "2.0"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIL"));
}

#[test]
fn sweep_outputs() {
    let o = run(&["sweep", &p("p1.json"), "--grid-radius", "0.5", "--grid-points", "11"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("w_0,V,dV_0"));
    let v: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(v.len(), 11);
    for i in 1..10 {
        assert!(v[i] < 0.5 * (v[i - 1] + v[i + 1]), "not strictly convex at {i}");
    }

    let o = run(&["sweep", &p("p1.json"), "--grid-radius", "0"]);
    assert_eq!(stdout(&o).lines().count(), 2);

    let o = run(&["sweep", &p("p2.json"), "--grid-radius", "0.5", "--grid-points", "5"]);
    for line in stdout(&o).lines().skip(1) {
        let c: Vec<f64> = line.split(',').take(3).map(|s| s.parse().unwrap()).collect();
        assert!((c[2] - (0.5 * c[0] * c[0] + c[1].abs())).abs() < 1e-6, "{line}");
    }
}

#[test]
fn sweep_rejects_large_parameter() {
    let mut prob = fixtures::p2();
    prob.param_dims = vec![2, 1];
    prob.t[0] = nalgebra::DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]);
    prob.wbar = vec![0.0; 3];
    let mut h0 = prob.stage_costs[0].clone();
    h0 = h0.scatter(4, &[0, 1, 2]);
    prob.stage_costs[0] = h0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p3.json");
    std::fs::write(&path, problem_to_json(&prob)).unwrap();
    let o = run(&["sweep", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_flag_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = run(&["sens", &p("p2.json"), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn reports_round_trip() {
    fn check<T: serde::Serialize + serde::de::DeserializeOwned + PartialEq + std::fmt::Debug>(
        text: &str,
    ) {
        let parsed: T = serde_json::from_str(text).unwrap();
        let mut v = serde_json::to_value(&parsed).unwrap();
        round_json(&mut v, 12);
        let again: T = serde_json::from_value(v).unwrap();
        assert_eq!(parsed, again);
    }
    check::<SolveResult>(&stdout(&run(&["solve", &p("p1.json")])));
    check::<SensitivityReport>(&stdout(&run(&["sens", &p("p1.json")])));
    check::<SensitivityReport>(&stdout(&run(&["sens", &p("p2.json"), "--mode", "interval"])));
    check::<VerifyReport>(&stdout(&run(&["verify", &p("p2.json")])));
}

#[test]
fn csv_rejected_outside_sweep() {
    let o = run(&["sens", &p("p1.json"), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(1));
}
