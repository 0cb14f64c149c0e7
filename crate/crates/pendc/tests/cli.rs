//! Black-box tests of the command line interface and its exit codes.

use std::process::Command;

fn pendc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pendc"))
}

#[test]
fn solve_t1_lifted_reaches_reference_value() {
    let out = pendc()
        .args([
            "solve", "--instance", "t1", "--alg", "pendc-l", "--sigma0", "5e-3", "--beta", "4",
            "--rho", "1e-4",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("fval"), "{stdout}");
    assert!(stdout.contains("-1.999999") || stdout.contains("-2.000000"), "{stdout}");
}

#[test]
fn dca_infeasible_start_exits_2() {
    let out = pendc()
        .args(["solve", "--instance", "t1", "--alg", "dca", "--x0", "0.5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("chance constraint"), "{stderr}");
}

#[test]
fn gen_writes_a_loadable_instance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("norm.json");
    let out = pendc()
        .args([
            "gen", "--family", "norm", "--d", "3", "--mcons", "2", "--S", "8", "--alpha", "0.2",
            "--seed", "1", "--out",
        ])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(path.exists());

    // the generated file feeds straight back into the oracle
    let out = pendc()
        .args(["oracle", "--instance"])
        .arg(&path)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("fval"));
}

#[test]
fn oracle_budget_exhaustion_exits_2() {
    let out = pendc()
        .args(["oracle", "--instance", "t1", "--cap", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_1() {
    let out = pendc().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = pendc()
        .args(["solve", "--instance", "t1", "--alg", "simplex"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = pendc()
        .args(["solve", "--instance", "/no/such/file.json", "--alg", "cvar"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_certifies_t1_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let point = dir.path().join("point.json");
    std::fs::write(&point, r#"{"x":[0.2]}"#).unwrap();
    let out = pendc()
        .args(["check", "--instance", "t1", "--point"])
        .arg(&point)
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("strong stationarity  true"), "{stdout}");
    assert!(stdout.contains("strict gap           true"), "{stdout}");
}

#[test]
fn bench_runs_plan_and_prints_table() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    let runs = dir.path().join("runs");
    std::fs::write(
        &plan,
        format!(
            r#"{{"output":{:?},"format":"csv","entries":[
                {{"id":"a","algorithm":"cvar","instance":"t1"}},
                {{"id":"b","algorithm":"pendc-l","instance":"t1"}}
            ]}}"#,
            runs.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = pendc().arg("bench").arg(&plan).args(["--jobs", "2"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("family,S,alpha,algorithm"), "{stdout}");
    assert_eq!(stdout.lines().count(), 3);
    assert!(runs.join("a-rep0.json").exists());
    assert!(runs.join("b-rep0.json").exists());
}

#[test]
fn bench_empty_plan_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let plan = dir.path().join("plan.json");
    std::fs::write(
        &plan,
        format!(
            r#"{{"output":{:?},"format":"text","entries":[]}}"#,
            dir.path().join("runs").to_str().unwrap()
        ),
    )
    .unwrap();
    let out = pendc().arg("bench").arg(&plan).output().unwrap();
    assert!(out.status.success());
}
