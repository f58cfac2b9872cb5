use std::path::Path;
use std::process::{Command, Output};

use qmpx::matrix::{complex_gaussian, random_pd, HermitianMatrix};
use qmpx::model::{write_problem, QMFunction, QMPProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn qmpx(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qmpx"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("QMPX_THREADS", t),
        None => cmd.env_remove("QMPX_THREADS"),
    };
    cmd.output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scenario(dir: &Path) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(
        &path,
        r#"{"case":"Example1","params":{"antennas":2,"esr_db":20}}"#,
    )
    .unwrap();
    path.to_str().unwrap().to_owned()
}

fn budget_problem(dir: &Path) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let obj = QMFunction::type2(
        random_pd(3, 0.1, &mut rng),
        complex_gaussian(3, 2, &mut rng),
        0.0,
    )
    .unwrap();
    let budget = QMFunction::energy(HermitianMatrix::identity(3), 2, -0.2);
    let p = QMPProblem::auto(obj, vec![budget], vec![]).unwrap();
    let path = dir.join("problem.json");
    write_problem(&p, &path).unwrap();
    path.to_str().unwrap().to_owned()
}

fn objective(json: &str) -> f64 {
    serde_json::from_str::<serde_json::Value>(json).unwrap()["objective"]
        .as_f64()
        .unwrap()
}

#[test]
fn solve_paths_agree() {
    let dir = tempfile::tempdir().unwrap();
    let problem = budget_problem(dir.path());
    let auto = ok(&qmpx(&["solve", &problem], None));
    let v: serde_json::Value = serde_json::from_str(&auto).unwrap();
    assert_eq!(v["path"], "Bisection");
    assert!(v["kkt_residual"].as_f64().unwrap() < 1e-8);
    for path in ["bisection", "sdr", "socp"] {
        let other = ok(&qmpx(&["solve", &problem, "--path", path], None));
        assert!(
            (objective(&other) - objective(&auto)).abs() < 1e-6,
            "{path}"
        );
    }
    let file = dir.path().join("solution.json");
    ok(&qmpx(
        &["solve", &problem, "--out", file.to_str().unwrap()],
        None,
    ));
    assert_eq!(
        objective(&std::fs::read_to_string(file).unwrap()),
        objective(&auto)
    );
}

#[test]
fn solve_rejects_a_path_that_does_not_fit() {
    let dir = tempfile::tempdir().unwrap();
    let problem = budget_problem(dir.path());
    let out = qmpx(&["solve", &problem, "--path", "closed-form"], None);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("closed form"));
    assert!(!qmpx(&["solve", &problem, "--path", "simplex"], None)
        .status
        .success());
}

#[test]
fn simulate_is_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let run = |name: &str, threads| {
        let out = dir.path().join(name);
        let args = [
            "simulate",
            &sc,
            "--snr",
            "0:10:20",
            "--trials",
            "4",
            "--symbols",
            "300",
            "--seed",
            "3",
            "--max-sweeps",
            "10",
            "--out",
            out.to_str().unwrap(),
        ];
        ok(&qmpx(&args, threads));
        std::fs::read_to_string(out).unwrap()
    };
    let a = run("a.csv", Some("1"));
    let b = run("b.csv", Some("1"));
    let c = run("c.csv", Some("3"));
    assert_eq!(a, b);
    assert_eq!(a, c);
    let mut lines = a.lines();
    assert_eq!(
        lines.next().unwrap(),
        "snr_db,strategy,initializer,analytic_mse,empirical_mse,trials,skipped"
    );
    assert_eq!(lines.count(), 6);
}

#[test]
fn initstudy_writes_curves_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let out = dir.path().join("init.csv");
    let args = [
        "initstudy",
        &sc,
        "--snr",
        "10",
        "--trials",
        "2",
        "--symbols",
        "100",
        "--max-sweeps",
        "5",
        "--out",
        out.to_str().unwrap(),
    ];
    ok(&qmpx(&args, None));
    let curves = std::fs::read_to_string(&out).unwrap();
    assert_eq!(curves.lines().count(), 4);
    let traces = std::fs::read_to_string(dir.path().join("init.traces.csv")).unwrap();
    assert_eq!(
        traces.lines().next().unwrap(),
        "snr_db,initializer,sweep,mean_objective,mean_pre_projection,trials,skipped"
    );
    assert_eq!(traces.lines().count(), 1 + 3 * 6);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario(dir.path());
    let out = dir.path().join("x.csv");
    let o = out.to_str().unwrap();
    let missing = qmpx(&["simulate", "/nonexistent.json", "--out", o], None);
    assert!(!missing.status.success());
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nonexistent"));
    assert!(
        !qmpx(&["simulate", &sc, "--snr", "10:5:0", "--out", o], None)
            .status
            .success()
    );
    assert!(!qmpx(&["simulate", &sc, "--trials", "0", "--out", o], None)
        .status
        .success());
    assert!(!qmpx(
        &["simulate", &sc, "--trials", "1", "--out", o],
        Some("zero")
    )
    .status
    .success());
    assert!(!out.exists());
}
