use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use switchrate::{catalog, io};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_switchrate"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("SWITCHRATE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write_example(dir: &Path) -> String {
    let p = dir.join("sys.json");
    fs::write(&p, io::system_to_json(&catalog::example_system())).unwrap();
    p.display().to_string()
}

#[test]
fn example_runs_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["example", "--trials", "100"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "system.json",
        "check.json",
        "certificate_homogeneous.json",
        "M_of_delta.csv",
        "beta_of_t.csv",
        "verify.json",
        "slow_convergence.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let text = fs::read_to_string(dir.path().join("system.json")).unwrap();
    assert_eq!(io::parse_system(&text).unwrap(), catalog::example_system());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sys = write_example(a.path());
    for dir in [a.path(), b.path()] {
        for args in [
            vec![
                "verify", "--system", &sys, "--delta", "1", "--trials", "50", "--seed", "7",
            ],
            vec![
                "m-curve",
                "--system",
                &sys,
                "--delta-grid",
                "0.1:3:20",
                "--method",
                "sphere",
                "--samples",
                "256",
            ],
        ] {
            let o = run(&args, dir);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    for f in ["verify.json", "M_of_delta.csv"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn malformed_json_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"dimension\": 2,\n  \"subsystems\": [\n}").unwrap();
    let o = run(&["check", "--system", p.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn non_hurwitz_subsystem_exits_3_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sys.json");
    fs::write(
        &p,
        r#"{"dimension": 2,
            "subsystems": [
              {"type": "linear", "matrix": [[-1, 0], [0, -1]]},
              {"type": "linear", "matrix": [[0.5, 0], [0, -1]]}],
            "lyapunov": {"type": "quadratic", "P": [[1, 0], [0, 1]]}}"#,
    )
    .unwrap();
    let o = run(
        &["certify-homogeneous", "--system", p.to_str().unwrap(), "--delta", "10"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("subsystem 2"));
}

#[test]
fn empty_delta_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_example(dir.path());
    for grid in ["", "1:2:0"] {
        let o = run(&["beta-curve", "--system", &sys, "--delta-grid", grid], dir.path());
        assert_eq!(o.status.code(), Some(2), "grid `{grid}`");
    }
}

#[test]
fn beta_curve_columns_start_at_one_and_decrease() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_example(dir.path());
    let o = run(&["beta-curve", "--system", &sys, "--delta-grid", "0.5:2:3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("beta_of_t.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,beta_delta_0.5,beta_delta_1.25,beta_delta_2");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    for col in 1..4 {
        assert_eq!(rows[0][col], 1.0);
        assert!(rows.windows(2).all(|w| w[1][col] <= w[0][col]));
    }
}

#[test]
fn negative_identity_m_curve_is_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("sys.json");
    fs::write(&p, io::system_to_json(&catalog::negative_identity(3))).unwrap();
    let o = run(
        &["m-curve", "--system", p.to_str().unwrap(), "--delta-grid", "0.1:4:9"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("M_of_delta.csv")).unwrap();
    assert!(text.starts_with("delta,M\n"));
    for l in text.lines().skip(1) {
        let v: Vec<f64> = l.split(',').map(|c| c.parse().unwrap()).collect();
        assert!((v[1] - (-v[0]).exp()).abs() < 1e-10);
    }
}

#[test]
fn simulate_and_certify_nonlinear() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cubic.json");
    fs::write(&p, io::system_to_json(&catalog::cubic_damped_example())).unwrap();
    let sig = dir.path().join("u.csv");
    fs::write(&sig, "t,i\n0,1\n1,2\n2.5,1\n").unwrap();
    let sys = p.to_str().unwrap();
    let o = run(
        &[
            "simulate",
            "--system",
            sys,
            "--signal",
            sig.to_str().unwrap(),
            "--horizon",
            "4",
            "--x0",
            "0.5,-0.2",
            "--record-dt",
            "0.5",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,i,x1,x2,V,normP\n"));
    assert!(traj.lines().count() > 8);

    let o = run(
        &[
            "certify-nonlinear",
            "--system",
            sys,
            "--delta",
            "1",
            "--R",
            "4",
            "--samples",
            "128",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("certificate_nonlinear.json")).unwrap()).unwrap();
    assert_eq!(v["version"], switchrate::VERSION);
    let c = &v["certificate"];
    assert!(c["m2"].as_f64().unwrap() < 1.0);
    assert!(c["gamma"].as_f64().unwrap() > 0.0);
    assert!(c["seeds"]["m2"].is_u64());
}

#[test]
fn csv_signal_without_horizon_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write_example(dir.path());
    let sig = dir.path().join("u.csv");
    fs::write(&sig, "t,i\n0,1\n").unwrap();
    let o = run(
        &["simulate", "--system", &sys, "--signal", sig.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_switchrate"))
        .args(["check", "--out"])
        .arg(dir.path())
        .env("SWITCHRATE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
