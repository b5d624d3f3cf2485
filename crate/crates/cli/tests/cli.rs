use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_solve"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("solve-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn first_order_run_exits_zero_with_json() {
    let out_path = tmp("qp.json");
    let out = run(&[
        "--problem",
        "qp-known-multiplier",
        "--solver",
        "r2",
        "--tol",
        "1e-3",
        "--json",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(record["status"], "first_order");
    for key in [
        "problem",
        "solver",
        "status",
        "x",
        "y_ls",
        "kkt_residual",
        "feasibility",
        "tau_final",
        "outer_iters",
        "inner_iters",
        "n_f",
        "n_grad",
        "n_c",
        "n_jac",
        "wall_time_s",
    ] {
        assert!(!record[key].is_null(), "missing {key}");
    }
    assert_eq!(record["solver"], "r2");
    assert!(record["kkt_residual"].as_f64().unwrap() <= 1e-3);
}

#[test]
fn infeasible_problem_exits_two() {
    let out = run(&["--problem", "infeasible-circle", "--solver", "r2"]);
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn unknown_problem_exits_one() {
    let out = run(&["--problem", "nope"]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn unknown_flag_exits_one() {
    let out = run(&["--does-not-exist"]);
    assert_eq!(out.status.code(), Some(1), "{out:?}");
}

#[test]
fn qp_file_roundtrip() {
    let qp_path = tmp("problem.json");
    fs::write(
        &qp_path,
        r#"{"Q": [[1.0, 0.0], [0.0, 1.0]], "g": [0.0, 0.0],
            "A": [[1.0, 0.0]], "b": [-1.0], "x0": [0.0, 0.0]}"#,
    )
    .unwrap();
    let out_path = tmp("qp_result.json");
    let out = run(&[
        "--qp",
        qp_path.to_str().unwrap(),
        "--json",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let record: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    let x = record["x"].as_array().unwrap();
    assert!((x[0].as_f64().unwrap() - 1.0).abs() < 1e-2);
}

#[test]
fn trace_csv_has_rows() {
    let trace_path = tmp("trace.csv");
    let out = run(&[
        "--problem",
        "hs6",
        "--trace",
        trace_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(&trace_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "problem,k,j,f,c_norm,xi,sigma,rho,accepted,prox_newton_iters,decrease"
    );
    assert!(lines.count() > 1);
}

#[test]
fn repeated_runs_are_deterministic() {
    let a_path = tmp("det_a.json");
    let b_path = tmp("det_b.json");
    for path in [&a_path, &b_path] {
        let out = run(&["--problem", "hs42", "--json", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(&a_path).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(&b_path).unwrap()).unwrap();
    for key in ["n_f", "n_grad", "n_c", "n_jac", "x"] {
        assert_eq!(a[key], b[key], "{key} differs");
    }
}

#[test]
fn profile_curves_are_nondecreasing_step_functions() {
    let a_path = tmp("profile_a.json");
    let b_path = tmp("profile_b.json");
    let out = run(&["--all", "--solver", "r2", "--json", a_path.to_str().unwrap()]);
    assert!(out.status.code().is_some());
    let out = run(&[
        "--all",
        "--solver",
        "r2n-lbfgs",
        "--json",
        b_path.to_str().unwrap(),
    ]);
    assert!(out.status.code().is_some());

    let out = run(&[
        "--profile",
        "nf",
        a_path.to_str().unwrap(),
        b_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "solver,ratio,fraction");

    let mut per_solver: std::collections::BTreeMap<String, Vec<(f64, f64)>> = Default::default();
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        per_solver.entry(parts[0].to_string()).or_default().push((
            parts[1].parse().unwrap(),
            parts[2].parse().unwrap(),
        ));
    }
    assert_eq!(per_solver.len(), 2);
    // From each solver's records alone: solved fraction at the largest
    // ratio, non-decreasing in between, ratios start at 1.
    for (solver, points) in &per_solver {
        assert!(points[0].0 >= 1.0, "{solver}");
        for pair in points.windows(2) {
            assert!(pair[1].0 > pair[0].0, "{solver}: ratios not sorted");
            assert!(pair[1].1 >= pair[0].1, "{solver}: curve decreases");
        }
        let terminal = points.last().unwrap().1;
        assert!(terminal > 0.0 && terminal <= 1.0, "{solver}");
    }
}

#[test]
fn profile_requires_files() {
    let out = run(&["--profile", "nf"]);
    assert_eq!(out.status.code(), Some(1));
}
