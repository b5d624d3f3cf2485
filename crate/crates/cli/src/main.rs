//! Command-line front end: runs the penalty solver on registry or JSON
//! problems, emits machine-readable results and iteration traces, and
//! aggregates result files into performance-profile data.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use l2penalty::problem::{Problem, QpJson};
use l2penalty::subsolvers::QnKind;
use l2penalty::{solve, InnerConfig, OuterConfig, SolveReport, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SolverChoice {
    R2,
    R2nLbfgs,
    R2nLsr1,
}

impl SolverChoice {
    fn name(self) -> &'static str {
        match self {
            SolverChoice::R2 => "r2",
            SolverChoice::R2nLbfgs => "r2n-lbfgs",
            SolverChoice::R2nLsr1 => "r2n-lsr1",
        }
    }

    fn qn_kind(self) -> Option<QnKind> {
        match self {
            SolverChoice::R2 => None,
            SolverChoice::R2nLbfgs => Some(QnKind::Lbfgs),
            SolverChoice::R2nLsr1 => Some(QnKind::Lsr1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProfileMetric {
    Nf,
    Ngrad,
    Nc,
}

#[derive(Debug, Parser)]
#[command(name = "solve", disable_help_flag = false)]
struct Args {
    /// Registry problem name.
    #[arg(long, conflicts_with_all = ["all", "qp"])]
    problem: Option<String>,

    /// Run every registry problem.
    #[arg(long, conflicts_with = "qp")]
    all: bool,

    /// Quadratic program from a JSON file.
    #[arg(long)]
    qp: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = SolverChoice::R2)]
    solver: SolverChoice,

    /// Final tolerance for the KKT and feasibility tests.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,

    /// Initial penalty weight.
    #[arg(long, default_value_t = 500.0)]
    tau0: f64,

    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 300.0)]
    max_time: f64,

    /// Write results as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,

    /// Write the inner-iteration trace as CSV to this path.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// Aggregate result files into performance-profile CSV instead of
    /// solving; takes the metric and the result files as arguments.
    #[arg(long, value_enum)]
    profile: Option<ProfileMetric>,

    /// Result files for --profile.
    #[arg(value_name = "FILE")]
    files: Vec<PathBuf>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct RunRecord {
    problem: String,
    solver: String,
    status: SolveStatus,
    x: Vec<f64>,
    y_ls: Vec<f64>,
    kkt_residual: f64,
    feasibility: f64,
    tau_final: f64,
    outer_iters: usize,
    inner_iters: usize,
    n_f: u64,
    n_grad: u64,
    n_c: u64,
    n_jac: u64,
    wall_time_s: f64,
}

impl RunRecord {
    fn from_report(problem: &str, solver: &str, rep: &SolveReport) -> Self {
        RunRecord {
            problem: problem.to_string(),
            solver: solver.to_string(),
            status: rep.status,
            x: rep.x.iter().copied().collect(),
            y_ls: rep.y_ls.iter().copied().collect(),
            kkt_residual: rep.kkt_residual,
            feasibility: rep.feasibility,
            tau_final: rep.tau_final,
            outer_iters: rep.outer_iters,
            inner_iters: rep.total_inner_iters,
            n_f: rep.counters.n_f,
            n_grad: rep.counters.n_grad,
            n_c: rep.counters.n_c,
            n_jac: rep.counters.n_jac,
            wall_time_s: rep.wall_time_s,
        }
    }
}

enum LogLevel {
    Off,
    Info,
    Debug,
}

fn log_level() -> LogLevel {
    match std::env::var("SOLVER_LOG").as_deref() {
        Ok("debug") => LogLevel::Debug,
        Ok("info") => LogLevel::Info,
        _ => LogLevel::Off,
    }
}

fn status_exit(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::FirstOrder => 0,
        SolveStatus::InfeasibleStationary => 2,
        SolveStatus::MaxIter | SolveStatus::TimeLimit => 3,
    }
}

fn run_one(name: &str, p: &Problem, args: &Args) -> Result<(RunRecord, SolveReport), String> {
    let cfg = OuterConfig {
        tau0: args.tau0,
        eps_final: args.tol,
        max_time_s: args.max_time,
        ..Default::default()
    };
    let inner = InnerConfig {
        qn_kind: args.solver.qn_kind(),
        ..Default::default()
    };
    let rep = solve(p, &cfg, &inner).map_err(|e| format!("{name}: {e}"))?;
    match log_level() {
        LogLevel::Off => {}
        level => {
            for row in &rep.outer_trace {
                eprintln!(
                    "{name} k={} tau={:.3e} eps={:.3e} theta_sqrt={:.3e} kkt={:.3e} inner={}",
                    row.k, row.tau, row.eps, row.theta_sqrt, row.kkt_residual, row.inner_iters
                );
            }
            if matches!(level, LogLevel::Debug) {
                for (k, row) in &rep.inner_trace {
                    eprintln!(
                        "{name} k={k} j={} f={:.6e} |c|={:.3e} xi={:.3e} sigma={:.3e} rho={:.3e} accepted={}",
                        row.j, row.f, row.c_norm, row.xi, row.sigma, row.rho, row.accepted
                    );
                }
            }
        }
    }
    Ok((
        RunRecord::from_report(name, args.solver.name(), &rep),
        rep,
    ))
}

fn write_trace(path: &PathBuf, reports: &[(String, SolveReport)]) -> Result<(), String> {
    let mut out = String::from(
        "problem,k,j,f,c_norm,xi,sigma,rho,accepted,prox_newton_iters,decrease\n",
    );
    for (name, rep) in reports {
        for (k, row) in &rep.inner_trace {
            out.push_str(&format!(
                "{name},{k},{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{},{},{:.17e}\n",
                row.j,
                row.f,
                row.c_norm,
                row.xi,
                row.sigma,
                row.rho,
                row.accepted,
                row.prox_newton_iters,
                row.decrease
            ));
        }
    }
    fs::write(path, out).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_records(files: &[PathBuf]) -> Result<Vec<RunRecord>, String> {
    let mut records = Vec::new();
    for file in files {
        let text = fs::read_to_string(file).map_err(|e| format!("{}: {e}", file.display()))?;
        match serde_json::from_str::<Vec<RunRecord>>(&text) {
            Ok(mut batch) => records.append(&mut batch),
            Err(_) => {
                let one: RunRecord = serde_json::from_str(&text)
                    .map_err(|e| format!("{}: {e}", file.display()))?;
                records.push(one);
            }
        }
    }
    Ok(records)
}

fn metric_of(r: &RunRecord, metric: ProfileMetric) -> f64 {
    match metric {
        ProfileMetric::Nf => r.n_f as f64,
        ProfileMetric::Ngrad => r.n_grad as f64,
        ProfileMetric::Nc => r.n_c as f64,
    }
}

/// Dolan–Moré performance profile: for each solver, the fraction of
/// problems whose cost ratio to the per-problem best is at most t.
fn profile(records: &[RunRecord], metric: ProfileMetric) -> String {
    let mut problems: Vec<String> = records.iter().map(|r| r.problem.clone()).collect();
    problems.sort();
    problems.dedup();
    let mut solvers: Vec<String> = records.iter().map(|r| r.solver.clone()).collect();
    solvers.sort();
    solvers.dedup();

    // ratios[solver][problem]; failures and missing runs are ∞.
    let mut ratios: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (pi, problem) in problems.iter().enumerate() {
        let best = records
            .iter()
            .filter(|r| {
                r.problem == *problem && r.status == SolveStatus::FirstOrder
            })
            .map(|r| metric_of(r, metric))
            .fold(f64::INFINITY, f64::min);
        for solver in &solvers {
            let entry = ratios
                .entry(solver.as_str())
                .or_insert_with(|| vec![f64::INFINITY; problems.len()]);
            let run = records
                .iter()
                .find(|r| r.problem == *problem && r.solver == *solver);
            if let Some(r) = run {
                if r.status == SolveStatus::FirstOrder && best.is_finite() {
                    entry[pi] = metric_of(r, metric) / best;
                }
            }
        }
    }

    let mut thresholds: Vec<f64> = ratios
        .values()
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .collect();
    thresholds.push(1.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut out = String::from("solver,ratio,fraction\n");
    let np = problems.len() as f64;
    for solver in &solvers {
        let rs = &ratios[solver.as_str()];
        for t in &thresholds {
            let frac = rs.iter().filter(|r| **r <= *t).count() as f64 / np;
            out.push_str(&format!("{solver},{t},{frac}\n"));
        }
    }
    out
}

fn run(args: &Args) -> Result<u8, String> {
    if let Some(metric) = args.profile {
        if args.files.is_empty() {
            return Err("--profile requires at least one result file".to_string());
        }
        let records = load_records(&args.files)?;
        print!("{}", profile(&records, metric));
        return Ok(0);
    }
    if !args.files.is_empty() {
        return Err("positional files are only valid with --profile".to_string());
    }

    let targets: Vec<(String, Problem)> = if args.all {
        l2penalty::registry_names()
            .into_iter()
            .map(|n| {
                let p = l2penalty::registry_get(&n).expect("registry name");
                (n, p)
            })
            .collect()
    } else if let Some(path) = &args.qp {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let qp: QpJson =
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let p = qp.into_problem().map_err(|e| e.to_string())?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "qp".to_string());
        vec![(name, p)]
    } else if let Some(name) = &args.problem {
        let p = l2penalty::registry_get(name).map_err(|e| e.to_string())?;
        vec![(name.clone(), p)]
    } else {
        return Err("one of --problem, --all, --qp is required".to_string());
    };

    let mut records = Vec::new();
    let mut reports = Vec::new();
    let mut exit = 0u8;
    for (name, p) in &targets {
        let (record, rep) = run_one(name, p, args)?;
        println!(
            "{name}: {} kkt={:.3e} feas={:.3e} outer={} inner={} n_f={}",
            serde_json::to_value(record.status).unwrap().as_str().unwrap(),
            record.kkt_residual,
            record.feasibility,
            record.outer_iters,
            record.inner_iters,
            record.n_f
        );
        exit = exit.max(status_exit(record.status));
        records.push(record);
        reports.push((name.clone(), rep));
    }

    if let Some(path) = &args.json {
        let text = if args.all {
            serde_json::to_string_pretty(&records)
        } else {
            serde_json::to_string_pretty(&records[0])
        }
        .expect("serializable records");
        fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if let Some(path) = &args.trace {
        write_trace(path, &reports)?;
    }
    Ok(exit)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            if e.use_stderr() {
                let _ = writeln!(std::io::stderr(), "{e}");
                return ExitCode::from(1);
            }
            // --help / --version.
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
