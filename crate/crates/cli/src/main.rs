//! `octrans`: solve, benchmark and check `.ocp` optimal control problems.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use octrans::backend::{Backend, BackendKind};
use octrans::bench::{run_bench, BenchConfig, BenchRow};
use octrans::dsl::{parse_ocp, OcpProblem};
use octrans::ipm::{solve, IpmOptions, Status};
use octrans::problems;
use octrans::transcription::{transcribe, InitPolicy, Scheme};

const SOLVER_FAILURE: u8 = 1;
const INPUT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "octrans", version, about = "Optimal control by direct transcription and a sparse interior-point solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Euler,
    Trapezoid,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Serial,
    Parallel,
}

#[derive(Subcommand)]
enum Command {
    /// Transcribe and solve a problem file (or a bundled problem by name).
    Solve {
        file: String,
        #[arg(long, value_enum, default_value = "trapezoid")]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 100)]
        grid_size: usize,
        #[arg(long, value_enum, default_value = "serial")]
        backend: BackendArg,
        /// Worker threads of the parallel backend (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 3000)]
        max_iter: usize,
        /// Print one line per interior-point iteration.
        #[arg(long)]
        verbose: bool,
        /// Write the final report, primal point and multipliers as JSON.
        #[arg(long, value_name = "OUT")]
        json: Option<PathBuf>,
    },
    /// Run a benchmark sweep (the bundled suite without a config).
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_name = "OUT")]
        csv: Option<PathBuf>,
        /// Gnuplot data file of timings against N.
        #[arg(long, value_name = "OUT")]
        gnuplot: Option<PathBuf>,
        /// Allow grid sizes above the desk-scale cap.
        #[arg(long)]
        allow_large: bool,
    },
    /// Parse and validate a problem file without solving it.
    Check { file: String },
}

/// Input failure: message for stderr, exit code 2.
struct InputError(String);

impl InputError {
    fn new(msg: impl std::fmt::Display) -> Self {
        InputError(format!("error: {msg}"))
    }
}

fn load(file: &str) -> Result<(String, OcpProblem), InputError> {
    let path = Path::new(file);
    let src = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => match problems::by_name(file) {
            Some(s) if !path.exists() => s.to_string(),
            _ => return Err(InputError::new(format!("{file}: {e}"))),
        },
    };
    // DSL errors are already `line <L>: <message>`
    let p = parse_ocp(&src).map_err(|e| InputError(e.to_string()))?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| file.to_string());
    Ok((name, p))
}

fn write(path: &Path, text: &str) -> Result<(), InputError> {
    std::fs::write(path, text).map_err(|e| InputError::new(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    file: &str,
    scheme: SchemeArg,
    grid_size: usize,
    backend: BackendArg,
    threads: Option<usize>,
    tol: f64,
    max_iter: usize,
    verbose: bool,
    json_out: Option<&Path>,
) -> Result<u8, InputError> {
    let (name, p) = load(file)?;
    let scheme = match scheme {
        SchemeArg::Euler => Scheme::Euler,
        SchemeArg::Trapezoid => Scheme::Trapezoid,
    };
    let nlp = transcribe(&p, &name, scheme, grid_size, &InitPolicy::default()).map_err(InputError::new)?;
    let kind = match backend {
        BackendArg::Serial => BackendKind::Serial,
        BackendArg::Parallel => BackendKind::Parallel {
            threads: threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
        },
    };
    let backend = Backend::new(kind).map_err(InputError::new)?;
    let opts = IpmOptions { tol, max_iter, verbose, ..Default::default() };
    opts.validate().map_err(InputError::new)?;

    let s = solve(&nlp, &opts, &backend);
    println!(
        "{name}: N = {grid_size}, nvar = {}, m_con = {}, status {}, objective {:.10}, {} iterations, {:.3} s",
        nlp.nvar(),
        nlp.ncon(),
        s.status,
        s.objective,
        s.iterations,
        s.timings.total
    );
    if let Some(msg) = &s.message {
        println!("{msg}");
    }
    if let Some(path) = json_out {
        let mut report = s.report();
        report["problem"] = json!(name);
        report["grid_size"] = json!(grid_size);
        report["nvar"] = json!(nlp.nvar());
        report["m_con"] = json!(nlp.ncon());
        report["x"] = json!(s.x);
        report["lambda"] = json!(s.lambda);
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write(path, &text)?;
    }
    Ok(if s.status == Status::Optimal { 0 } else { SOLVER_FAILURE })
}

fn cmd_bench(config: Option<&Path>, csv: Option<&Path>, gnuplot: Option<&Path>, allow_large: bool) -> Result<u8, InputError> {
    let mut cfg = match config {
        Some(p) => BenchConfig::from_file(p).map_err(InputError::new)?,
        None => BenchConfig::default_suite(),
    };
    cfg.allow_large |= allow_large;
    let progress = |r: &BenchRow| {
        eprintln!(
            "{} N={} {}: {} {:.10} ({} it, {:.3} s)",
            r.problem, r.grid_size, r.backend, r.status, r.objective, r.iterations, r.wall
        )
    };
    let report = run_bench(&cfg, progress).map_err(InputError::new)?;
    print!("{}", report.to_markdown());
    for (a, b) in report.cross_grid_violations(1e-3) {
        println!("note: {} objectives at N = {} and N = {} differ by {:.3e}", a.problem, a.grid_size, b.grid_size, (a.objective - b.objective).abs());
    }
    if let Some(p) = csv {
        write(p, &report.to_csv())?;
    }
    if let Some(p) = gnuplot {
        write(p, &report.to_gnuplot())?;
    }
    Ok(if report.all_ok() { 0 } else { SOLVER_FAILURE })
}

fn cmd_check(file: &str) -> Result<u8, InputError> {
    let (name, p) = load(file)?;
    println!(
        "{name}: ok ({} states, {} controls, {} variables, {} constraints)",
        p.state_dim(),
        p.control_dim(),
        p.variable_dim(),
        p.constraints.len()
    );
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { file, scheme, grid_size, backend, threads, tol, max_iter, verbose, json } => {
            cmd_solve(file, *scheme, *grid_size, *backend, *threads, *tol, *max_iter, *verbose, json.as_deref())
        }
        Command::Bench { config, csv, gnuplot, allow_large } => {
            cmd_bench(config.as_deref(), csv.as_deref(), gnuplot.as_deref(), *allow_large)
        }
        Command::Check { file } => cmd_check(file),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(InputError(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(INPUT_ERROR)
        }
    }
}
