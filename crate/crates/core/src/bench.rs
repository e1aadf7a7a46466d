//! Benchmark sweeps: transcribe and solve bundled or user problems over
//! grid sizes and backends, and render the results as CSV, markdown or
//! gnuplot data.
//!
//! A config file is TOML:
//!
//! ```toml
//! scheme = "trapezoid"            # default for every case
//! backends = ["serial", "parallel"]
//! threads = 4                     # parallel workers, 0 = all cores
//! tol = 1e-8
//! max_iter = 3000
//! allow_large = false             # permit grid sizes above 20000
//!
//! [[case]]
//! problem = "goddard"             # bundled name, or any label with `file`
//! # file = "rocket.ocp"
//! grid_sizes = [2500, 10000]
//! expected_objective = 1.0125350771
//! tolerance = 1e-3
//! relative = true
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{Backend, BackendError, BackendKind};
use crate::dsl::{parse_ocp, DslError};
use crate::ipm::{solve, IpmOptions, Status};
use crate::problems;
use crate::transcription::{transcribe, InitPolicy, Scheme, StructuredNlp, TranscriptionError};

/// Largest grid size accepted without `allow_large`.
pub const DESK_SCALE_MAX: usize = 20_000;

/// Fine-grid (N = 20000, trapezoid) objectives of the bundled problems.
pub fn reference_objective(problem: &str) -> Option<f64> {
    match problem {
        "double_integrator" => Some(6.0),
        "goddard" => Some(1.0125350771),
        "quadrotor" => Some(4.2679542199),
        _ => None,
    }
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{problem}: {source}")]
    Dsl { problem: String, source: DslError },
    #[error("{problem}: {source}")]
    Transcription { problem: String, source: TranscriptionError },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Embedded(&'static str),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub objective: f64,
    pub tolerance: f64,
    /// Scale the tolerance by `max(1, |objective|)`.
    pub relative: bool,
}

impl Expected {
    pub fn accepts(&self, value: f64) -> bool {
        let tol = if self.relative { self.tolerance * self.objective.abs().max(1.0) } else { self.tolerance };
        (value - self.objective).abs() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCase {
    pub problem: String,
    pub source: Source,
    pub scheme: Scheme,
    pub grid_sizes: Vec<usize>,
    pub backends: Vec<BackendKind>,
    pub expected: Option<Expected>,
}

impl BenchCase {
    /// Bundled problem with its reference objective at tolerance 1e-3.
    pub fn bundled(problem: &str, grid_sizes: Vec<usize>, backends: Vec<BackendKind>) -> Result<Self, BenchError> {
        let src = problems::by_name(problem).ok_or_else(|| BenchError::Config(format!("unknown problem '{problem}'")))?;
        Ok(BenchCase {
            problem: problem.to_string(),
            source: Source::Embedded(src),
            scheme: Scheme::Trapezoid,
            grid_sizes,
            backends,
            expected: reference_objective(problem).map(|objective| Expected {
                objective,
                tolerance: 1e-3,
                relative: problem != "double_integrator",
            }),
        })
    }

    pub fn validate(&self, allow_large: bool) -> Result<(), BenchError> {
        let err = |m: String| Err(BenchError::Config(format!("case '{}': {m}", self.problem)));
        if self.grid_sizes.is_empty() {
            return err("no grid sizes".into());
        }
        if self.grid_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return err("grid sizes must be strictly increasing".into());
        }
        if self.grid_sizes[0] == 0 {
            return err("grid sizes must be positive".into());
        }
        let top = *self.grid_sizes.last().unwrap();
        if top > DESK_SCALE_MAX && !allow_large {
            return err(format!("grid size {top} exceeds {DESK_SCALE_MAX}; set allow_large to run it"));
        }
        if self.backends.is_empty() {
            return err("at least one backend is required".into());
        }
        Ok(())
    }

    pub fn transcribe(&self, grid_size: usize) -> Result<StructuredNlp, BenchError> {
        let text;
        let src = match &self.source {
            Source::Embedded(s) => *s,
            Source::File(p) => {
                text = std::fs::read_to_string(p).map_err(|source| BenchError::Io { path: p.clone(), source })?;
                &text
            }
        };
        let p = parse_ocp(src).map_err(|source| BenchError::Dsl { problem: self.problem.clone(), source })?;
        transcribe(&p, &self.problem, self.scheme, grid_size, &InitPolicy::default())
            .map_err(|source| BenchError::Transcription { problem: self.problem.clone(), source })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub cases: Vec<BenchCase>,
    pub options: IpmOptions,
    pub allow_large: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scheme: Option<String>,
    backends: Option<Vec<String>>,
    threads: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    #[serde(default)]
    allow_large: bool,
    #[serde(rename = "case", default)]
    cases: Vec<RawCase>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCase {
    problem: String,
    file: Option<PathBuf>,
    scheme: Option<String>,
    grid_sizes: Vec<usize>,
    backends: Option<Vec<String>>,
    expected_objective: Option<f64>,
    tolerance: Option<f64>,
    #[serde(default)]
    relative: bool,
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn parse_backend(name: &str, threads: usize) -> Result<BackendKind, BenchError> {
    match name {
        "serial" => Ok(BackendKind::Serial),
        "parallel" => Ok(BackendKind::Parallel { threads: if threads == 0 { default_threads() } else { threads } }),
        other => Err(BenchError::Config(format!("unknown backend '{other}'"))),
    }
}

fn parse_scheme(s: &str) -> Result<Scheme, BenchError> {
    s.parse().map_err(|e: TranscriptionError| BenchError::Config(e.to_string()))
}

impl BenchConfig {
    /// The double integrator, Goddard and Quadrotor on both backends.
    pub fn default_suite() -> Self {
        let backends = vec![BackendKind::Serial, BackendKind::Parallel { threads: default_threads() }];
        let case = |p, n: &[usize]| BenchCase::bundled(p, n.to_vec(), backends.clone()).expect("bundled problem");
        BenchConfig {
            cases: vec![
                case("double_integrator", &[1000, 4000]),
                case("goddard", &[2500, 10000]),
                case("quadrotor", &[2500, 10000]),
            ],
            options: IpmOptions::default(),
            allow_large: false,
        }
    }

    /// Parses a TOML config; relative `file` paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, BenchError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.message().to_string()))?;
        let threads = raw.threads.unwrap_or(0);
        let names = |v: &Option<Vec<String>>| -> Result<Option<Vec<BackendKind>>, BenchError> {
            v.as_ref().map(|v| v.iter().map(|b| parse_backend(b, threads)).collect()).transpose()
        };
        let backends = names(&raw.backends)?.unwrap_or_else(|| vec![BackendKind::Serial]);
        let scheme = raw.scheme.as_deref().map(parse_scheme).transpose()?.unwrap_or(Scheme::Trapezoid);
        let mut options = IpmOptions::default();
        if let Some(t) = raw.tol {
            options.tol = t;
        }
        if let Some(m) = raw.max_iter {
            options.max_iter = m;
        }
        options.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        if raw.cases.is_empty() {
            return Err(BenchError::Config("no [[case]] entries".into()));
        }
        let mut cases = Vec::new();
        for rc in raw.cases {
            let source = match &rc.file {
                Some(f) => Source::File(base.join(f)),
                None => Source::Embedded(problems::by_name(&rc.problem).ok_or_else(|| {
                    BenchError::Config(format!("unknown problem '{}' (give a file)", rc.problem))
                })?),
            };
            let expected = match (rc.expected_objective, rc.tolerance) {
                (Some(objective), tol) => Some(Expected { objective, tolerance: tol.unwrap_or(1e-3), relative: rc.relative }),
                (None, Some(_)) => return Err(BenchError::Config(format!("case '{}': tolerance without expected_objective", rc.problem))),
                (None, None) => None,
            };
            let case = BenchCase {
                scheme: rc.scheme.as_deref().map(parse_scheme).transpose()?.unwrap_or(scheme),
                backends: names(&rc.backends)?.unwrap_or_else(|| backends.clone()),
                problem: rc.problem,
                source,
                grid_sizes: rc.grid_sizes,
                expected,
            };
            case.validate(raw.allow_large)?;
            cases.push(case);
        }
        Ok(BenchConfig { cases, options, allow_large: raw.allow_large })
    }

    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: path.into(), source })?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Off-by amount when `nvar + m_con` misses the documented size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("nvar + m_con = {actual}, expected {expected} ± {slack}")]
pub struct DimensionError {
    pub actual: usize,
    pub expected: usize,
    pub slack: usize,
}

/// Checks the problem size against `10N` (Goddard) or `20N` (Quadrotor).
/// Other problems have no documented size and always pass.
pub fn check_dimensions(problem: &str, grid_size: usize, nvar: usize, m_con: usize) -> Result<(), DimensionError> {
    let (per_node, slack) = match problem {
        "goddard" => (10, 12),
        "quadrotor" => (20, 25),
        _ => return Ok(()),
    };
    let expected = per_node * grid_size;
    let actual = nvar + m_con;
    if actual.abs_diff(expected) <= slack {
        Ok(())
    } else {
        Err(DimensionError { actual, expected, slack })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub problem: String,
    pub grid_size: usize,
    pub backend: String,
    pub status: String,
    pub objective: f64,
    pub iterations: usize,
    pub wall: f64,
    pub derivatives: f64,
    pub factorization: f64,
    pub solves: f64,
    pub nvar: usize,
    pub m_con: usize,
    pub nnz_kkt: usize,
    pub nnz_l: usize,
    /// `None` when the case has no expected objective.
    pub expected_ok: Option<bool>,
}

impl BenchRow {
    pub fn ok(&self) -> bool {
        self.status == Status::Optimal.as_str() && self.expected_ok != Some(false)
    }
}

fn backend_label(k: BackendKind) -> String {
    match k {
        BackendKind::Serial => "serial".into(),
        BackendKind::Parallel { threads } => format!("parallel({threads})"),
        BackendKind::Accelerator => "accelerator".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Runs every (case, N, backend) combination in order. Solver failures are
/// recorded as rows; input errors abort.
pub fn run_bench(config: &BenchConfig, mut progress: impl FnMut(&BenchRow)) -> Result<BenchReport, BenchError> {
    let mut rows = Vec::new();
    for case in &config.cases {
        case.validate(config.allow_large)?;
        let backends = case.backends.iter().map(|&k| Backend::new(k)).collect::<Result<Vec<_>, _>>()?;
        for &n in &case.grid_sizes {
            let nlp = case.transcribe(n)?;
            for b in &backends {
                let t = Instant::now();
                let s = solve(&nlp, &config.options, b);
                let row = BenchRow {
                    problem: case.problem.clone(),
                    grid_size: n,
                    backend: backend_label(b.kind()),
                    status: s.status.as_str().into(),
                    objective: s.objective,
                    iterations: s.iterations,
                    wall: t.elapsed().as_secs_f64(),
                    derivatives: s.timings.derivatives,
                    factorization: s.timings.factorization,
                    solves: s.timings.solves,
                    nvar: nlp.nvar(),
                    m_con: nlp.ncon(),
                    nnz_kkt: s.nnz_kkt,
                    nnz_l: s.nnz_l,
                    expected_ok: case.expected.as_ref().map(|e| e.accepts(s.objective)),
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(BenchReport { rows })
}

const HEADER: [&str; 15] = [
    "problem",
    "N",
    "backend",
    "status",
    "objective",
    "iterations",
    "wall_s",
    "derivatives_s",
    "factorization_s",
    "solves_s",
    "nvar",
    "m_con",
    "nnz_kkt",
    "nnz_l",
    "expected",
];

impl BenchRow {
    fn cells(&self) -> [String; 15] {
        [
            self.problem.clone(),
            self.grid_size.to_string(),
            self.backend.clone(),
            self.status.clone(),
            format!("{:.10}", self.objective),
            self.iterations.to_string(),
            format!("{:.4}", self.wall),
            format!("{:.4}", self.derivatives),
            format!("{:.4}", self.factorization),
            format!("{:.4}", self.solves),
            self.nvar.to_string(),
            self.m_con.to_string(),
            self.nnz_kkt.to_string(),
            self.nnz_l.to_string(),
            match self.expected_ok {
                Some(true) => "pass".into(),
                Some(false) => "FAIL".into(),
                None => "-".into(),
            },
        ]
    }
}

impl BenchReport {
    /// Exit status of a bench run: every solve optimal and every expected
    /// objective matched.
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(BenchRow::ok)
    }

    /// The report with timing columns zeroed, for comparing runs.
    pub fn without_timings(&self) -> BenchReport {
        let rows = self
            .rows
            .iter()
            .map(|r| BenchRow { wall: 0.0, derivatives: 0.0, factorization: 0.0, solves: 0.0, ..r.clone() })
            .collect();
        BenchReport { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut s = HEADER.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.cells().join(","));
            s.push('\n');
        }
        s
    }

    /// Markdown table with columns padded to a common width.
    pub fn to_markdown(&self) -> String {
        let cells: Vec<[String; 15]> = self.rows.iter().map(BenchRow::cells).collect();
        let mut width: Vec<usize> = HEADER.iter().map(|h| h.len()).collect();
        for c in &cells {
            for (w, v) in width.iter_mut().zip(c) {
                *w = (*w).max(v.len());
            }
        }
        let line = |vals: &mut dyn Iterator<Item = &str>| {
            let mut s = String::from("|");
            for (v, w) in vals.zip(&width) {
                let _ = write!(s, " {v:<w$} |");
            }
            s.push('\n');
            s
        };
        let mut s = line(&mut HEADER.iter().copied());
        s.push('|');
        for w in &width {
            s.push_str(&"-".repeat(w + 2));
            s.push('|');
        }
        s.push('\n');
        for c in &cells {
            s.push_str(&line(&mut c.iter().map(String::as_str)));
        }
        s
    }

    /// One gnuplot data block per (problem, backend), blocks separated by two
    /// blank lines so `index k` selects one curve.
    pub fn to_gnuplot(&self) -> String {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            if !keys.contains(&(&r.problem, &r.backend)) {
                keys.push((&r.problem, &r.backend));
            }
        }
        let mut s = String::new();
        for (i, (p, b)) in keys.iter().enumerate() {
            if i > 0 {
                s.push_str("\n\n");
            }
            let _ = writeln!(s, "# {p} {b}\n# N wall_s derivatives_s factorization_s solves_s iterations");
            for r in self.rows.iter().filter(|r| r.problem == *p && r.backend == *b) {
                let _ = writeln!(
                    s,
                    "{} {:.6} {:.6} {:.6} {:.6} {}",
                    r.grid_size, r.wall, r.derivatives, r.factorization, r.solves, r.iterations
                );
            }
        }
        s
    }

    /// Pairs `(N, 4N)` of the same problem and backend whose objectives
    /// differ by more than `tol * (1 + |J_4N|)`.
    pub fn cross_grid_violations(&self, tol: f64) -> Vec<(&BenchRow, &BenchRow)> {
        let mut out = Vec::new();
        for a in &self.rows {
            for b in &self.rows {
                let pair = a.problem == b.problem && a.backend == b.backend && b.grid_size == 4 * a.grid_size;
                // NaN objectives count as violations
                if pair && !((a.objective - b.objective).abs() <= tol * (1.0 + b.objective.abs())) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Least-squares line `y ≈ a + b x`; returns `(a, b, max_i |r_i| / |y_i|)`.
pub fn affine_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icpt = my - slope * mx;
    let res = x.iter().zip(y).map(|(a, b)| (b - icpt - slope * a).abs() / b.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
    (icpt, slope, res)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_fit_recovers_a_line() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 + 7.0 * v).collect();
        let (a, b, r) = affine_fit(&x, &y);
        assert!((a - 3.0).abs() < 1e-12 && (b - 7.0).abs() < 1e-12 && r < 1e-14);
        let (_, _, r) = affine_fit(&x, &[1.0, 4.0, 16.0, 64.0]);
        assert!(r > 0.1);
    }

    #[test]
    fn dimension_slack() {
        assert!(check_dimensions("goddard", 1000, 5000, 4988).is_ok());
        assert!(check_dimensions("goddard", 1000, 5000, 5013).is_err());
        assert!(check_dimensions("quadrotor", 1000, 10000, 10025).is_ok());
        assert!(check_dimensions("double_integrator", 7, 1, 1).is_ok());
    }

    #[test]
    fn case_validation() {
        let mut c = BenchCase::bundled("goddard", vec![100, 100], vec![BackendKind::Serial]).unwrap();
        assert!(c.validate(false).is_err());
        c.grid_sizes = vec![100, 30000];
        assert!(c.validate(false).is_err());
        assert!(c.validate(true).is_ok());
        c.backends.clear();
        assert!(c.validate(true).is_err());
    }

    #[test]
    fn config_parsing() {
        let text = r#"
            backends = ["serial", "parallel"]
            threads = 3
            tol = 1e-7

            [[case]]
            problem = "double_integrator"
            grid_sizes = [10, 20]
            expected_objective = 6.0
            tolerance = 1e-2

            [[case]]
            problem = "mine"
            file = "p.ocp"
            scheme = "euler"
            grid_sizes = [5]
            backends = ["serial"]
        "#;
        let c = BenchConfig::from_toml(text, Path::new("/x")).unwrap();
        assert_eq!(c.options.tol, 1e-7);
        assert_eq!(c.cases[0].backends, vec![BackendKind::Serial, BackendKind::Parallel { threads: 3 }]);
        assert_eq!(c.cases[1].source, Source::File("/x/p.ocp".into()));
        assert_eq!(c.cases[1].scheme, Scheme::Euler);
        assert!(BenchConfig::from_toml("[[case]]\nproblem = \"nope\"\ngrid_sizes = [1]\n", Path::new(".")).is_err());
        assert!(BenchConfig::from_toml("bogus = 1\n", Path::new(".")).is_err());
    }

    #[test]
    fn markdown_columns_align() {
        let row = BenchRow {
            problem: "goddard".into(),
            grid_size: 100,
            backend: "serial".into(),
            status: "optimal".into(),
            objective: 1.0,
            iterations: 3,
            wall: 0.5,
            derivatives: 0.1,
            factorization: 0.1,
            solves: 0.1,
            nvar: 10,
            m_con: 5,
            nnz_kkt: 40,
            nnz_l: 60,
            expected_ok: None,
        };
        let r = BenchReport { rows: vec![row.clone(), BenchRow { problem: "quadrotor".into(), ..row }] };
        let md = r.to_markdown();
        let lens: Vec<usize> = md.lines().map(|l| l.chars().count()).collect();
        assert!(lens.windows(2).all(|w| w[0] == w[1]), "{md}");
        assert_eq!(r.to_csv().lines().count(), 3);
        assert_eq!(r.to_gnuplot().matches("# N").count(), 2);
    }
}
