//! The `tvpt` command line.
//!
//! Exit codes: 0 success, 1 numeric failure (non-convergence or a failed
//! check), 2 usage or input error. Every output starts with a header that
//! records the tool version and the full run configuration; when `--out` is
//! given a `<out>.manifest.json` is written next to it.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::Error;
use crate::experiments::{
    compare_report, empirical_transition, run_cell, transition_from_cells, AmplitudeLaw,
    ComparisonRow, EmpiricalCell, ExperimentOptions, COMPARE_TOLERANCE,
};
use crate::geometry::{
    jumps_for_epsilon, predicted_curve, sandwich_check, CurveOptions, CurvePoint,
};
use crate::io;
use crate::pattern::{construct_v0, extract_pattern, random_pattern, verify_weak_decomposability};
use crate::solver::{solve_tv_equality, SolveOptions};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "tvpt",
    version,
    about = "Phase transition of 1-D total-variation minimization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Predicted transition curve from Monte Carlo distance estimates.
    Predict(PredictArgs),
    /// Recovery experiments over a grid of (epsilon, delta) cells.
    Empirical(EmpiricalArgs),
    /// Compare a predicted curve with empirical cells.
    Compare(CompareArgs),
    /// Weak-decomposability certificate for a signal file.
    Certify(CertifyArgs),
    /// Solve min ||Bx||_1 s.t. Ax = y.
    Solve(SolveArgs),
    /// Check the two-sided bound between the cone and scaled estimates.
    Sandwich(SandwichArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct Output {
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub n: usize,
    /// `lo:hi:step`, a comma list, or a single value.
    #[arg(long)]
    pub eps: String,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    /// Random gradient patterns averaged per epsilon.
    #[arg(long, default_value_t = 5)]
    pub patterns: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a two-column `epsilon delta_pred` file for plotting.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct EmpiricalArgs {
    #[arg(long)]
    pub n: usize,
    /// Sparsity levels; ignored when `--k` is given.
    #[arg(long)]
    pub eps: Option<String>,
    /// Sampling ratios; ignored when `--m` is given.
    #[arg(long)]
    pub delta: Option<String>,
    /// Single-cell mode: number of jumps.
    #[arg(long)]
    pub k: Option<usize>,
    /// Single-cell mode: number of measurements.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "sign")]
    pub amplitude: Amplitude,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Amplitude {
    Sign,
    Gaussian,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Curve CSV from `predict`.
    #[arg(long)]
    pub predicted: PathBuf,
    /// Cell CSV from `empirical`.
    #[arg(long)]
    pub cells: PathBuf,
    /// Agreement tolerance in delta.
    #[arg(long, default_value_t = COMPARE_TOLERANCE)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    /// Signal file, one number per line.
    #[arg(long)]
    pub signal: PathBuf,
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Consecutive samples closer than this count as flat.
    #[arg(long, default_value_t = 0.0)]
    pub tie_tol: f64,
    /// Random members of V used for the orthogonality check.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// Row-major CSV matrix.
    #[arg(long)]
    pub matrix: PathBuf,
    /// Observations, one per line.
    #[arg(long)]
    pub obs: PathBuf,
    /// Feasibility tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 200_000)]
    pub max_iter: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct SandwichArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<Status, Failure>;

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    CheckFailed,
}

/// Parse a grid spec: `lo:hi:step` (inclusive), `a,b,c`, or a single value.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::invalid(format!("bad grid spec {spec:?}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [lo, hi, step] => {
            let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
            if !(lo.is_finite() && hi.is_finite() && step > 0.0 && lo <= hi) {
                return Err(bad());
            }
            let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
            // rounding keeps 0.1 + 2 * 0.2 printing as 0.5
            (0..count)
                .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        [single] => single.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad());
    }
    Ok(grid)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a Command,
    output: Option<&'a Path>,
    exit_code: i32,
}

fn config_line(cmd: &Command) -> String {
    format!(
        "tvpt {VERSION} {}",
        serde_json::to_string(cmd).expect("config serializes")
    )
}

fn emit(out: Option<&Path>, body: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, body)?,
        None => std::io::stdout().write_all(body)?,
    }
    Ok(())
}

/// JSON document carrying the run header plus `data`.
fn json_doc<T: Serialize>(cmd: &Command, data: &T) -> Vec<u8> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        tool: &'static str,
        version: &'static str,
        config: &'a Command,
        data: &'a T,
    }
    let mut s = serde_json::to_vec_pretty(&Doc {
        tool: "tvpt",
        version: VERSION,
        config: cmd,
        data,
    })
    .expect("serializes");
    s.push(b'\n');
    s
}

fn check_range(name: &str, ok: bool) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Usage(format!("invalid value for --{name}")))
    }
}

fn cmd_predict(cmd: &Command, a: &PredictArgs) -> CmdResult {
    check_range("n", a.n >= 2)?;
    check_range("samples", a.samples >= 2)?;
    check_range("patterns", a.patterns >= 1)?;
    let grid = parse_grid(&a.eps)?;
    check_range("eps", grid.iter().all(|e| (0.0..=1.0).contains(e)))?;
    let opts = CurveOptions {
        samples: a.samples,
        patterns: a.patterns,
        ..Default::default()
    };
    let curve =
        predicted_curve(a.n, &grid, &opts, a.seed).map_err(|e| Failure::Numeric(e.to_string()))?;
    let body = match a.output.format {
        Format::Csv => {
            let mut buf = Vec::new();
            io::write_curve(&mut buf, &[config_line(cmd)], &curve)?;
            buf
        }
        Format::Json => json_doc(cmd, &curve),
    };
    emit(a.output.out.as_deref(), &body)?;
    if let Some(p) = &a.plot_data {
        let mut s = format!("# {}\n# epsilon delta_pred\n", config_line(cmd));
        for c in &curve {
            s.push_str(&format!(
                "{} {}\n",
                io::fmt_f64(c.epsilon),
                io::fmt_f64(c.delta_pred)
            ));
        }
        fs::write(p, s)?;
    }
    Ok(Status::Ok)
}

fn log_unconverged(count: usize) {
    if count > 0 {
        eprintln!("tvpt: {count} solve(s) hit the iteration cap and were counted as failures");
    }
}

fn cmd_empirical(cmd: &Command, a: &EmpiricalArgs) -> CmdResult {
    check_range("n", a.n >= 2)?;
    check_range("trials", a.trials >= 1)?;
    let opts = ExperimentOptions {
        solver: SolveOptions {
            max_iter: a.max_iter,
            ..Default::default()
        },
        amplitude: match a.amplitude {
            Amplitude::Sign => AmplitudeLaw::Sign,
            Amplitude::Gaussian => AmplitudeLaw::Gaussian,
        },
        ..Default::default()
    };
    let cells: Vec<EmpiricalCell> = if let (Some(k), Some(m)) = (a.k, a.m) {
        check_range("k", k >= 1 && k < a.n)?;
        check_range("m", m >= 1)?;
        let o = run_cell(a.n, m, k, a.trials, a.seed, &opts)?;
        log_unconverged(o.not_converged);
        vec![o.cell]
    } else {
        let eps = parse_grid(
            a.eps
                .as_deref()
                .ok_or_else(|| Failure::Usage("--eps is required".into()))?,
        )?;
        let delta = parse_grid(
            a.delta
                .as_deref()
                .ok_or_else(|| Failure::Usage("--delta is required".into()))?,
        )?;
        check_range("eps", eps.iter().all(|e| *e > 0.0 && *e <= 1.0))?;
        check_range("delta", delta.iter().all(|d| *d > 0.0 && *d <= 1.0))?;
        let mut all = Vec::new();
        for &e in &eps {
            check_range("eps", jumps_for_epsilon(a.n, e) >= 1)?;
            let t = empirical_transition(a.n, e, &delta, a.trials, a.seed, &opts)?;
            log_unconverged(t.not_converged);
            all.extend(t.cells);
        }
        all
    };
    let body = match a.output.format {
        Format::Csv => {
            let mut buf = Vec::new();
            io::write_cells(&mut buf, &[config_line(cmd)], &cells)?;
            buf
        }
        Format::Json => json_doc(cmd, &cells),
    };
    emit(a.output.out.as_deref(), &body)?;
    Ok(Status::Ok)
}

/// Group cells by jump count in the order of the curve's epsilon grid.
fn pair_cells(
    curve: &[CurvePoint],
    cells: &[EmpiricalCell],
) -> Result<Vec<ComparisonRow>, Failure> {
    let mismatch = |msg: String| Failure::Usage(format!("epsilon grids do not match: {msg}"));
    let mut by_k: BTreeMap<(usize, usize), Vec<EmpiricalCell>> = BTreeMap::new();
    for c in cells {
        by_k.entry((c.n, c.k)).or_default().push(*c);
    }
    let mut transitions = Vec::new();
    for p in curve {
        let key = (p.n, jumps_for_epsilon(p.n, p.epsilon));
        let mut group = by_k
            .remove(&key)
            .ok_or_else(|| mismatch(format!("no cells for epsilon {}", p.epsilon)))?;
        group.sort_by_key(|c| c.m);
        transitions.push(transition_from_cells(p.epsilon, group)?);
    }
    if let Some(((n, k), _)) = by_k.into_iter().next() {
        return Err(mismatch(format!(
            "cells with n = {n}, k = {k} have no predicted point"
        )));
    }
    compare_report(curve, &transitions, f64::INFINITY).map_err(|e| mismatch(e.to_string()))
}

fn cmd_compare(cmd: &Command, a: &CompareArgs) -> CmdResult {
    check_range("tol", a.tol >= 0.0)?;
    let curve = io::read_curve(fs::File::open(&a.predicted)?)?;
    let cells = io::read_cells(fs::File::open(&a.cells)?)?;
    if curve.is_empty() || cells.is_empty() {
        return Err(Failure::Usage(
            "epsilon grids do not match: empty input".into(),
        ));
    }
    let mut rows = pair_cells(&curve, &cells)?;
    for r in &mut rows {
        r.pass = r.abs_diff <= a.tol;
    }
    let body = match a.output.format {
        Format::Csv => {
            let mut buf = Vec::new();
            io::write_comparison(&mut buf, &[config_line(cmd)], &rows)?;
            buf
        }
        Format::Json => json_doc(cmd, &rows),
    };
    emit(a.output.out.as_deref(), &body)?;
    Ok(if rows.iter().all(|r| r.pass) {
        Status::Ok
    } else {
        Status::CheckFailed
    })
}

fn cmd_certify(cmd: &Command, a: &CertifyArgs) -> CmdResult {
    check_range("tol", a.tol > 0.0)?;
    let x = io::read_vector(&a.signal)?;
    let pattern = extract_pattern(&x, a.tie_tol)?;
    let v0 = construct_v0(&pattern);
    let cert = verify_weak_decomposability(&pattern, &v0, a.tol, a.samples, a.seed)?;
    emit(a.out.as_deref(), &json_doc(cmd, &cert))?;
    Ok(if cert.pass {
        Status::Ok
    } else {
        Status::CheckFailed
    })
}

fn cmd_solve(cmd: &Command, a: &SolveArgs) -> CmdResult {
    check_range("tol", a.tol > 0.0)?;
    let mat = io::read_matrix(&a.matrix)?;
    let y = io::read_vector(&a.obs)?;
    let opts = SolveOptions {
        feas_tol: a.tol,
        max_iter: a.max_iter,
        ..Default::default()
    };
    let report = solve_tv_equality(&mat, &y, &opts)?;
    let body = match a.output.format {
        Format::Csv => format!(
            "# {}\n{}",
            config_line(cmd),
            io::format_vector(&report.x_hat)
        )
        .into_bytes(),
        Format::Json => json_doc(cmd, &report),
    };
    emit(a.output.out.as_deref(), &body)?;
    if report.converged {
        Ok(Status::Ok)
    } else {
        Err(Failure::Numeric(format!(
            "solver stopped after {} iterations with feasibility residual {:e}",
            report.iterations, report.feas_residual
        )))
    }
}

fn cmd_sandwich(cmd: &Command, a: &SandwichArgs) -> CmdResult {
    check_range("n", a.n >= 2)?;
    check_range("k", a.k < a.n)?;
    check_range("samples", a.samples >= 2)?;
    let pattern = random_pattern(a.n, a.k, a.seed)?;
    let report = sandwich_check(&pattern, a.samples, a.seed)?;
    let body = match a.format {
        Format::Json => json_doc(cmd, &report),
        Format::Csv => {
            let r = &report;
            format!(
                "# {}\nn,k,min_scaled,min_scaled_stderr,lambda_star,cone,cone_stderr,difference,difference_stderr,pass\n{},{},{},{},{},{},{},{},{},{}\n",
                config_line(cmd),
                r.n,
                r.jumps,
                io::fmt_f64(r.min_scaled.mean),
                io::fmt_f64(r.min_scaled.stderr),
                io::fmt_f64(r.min_scaled.lambda_star.unwrap_or(f64::NAN)),
                io::fmt_f64(r.cone.mean),
                io::fmt_f64(r.cone.stderr),
                io::fmt_f64(r.difference),
                io::fmt_f64(r.difference_stderr),
                r.pass
            )
            .into_bytes()
        }
    };
    emit(a.out.as_deref(), &body)?;
    Ok(if report.pass {
        Status::Ok
    } else {
        Status::CheckFailed
    })
}

fn out_path(cmd: &Command) -> Option<&Path> {
    match cmd {
        Command::Predict(a) => a.output.out.as_deref(),
        Command::Empirical(a) => a.output.out.as_deref(),
        Command::Compare(a) => a.output.out.as_deref(),
        Command::Certify(a) => a.out.as_deref(),
        Command::Solve(a) => a.output.out.as_deref(),
        Command::Sandwich(a) => a.out.as_deref(),
    }
}

fn dispatch(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Predict(a) => cmd_predict(cmd, a),
        Command::Empirical(a) => cmd_empirical(cmd, a),
        Command::Compare(a) => cmd_compare(cmd, a),
        Command::Certify(a) => cmd_certify(cmd, a),
        Command::Solve(a) => cmd_solve(cmd, a),
        Command::Sandwich(a) => cmd_sandwich(cmd, a),
    }
}

/// `TVPT_THREADS`, when set to a positive integer, caps the worker pool.
fn thread_cap() -> Option<usize> {
    std::env::var("TVPT_THREADS")
        .ok()?
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&t| t > 0)
}

/// Run the CLI on `args` (including the program name) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_cap() {
        builder = builder.num_threads(t);
    }
    let result = match builder.build() {
        Ok(pool) => pool.install(|| dispatch(&cli.command)),
        Err(e) => Err(Failure::Numeric(e.to_string())),
    };
    let code = match result {
        Ok(Status::Ok) => 0,
        Ok(Status::CheckFailed) => 1,
        Err(Failure::Numeric(msg)) => {
            eprintln!("tvpt: {msg}");
            1
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("tvpt: {msg}");
            2
        }
    };
    if let Some(out) = out_path(&cli.command) {
        if code != 2 {
            let manifest = Manifest {
                tool: "tvpt",
                version: VERSION,
                config: &cli.command,
                output: Some(out),
                exit_code: code,
            };
            let mut path = out.as_os_str().to_owned();
            path.push(".manifest.json");
            let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
            if let Err(e) = fs::write(PathBuf::from(path), body + "\n") {
                eprintln!("tvpt: cannot write manifest: {e}");
                return 2;
            }
        }
    }
    code
}
