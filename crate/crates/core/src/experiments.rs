//! Randomized recovery experiments over the `(epsilon, delta)` phase plane.
//!
//! Conventions: `epsilon = k / (n - 1)` counts nonzero gradients, `delta = m / n`
//! counts measurements. Within a cell every trial draws its own signal and
//! matrix from `(cell seed, trial index)`. Matrix rows are seeded per row, so
//! cells that share a seed and differ only in `m` use nested measurement
//! matrices.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffop::tv_seminorm;
use crate::error::{Error, Result};
use crate::geometry::{jumps_for_epsilon, CurvePoint};
use crate::isotonic::isotonic_nondecreasing;
use crate::rng::{derive_seed, gaussian_vec, rng_for};
use crate::solver::{recovery_success, solve_tv_equality, Matrix, SolveOptions, SUCCESS_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeLaw {
    /// Jumps of size one with uniform random sign.
    #[default]
    Sign,
    /// Standard normal jump heights.
    Gaussian,
}

/// Piecewise-constant signal with exactly `k` nonzero gradients, starting at 0.
pub fn random_sparse_gradient_signal(
    n: usize,
    k: usize,
    seed: u64,
    law: AmplitudeLaw,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::SignalTooShort(n));
    }
    if k > n - 1 {
        return Err(Error::invalid(format!("k = {k} exceeds n - 1 = {}", n - 1)));
    }
    let mut rng = rng_for(seed, &[0x7369_676e]);
    let mut grad = vec![0.0; n - 1];
    for i in sample(&mut rng, n - 1, k) {
        grad[i] = match law {
            AmplitudeLaw::Sign => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            AmplitudeLaw::Gaussian => loop {
                let a: f64 = StandardNormal.sample(&mut rng);
                if a != 0.0 {
                    break a;
                }
            },
        };
    }
    // (Bx)_i = x_i - x_{i+1}
    let mut x = vec![0.0; n];
    for i in 0..n - 1 {
        x[i + 1] = x[i] - grad[i];
    }
    Ok(x)
}

/// `m x n` matrix of i.i.d. standard normals. Row `i` depends only on
/// `(seed, i)`.
pub fn random_gaussian_matrix(m: usize, n: usize, seed: u64) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("matrix dimensions must be positive"));
    }
    let data: Vec<f64> = (0..m)
        .flat_map(|i| gaussian_vec(&mut rng_for(seed, &[0x0072_6f77, i as u64]), n))
        .collect();
    Matrix::from_row_major(m, n, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalCell {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub seed: u64,
}

impl EmpiricalCell {
    pub fn success_rate(&self) -> f64 {
        self.successes as f64 / self.trials as f64
    }

    pub fn epsilon(&self) -> f64 {
        self.k as f64 / (self.n - 1) as f64
    }

    pub fn delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub solver: SolveOptions,
    pub threshold: f64,
    pub amplitude: AmplitudeLaw,
    /// End a solve early once it finds a feasible point whose objective proves
    /// that no minimizer can be within `threshold` of the true signal.
    pub early_failure: bool,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            solver: SolveOptions::default(),
            threshold: SUCCESS_THRESHOLD,
            amplitude: AmplitudeLaw::Sign,
            early_failure: true,
        }
    }
}

/// Objective level below which a feasible point rules out success.
///
/// `|TV(x) - TV(z)| <= ||B|| sqrt(n-1) ||x - z|| <= 2 sqrt(n-1) ||x - z||`, so a
/// minimizer within `threshold ||x*||` of `x*` has objective at least
/// `TV(x*) - 2 sqrt(n-1) threshold ||x*||`, and the optimal value cannot be
/// lower than that.
pub fn failure_bound(x_star: &[f64], threshold: f64) -> Option<f64> {
    let n = x_star.len();
    let tv = tv_seminorm(x_star).ok()?;
    let norm = x_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bound = tv - 2.0 * ((n - 1) as f64).sqrt() * threshold * norm;
    (bound > 0.0).then_some(bound)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellOutcome {
    pub cell: EmpiricalCell,
    /// Trials whose solve hit the iteration cap; each counts as a failure.
    pub not_converged: usize,
    /// Trials ended early by a feasible point below [`failure_bound`].
    pub certified_failures: usize,
}

/// Run `trials` independent recoveries at `(n, m, k)`.
pub fn run_cell(
    n: usize,
    m: usize,
    k: usize,
    trials: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<CellOutcome> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if m == 0 {
        return Err(Error::invalid("need at least one measurement"));
    }
    if n < 2 {
        return Err(Error::SignalTooShort(n));
    }
    if k == 0 {
        // x_1 = 0 makes the k = 0 signal identically zero
        return Err(Error::ZeroSignal);
    }
    let outcomes: Vec<Result<(bool, bool, bool)>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let x_star = random_sparse_gradient_signal(
                n,
                k,
                derive_seed(seed, &[t as u64, 0]),
                opts.amplitude,
            )?;
            let a = random_gaussian_matrix(m, n, derive_seed(seed, &[t as u64, 1]))?;
            let y = a.mul_vec(&x_star);
            let mut solver = opts.solver;
            if opts.early_failure {
                solver.stop_below = failure_bound(&x_star, opts.threshold);
            }
            let report = solve_tv_equality(&a, &y, &solver)?;
            let ok = report.converged && recovery_success(&report.x_hat, &x_star, opts.threshold)?;
            Ok((
                ok,
                report.converged || report.stopped_below,
                report.stopped_below,
            ))
        })
        .collect();
    let mut successes = 0;
    let mut not_converged = 0;
    let mut certified_failures = 0;
    for o in outcomes {
        let (ok, settled, early) = o?;
        successes += ok as usize;
        not_converged += (!settled) as usize;
        certified_failures += early as usize;
    }
    Ok(CellOutcome {
        cell: EmpiricalCell {
            n,
            m,
            k,
            trials,
            successes,
            seed,
        },
        not_converged,
        certified_failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEstimate {
    pub epsilon: f64,
    pub delta_50: f64,
    pub delta_10: f64,
    pub delta_90: f64,
    pub trials_per_cell: usize,
    /// All three crossings lie strictly inside the grid.
    pub bracketed: bool,
    pub cells: Vec<EmpiricalCell>,
    /// Solves that hit the iteration cap, summed over cells.
    pub not_converged: usize,
}

/// Measurement count for a sampling ratio, at least one.
pub fn measurements_for_delta(n: usize, delta: f64) -> usize {
    ((delta * n as f64).round() as usize).max(1)
}

/// First crossing of `level` by a nondecreasing curve, linearly interpolated.
/// `None` when the curve starts at or above the level or never reaches it.
fn crossing(deltas: &[f64], rates: &[f64], level: f64) -> Option<f64> {
    let i = rates.iter().position(|&r| r >= level)?;
    if i == 0 {
        return None;
    }
    let (d0, d1, r0, r1) = (deltas[i - 1], deltas[i], rates[i - 1], rates[i]);
    Some(d0 + (level - r0) / (r1 - r0) * (d1 - d0))
}

/// 10/50/90% crossings of an isotonic fit to the success rates over `deltas`.
pub fn transition_from_cells(
    epsilon: f64,
    cells: Vec<EmpiricalCell>,
) -> Result<TransitionEstimate> {
    if cells.is_empty() {
        return Err(Error::invalid("no cells"));
    }
    let deltas: Vec<f64> = cells.iter().map(EmpiricalCell::delta).collect();
    if deltas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("cells must have strictly increasing m"));
    }
    let rates: Vec<f64> = cells.iter().map(EmpiricalCell::success_rate).collect();
    let weights: Vec<f64> = cells.iter().map(|c| c.trials as f64).collect();
    let fit = isotonic_nondecreasing(&rates, &weights);
    let (lo, hi) = (deltas[0], *deltas.last().unwrap());
    let read = |level: f64| match crossing(&deltas, &fit, level) {
        Some(d) => (d, true),
        None if fit[0] >= level => (lo, false),
        None => (hi, false),
    };
    let (d10, b10) = read(0.1);
    let (d50, b50) = read(0.5);
    let (d90, b90) = read(0.9);
    Ok(TransitionEstimate {
        epsilon,
        delta_50: d50,
        delta_10: d10,
        delta_90: d90,
        trials_per_cell: cells[0].trials,
        bracketed: b10 && b50 && b90,
        cells,
        not_converged: 0,
    })
}

/// Sweep `delta_grid` at sparsity `epsilon` and read off the transition.
pub fn empirical_transition(
    n: usize,
    epsilon: f64,
    delta_grid: &[f64],
    trials: usize,
    seed: u64,
    opts: &ExperimentOptions,
) -> Result<TransitionEstimate> {
    if delta_grid.is_empty() {
        return Err(Error::invalid("empty delta grid"));
    }
    if delta_grid.iter().any(|&d| !(d > 0.0 && d <= 1.0))
        || delta_grid.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::invalid(
            "delta grid must be strictly increasing within (0, 1]",
        ));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if n < 2 {
        return Err(Error::SignalTooShort(n));
    }
    let k = jumps_for_epsilon(n, epsilon);
    let cell_seed = derive_seed(seed, &[k as u64]);
    let mut ms: Vec<usize> = delta_grid
        .iter()
        .map(|&d| measurements_for_delta(n, d))
        .collect();
    ms.dedup();
    let outcomes = ms
        .into_iter()
        .map(|m| run_cell(n, m, k, trials, cell_seed, opts))
        .collect::<Result<Vec<_>>>()?;
    let not_converged = outcomes.iter().map(|o| o.not_converged).sum();
    let mut t = transition_from_cells(epsilon, outcomes.into_iter().map(|o| o.cell).collect())?;
    t.not_converged = not_converged;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub epsilon: f64,
    pub delta_pred: f64,
    pub pred_stderr: f64,
    pub delta_50: f64,
    pub delta_10: f64,
    pub delta_90: f64,
    pub abs_diff: f64,
    pub pass: bool,
}

impl ComparisonRow {
    /// Monte Carlo standard error plus half the 10-90% band width.
    pub fn uncertainty(&self) -> f64 {
        self.pred_stderr + 0.5 * (self.delta_90 - self.delta_10)
    }
}

/// Default agreement tolerance in `delta`.
pub const COMPARE_TOLERANCE: f64 = 0.05;

/// Pair predicted and empirical transitions on the same epsilon grid.
pub fn compare_report(
    predicted: &[CurvePoint],
    empirical: &[TransitionEstimate],
    tol: f64,
) -> Result<Vec<ComparisonRow>> {
    if predicted.is_empty() || empirical.is_empty() {
        return Err(Error::invalid("empty epsilon grid"));
    }
    if predicted.len() != empirical.len() {
        return Err(Error::invalid(format!(
            "epsilon grids differ in length: {} predicted vs {} empirical",
            predicted.len(),
            empirical.len()
        )));
    }
    predicted
        .iter()
        .zip(empirical)
        .map(|(p, e)| {
            if (p.epsilon - e.epsilon).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "epsilon grids differ: {} vs {}",
                    p.epsilon, e.epsilon
                )));
            }
            let abs_diff = (p.delta_pred - e.delta_50).abs();
            Ok(ComparisonRow {
                epsilon: p.epsilon,
                delta_pred: p.delta_pred,
                pred_stderr: p.stderr,
                delta_50: e.delta_50,
                delta_10: e.delta_10,
                delta_90: e.delta_90,
                abs_diff,
                pass: abs_diff <= tol,
            })
        })
        .collect()
}
