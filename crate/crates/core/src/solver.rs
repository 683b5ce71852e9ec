//! Equality-constrained TV minimization, `min ||Bx||_1 s.t. Ax = y`.
//!
//! First-order primal-dual iteration on the saddle problem
//!
//! ```text
//! min_x max_{|p| <= 1, q}  <p, Bx> + <q, c (Ax - y)>
//! ```
//!
//! with one dual block per operator. By default the constraint block is
//! preconditioned first: `A = L Q` with orthonormal rows `Q`, and the iteration
//! runs on the equivalent system `Q x = L^{-1} y`. The constraint rows are then
//! scaled by `c = 2 / ||A||`, and the step sizes satisfy
//! `sigma tau ||[B; cA]||^2 <= 1` with the norm estimated by power iteration and
//! padded by 5%. Feasibility is always measured on the original `A x = y`.

use serde::{Deserialize, Serialize};

use crate::diffop::{tv_seminorm, DifferenceOperator};
use crate::error::{ensure_finite, Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// First `rows` rows.
    pub fn top_rows(&self, rows: usize) -> Matrix {
        let rows = rows.min(self.rows);
        Matrix {
            rows,
            cols: self.cols,
            data: self.data[..rows * self.cols].to_vec(),
        }
    }

    /// `out = A x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    /// `out = A^T y`
    pub fn tr_mul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                for (o, a) in out.iter_mut().zip(row) {
                    *o += yi * a;
                }
            }
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// `||Ax - y|| / max(1, ||y||)` at termination.
    pub feas_tol: f64,
    /// `||x_k - x_{k-1}|| / max(1, ||x_k||)` at termination.
    pub step_tol: f64,
    pub max_iter: usize,
    /// Stopping tests run every this many iterations.
    pub check_every: usize,
    pub power_iterations: usize,
    /// Replace the constraint block by an orthonormal row basis.
    pub orthonormalize: bool,
    /// Stop as soon as a point of `{Ax = y}` with objective below this value
    /// is found. Such a point certifies that the optimal value is smaller.
    pub stop_below: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            feas_tol: 1e-6,
            step_tol: 1e-10,
            max_iter: 200_000,
            check_every: 10,
            power_iterations: 60,
            orthonormalize: true,
            stop_below: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub x_hat: Vec<f64>,
    pub feas_residual: f64,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The run ended early on a feasible point whose objective is below
    /// [`SolveOptions::stop_below`]; `x_hat` is that point.
    pub stopped_below: bool,
}

/// Operator norm of `[B; c A]` by power iteration on its normal operator,
/// from a fixed start vector.
fn stacked_norm(op: &DifferenceOperator, a: &Matrix, c: f64, iters: usize) -> f64 {
    let n = a.cols();
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    let mut bx = vec![0.0; n - 1];
    let mut ax = vec![0.0; a.rows()];
    let mut t1 = vec![0.0; n];
    let mut t2 = vec![0.0; n];
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = norm(&x);
        if nx == 0.0 {
            break;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        op.forward_into(&x, &mut bx);
        a.mul_vec_into(&x, &mut ax);
        op.adjoint_into(&bx, &mut t1);
        a.tr_mul_vec_into(&ax, &mut t2);
        for ((xi, u), w) in x.iter_mut().zip(&t1).zip(&t2) {
            *xi = u + c * c * w;
        }
        est = norm(&x).sqrt();
    }
    est
}

fn matrix_norm(a: &Matrix, iters: usize) -> f64 {
    let n = a.cols();
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 104_729) % 17) as f64 / 17.0)
        .collect();
    let mut ax = vec![0.0; a.rows()];
    let mut est = 0.0;
    for _ in 0..iters {
        let nx = norm(&x);
        if nx == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        a.mul_vec_into(&x, &mut ax);
        a.tr_mul_vec_into(&ax, &mut x);
        est = norm(&x).sqrt();
    }
    est
}

/// Orthonormal row basis of `a` by modified Gram-Schmidt with one
/// reorthogonalization pass, together with the transformed right-hand side.
/// Rows that are numerically dependent on earlier ones are dropped.
fn orthonormal_rows(a: &Matrix, y: &[f64]) -> (Matrix, Vec<f64>) {
    let n = a.cols();
    let mut q: Vec<f64> = Vec::with_capacity(a.data().len());
    let mut rhs = Vec::with_capacity(a.rows());
    for (i, &yi) in y.iter().enumerate() {
        let mut v = a.row(i).to_vec();
        let mut b = yi;
        let scale = norm(&v);
        for _ in 0..2 {
            for (qj, cj) in q.chunks_exact(n).zip(&rhs) {
                let d = dot(qj, &v);
                for (vk, qk) in v.iter_mut().zip(qj) {
                    *vk -= d * qk;
                }
                b -= d * cj;
            }
        }
        let nv = norm(&v);
        if nv <= 1e-10 * scale || nv == 0.0 {
            continue;
        }
        q.extend(v.iter().map(|x| x / nv));
        rhs.push(b / nv);
    }
    let rows = rhs.len();
    (
        Matrix {
            rows,
            cols: n,
            data: q,
        },
        rhs,
    )
}

/// Solve `min ||Bx||_1 s.t. Ax = y`.
///
/// Non-convergence is reported through `converged = false`, never as an error.
pub fn solve_tv_equality(a: &Matrix, y: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 {
        return Err(Error::invalid("need at least one measurement"));
    }
    let op = DifferenceOperator::new(n)?;
    if y.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: y.len(),
        });
    }
    ensure_finite(a.data())?;
    ensure_finite(y)?;
    if !(opts.feas_tol > 0.0 && opts.step_tol > 0.0) || opts.check_every == 0 {
        return Err(Error::invalid("solver tolerances must be positive"));
    }

    let (a_orig, y_orig) = (a, y);
    if a.data().iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("measurement matrix is zero"));
    }
    let basis = (opts.orthonormalize || opts.stop_below.is_some()).then(|| orthonormal_rows(a, y));
    let (a, y): (&Matrix, &[f64]) = match (&basis, opts.orthonormalize) {
        (Some((q, c)), true) => (q, c),
        _ => (a, y),
    };
    let m = a.rows();
    let a_norm = if opts.orthonormalize {
        1.0
    } else {
        matrix_norm(a, opts.power_iterations)
    };
    let c = 2.0 / a_norm;
    let k_norm = 1.05 * stacked_norm(&op, a, c, opts.power_iterations);
    let tau = 1.0 / k_norm;
    let sigma = 1.0 / k_norm;

    let y_norm = norm(y_orig).max(1.0);
    let mut ax_orig = vec![0.0; y_orig.len()];
    let feasibility = |x: &[f64], ax: &mut [f64]| {
        a_orig.mul_vec_into(x, ax);
        ax.iter()
            .zip(y_orig)
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt()
            / y_norm
    };
    let mut x = vec![0.0; n];
    let mut x_prev = vec![0.0; n];
    let mut x_bar = vec![0.0; n];
    let mut p = vec![0.0; n - 1];
    let mut q = vec![0.0; m];
    let mut bx = vec![0.0; n - 1];
    let mut ax = vec![0.0; m];
    let mut btp = vec![0.0; n];
    let mut atq = vec![0.0; n];
    let mut proj = vec![0.0; n];

    let mut iterations = 0;
    let mut converged = false;
    let mut stopped_below = false;
    let mut feas = f64::INFINITY;
    while iterations < opts.max_iter {
        // dual ascent at the extrapolated point
        op.forward_into(&x_bar, &mut bx);
        for (pi, bi) in p.iter_mut().zip(&bx) {
            *pi = (*pi + sigma * bi).clamp(-1.0, 1.0);
        }
        a.mul_vec_into(&x_bar, &mut ax);
        for ((qi, ai), yi) in q.iter_mut().zip(&ax).zip(y) {
            *qi += sigma * c * (ai - yi);
        }
        // primal descent
        op.adjoint_into(&p, &mut btp);
        a.tr_mul_vec_into(&q, &mut atq);
        x_prev.copy_from_slice(&x);
        for ((xi, u), w) in x.iter_mut().zip(&btp).zip(&atq) {
            *xi -= tau * (u + c * w);
        }
        for ((xb, xi), xp) in x_bar.iter_mut().zip(&x).zip(&x_prev) {
            *xb = 2.0 * xi - xp;
        }
        iterations += 1;

        if iterations % opts.check_every == 0 {
            let step: f64 = x
                .iter()
                .zip(&x_prev)
                .map(|(u, v)| (u - v) * (u - v))
                .sum::<f64>()
                .sqrt();
            if step <= opts.step_tol * norm(&x).max(1.0) {
                feas = feasibility(&x, &mut ax_orig);
                if feas <= opts.feas_tol {
                    converged = true;
                    break;
                }
            }
        }
        if let (Some(bound), Some((qb, cb))) = (opts.stop_below, &basis) {
            if iterations % (10 * opts.check_every) == 0 {
                project_affine(qb, cb, &x, &mut proj);
                if tv_seminorm(&proj)? < bound {
                    x.copy_from_slice(&proj);
                    stopped_below = true;
                    break;
                }
            }
        }
    }
    if !converged {
        feas = feasibility(&x, &mut ax_orig);
    }
    let objective = tv_seminorm(&x)?;
    Ok(SolveReport {
        x_hat: x,
        feas_residual: feas,
        objective,
        iterations,
        converged,
        stopped_below,
    })
}

/// Orthogonal projection of `x` onto `{z : Q z = c}` for orthonormal rows `Q`.
fn project_affine(qb: &Matrix, cb: &[f64], x: &[f64], out: &mut [f64]) {
    out.copy_from_slice(x);
    for (row, ci) in qb.data.chunks_exact(qb.cols).zip(cb) {
        let d = dot(row, x) - ci;
        for (o, r) in out.iter_mut().zip(row) {
            *o -= d * r;
        }
    }
}

/// Default relative-error threshold for declaring exact recovery.
pub const SUCCESS_THRESHOLD: f64 = 1e-3;

/// `||x_hat - x_star|| / ||x_star|| <= threshold`.
pub fn recovery_success(x_hat: &[f64], x_star: &[f64], threshold: f64) -> Result<bool> {
    if x_hat.len() != x_star.len() {
        return Err(Error::LengthMismatch {
            expected: x_star.len(),
            got: x_hat.len(),
        });
    }
    let ref_norm = norm(x_star);
    if ref_norm == 0.0 {
        return Err(Error::ZeroSignal);
    }
    let err: f64 = x_hat
        .iter()
        .zip(x_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(err / ref_norm <= threshold)
}
