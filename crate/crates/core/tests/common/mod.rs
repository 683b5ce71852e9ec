//! Shared test support: a dense two-phase simplex oracle, brute-force grid
//! minimizers and instance builders.

#![allow(dead_code)]

use tvpt::experiments::{random_gaussian_matrix, random_sparse_gradient_signal, AmplitudeLaw};
use tvpt::rng::{derive_seed, rng_for};
use tvpt::solver::Matrix;

use rand::Rng;

const EPS: f64 = 1e-9;

#[derive(Debug)]
pub enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Dense tableau: `rows x (cols + 1)`, last column is the right-hand side.
struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        self.t[r].iter_mut().for_each(|v| *v /= p);
        let row = self.t[r].clone();
        for (i, other) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = other[c];
                if f != 0.0 {
                    for (o, v) in other.iter_mut().zip(&row) {
                        *o -= f * v;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Minimize `cost . x` over the columns in `allowed`, Bland's rule.
    /// Returns false when unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        let rhs = self.t[0].len() - 1;
        loop {
            // reduced costs c_j - c_B B^{-1} a_j
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let z: f64 = self
                    .t
                    .iter()
                    .zip(&self.basis)
                    .map(|(row, &b)| cost[b] * row[j])
                    .sum();
                cost[j] - z < -EPS
            });
            let Some(j) = entering else { return true };
            let mut best: Option<(f64, usize, usize)> = None;
            for (i, row) in self.t.iter().enumerate() {
                if row[j] > EPS {
                    let ratio = row[rhs] / row[j];
                    let cand = (ratio, self.basis[i], i);
                    best = match best {
                        Some(b)
                            if b.0 < ratio - EPS
                                || ((b.0 - ratio).abs() <= EPS && b.1 < cand.1) =>
                        {
                            Some(b)
                        }
                        _ => Some(cand),
                    };
                }
            }
            match best {
                Some((_, _, r)) => self.pivot(r, j),
                None => return false,
            }
        }
    }
}

/// `min c.x  s.t.  A x = b, x >= 0` by the two-phase simplex method.
pub fn simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> LpOutcome {
    let (m, n) = (a.len(), c.len());
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (i, (row, &bi)) in a.iter().zip(b).enumerate() {
        let sgn = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut r: Vec<f64> = row.iter().map(|v| sgn * v).collect();
        r.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
        r.push(sgn * bi);
        t.push(r);
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
    };
    let phase1: Vec<f64> = (0..n + m).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
    tab.optimize(&phase1, n + m);
    let infeas: f64 = tab
        .t
        .iter()
        .zip(&tab.basis)
        .filter(|(_, &b)| b >= n)
        .map(|(r, _)| r[n + m])
        .sum();
    let scale = 1.0 + b.iter().map(|v| v.abs()).sum::<f64>();
    if infeas > 1e-7 * scale {
        return LpOutcome::Infeasible;
    }
    // drive remaining artificials out of the basis, dropping redundant rows
    let mut i = 0;
    while i < tab.t.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.t[i][j].abs() > 1e-7) {
                Some(j) => tab.pivot(i, j),
                None => {
                    tab.t.remove(i);
                    tab.basis.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }
    let mut cost = c.to_vec();
    cost.extend(std::iter::repeat_n(0.0, m));
    if !tab.optimize(&cost, n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (row, &bv) in tab.t.iter().zip(&tab.basis) {
        if bv < n {
            x[bv] = row[n + m];
        }
    }
    let objective = c.iter().zip(&x).map(|(u, v)| u * v).sum();
    LpOutcome::Optimal { objective, x }
}

/// `min ||Bx||_1 s.t. Ax = y` as a linear program over
/// `(x+, x-, s+, s-) >= 0` with `B(x+ - x-) = s+ - s-` and `A(x+ - x-) = y`.
/// Returns the optimal value and the recovered `x`.
pub fn tv_lp(a: &Matrix, y: &[f64]) -> (f64, Vec<f64>) {
    let (m, n) = (a.rows(), a.cols());
    let vars = 2 * n + 2 * (n - 1);
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n - 1 {
        let mut r = vec![0.0; vars];
        r[i] = 1.0;
        r[i + 1] = -1.0;
        r[n + i] = -1.0;
        r[n + i + 1] = 1.0;
        r[2 * n + i] = -1.0;
        r[2 * n + (n - 1) + i] = 1.0;
        rows.push(r);
        rhs.push(0.0);
    }
    for (i, &yi) in y.iter().enumerate().take(m) {
        let mut r = vec![0.0; vars];
        for (j, &v) in a.row(i).iter().enumerate() {
            r[j] = v;
            r[n + j] = -v;
        }
        rows.push(r);
        rhs.push(yi);
    }
    let cost: Vec<f64> = (0..vars)
        .map(|j| if j >= 2 * n { 1.0 } else { 0.0 })
        .collect();
    match simplex(&rows, &rhs, &cost) {
        LpOutcome::Optimal { objective, x } => {
            (objective, (0..n).map(|j| x[j] - x[n + j]).collect())
        }
        other => panic!("TV linear program should be solvable, got {other:?}"),
    }
}

/// Seeded small recovery instance `(A, y, x*)` with `n` in `10..=40`.
pub fn lp_instance(index: u64) -> (Matrix, Vec<f64>, Vec<f64>) {
    let mut rng = rng_for(0x6c70, &[index]);
    let n = rng.random_range(10..=40usize);
    let m = rng.random_range(n / 4..=n - 2).max(2);
    let k = rng.random_range(1..=n / 3);
    let x = random_sparse_gradient_signal(n, k, derive_seed(index, &[0]), AmplitudeLaw::Gaussian)
        .unwrap();
    let a = random_gaussian_matrix(m, n, derive_seed(index, &[1])).unwrap();
    let y = a.mul_vec(&x);
    (a, y, x)
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Minimum of `f` over the box `[lo, hi]` by a uniform grid of `points` per
/// axis, repeatedly zoomed to a few cells around the best grid point.
pub fn zoom_grid_min(
    f: &dyn Fn(&[f64]) -> f64,
    lo: &[f64],
    hi: &[f64],
    points: usize,
    levels: usize,
) -> f64 {
    let d = lo.len();
    if d == 0 {
        return f(&[]);
    }
    let (mut a, mut b) = (lo.to_vec(), hi.to_vec());
    let mut best = f64::INFINITY;
    let mut arg = vec![0.0; d];
    let mut x = vec![0.0; d];
    for _ in 0..levels {
        let step: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(l, h)| (h - l) / (points - 1) as f64)
            .collect();
        let mut idx = vec![0usize; d];
        loop {
            for k in 0..d {
                x[k] = a[k] + idx[k] as f64 * step[k];
            }
            let v = f(&x);
            if v < best {
                best = v;
                arg.copy_from_slice(&x);
            }
            let mut k = 0;
            while k < d {
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == d {
                break;
            }
        }
        for k in 0..d {
            a[k] = (arg[k] - 3.0 * step[k]).max(lo[k]);
            b[k] = (arg[k] + 3.0 * step[k]).min(hi[k]);
        }
    }
    best
}

/// `||g - B^T v||^2` with `(B^T v)_i = v_i - v_{i-1}` (zero-padded).
pub fn residual_sq(g: &[f64], v: &[f64]) -> f64 {
    let n = g.len();
    (0..n)
        .map(|i| {
            let a = if i < n - 1 { v[i] } else { 0.0 };
            let b = if i > 0 { v[i - 1] } else { 0.0 };
            (g[i] - (a - b)).powi(2)
        })
        .sum()
}

/// Brute-force `dist(g, lambda * subdiff)^2` for slots in `{-1, 0, 1}`.
pub fn brute_scaled(g: &[f64], slots: &[i8], lambda: f64) -> f64 {
    let free: Vec<usize> = (0..slots.len()).filter(|&i| slots[i] == 0).collect();
    let f = |w: &[f64]| {
        let mut v: Vec<f64> = slots.iter().map(|&s| lambda * s as f64).collect();
        for (&i, &wi) in free.iter().zip(w) {
            v[i] = lambda * wi;
        }
        residual_sq(g, &v)
    };
    let d = free.len();
    zoom_grid_min(&f, &vec![-1.0; d], &vec![1.0; d], 21, 18)
}

/// Brute-force `dist(g, cone(subdiff))^2`: the scaled distance is convex in
/// `lambda`, so an outer grid over `lambda` in `[0, lambda_max]` wraps
/// [`brute_scaled`].
pub fn brute_cone(g: &[f64], slots: &[i8], lambda_max: f64) -> f64 {
    let f = |l: &[f64]| brute_scaled(g, slots, l[0]);
    zoom_grid_min(&f, &[0.0], &[lambda_max], 21, 16)
}

/// Every slot vector in `{-1, 0, 1}^(n-1)`.
pub fn all_slot_vectors(n: usize) -> Vec<Vec<i8>> {
    let m = n - 1;
    (0..3usize.pow(m as u32))
        .map(|mut c| {
            (0..m)
                .map(|_| {
                    let s = (c % 3) as i8 - 1;
                    c /= 3;
                    s
                })
                .collect()
        })
        .collect()
}
