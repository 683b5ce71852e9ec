//! The 1-D finite-difference operator and its Gram matrix.
//!
//! `B` maps a length-`n` signal to its length-`n-1` gradient with
//! `(Bx)[i] = x[i] - x[i+1]`. `BB^T` is the tridiagonal matrix with 2 on the
//! diagonal and -1 next to it; restricted to a set of flat groups it is block
//! diagonal with blocks `H(l)` of the same shape. Everything here is
//! matrix-free.

use crate::error::{ensure_finite, Error, Result};
use crate::pattern::GradientPattern;

/// Spectral bound on `BB^T`: every eigenvalue lies in `(0, 4)`.
pub const GRAM_NORM_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferenceOperator {
    n: usize,
}

impl DifferenceOperator {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::SignalTooShort(n));
        }
        Ok(Self { n })
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn gradient_len(&self) -> usize {
        self.n - 1
    }

    /// `out = B x`.
    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n - 1);
        for (o, w) in out.iter_mut().zip(x.windows(2)) {
            *o = w[0] - w[1];
        }
    }

    /// `out = B^T w`.
    pub fn adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        assert_eq!(w.len(), self.n - 1);
        assert_eq!(out.len(), self.n);
        let m = self.n - 1;
        out[0] = w[0];
        for i in 1..m {
            out[i] = w[i] - w[i - 1];
        }
        out[m] = -w[m - 1];
    }

    /// `out = BB^T w`.
    pub fn gram_into(&self, w: &[f64], out: &mut [f64]) {
        let m = self.n - 1;
        assert_eq!(w.len(), m);
        assert_eq!(out.len(), m);
        for i in 0..m {
            let mut acc = 2.0 * w[i];
            if i > 0 {
                acc -= w[i - 1];
            }
            if i + 1 < m {
                acc -= w[i + 1];
            }
            out[i] = acc;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.n - 1];
        self.forward_into(x, &mut out);
        Ok(out)
    }

    pub fn adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.n - 1 {
            return Err(Error::LengthMismatch {
                expected: self.n - 1,
                got: w.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        self.adjoint_into(w, &mut out);
        Ok(out)
    }

    pub fn gram(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.n - 1 {
            return Err(Error::LengthMismatch {
                expected: self.n - 1,
                got: w.len(),
            });
        }
        let mut out = vec![0.0; self.n - 1];
        self.gram_into(w, &mut out);
        Ok(out)
    }
}

/// Forward difference `x[i] - x[i+1]` of a signal with at least two samples.
pub fn forward_difference(x: &[f64]) -> Result<Vec<f64>> {
    DifferenceOperator::new(x.len())?.forward(x)
}

/// `B^T w` for a gradient of length `n - 1 >= 1`.
pub fn adjoint_difference(w: &[f64]) -> Result<Vec<f64>> {
    DifferenceOperator::new(w.len() + 1)?.adjoint(w)
}

/// Total variation `sum_i |x[i] - x[i+1]|`.
pub fn tv_seminorm(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::SignalTooShort(x.len()));
    }
    ensure_finite(x)?;
    Ok(x.windows(2).map(|w| (w[0] - w[1]).abs()).sum())
}

/// Entry `(i, j)` of `(BB^T)^{-1}` for signal length `n`, 1-based indices.
///
/// `i (n - j) / n` for `i <= j`, symmetric otherwise.
pub fn gram_inverse_entry(i: usize, j: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::SignalTooShort(n));
    }
    let size = n - 1;
    if i == 0 || j == 0 || i > size || j > size {
        return Err(Error::IndexOutOfRange { i, j, size });
    }
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    Ok((lo * (n - hi)) as f64 / n as f64)
}

/// Entry `(i, j)` of `H(l)^{-1}`, 1-based indices.
///
/// `H(l)` is `BB^T` for a signal of length `l + 1`, so the inverse is
/// `i (l + 1 - j) / (l + 1)` for `i <= j`. For `l = 1` this is `1/2`.
pub fn h_inverse_entry(i: usize, j: usize, l: usize) -> Result<f64> {
    if l == 0 || i == 0 || j == 0 || i > l || j > l {
        return Err(Error::IndexOutOfRange { i, j, size: l });
    }
    gram_inverse_entry(i, j, l + 1)
}

/// Solve `H(l) t = rhs` in place, `l = rhs.len()`.
///
/// Thomas elimination specialised to diagonal 2 and off-diagonals -1. The
/// pivots are `(k + 1) / k`, so the forward sweep is exact up to rounding and
/// never breaks down.
pub fn solve_h_in_place(rhs: &mut [f64]) {
    let l = rhs.len();
    if l == 0 {
        return;
    }
    // Forward sweep: pivot_k = (k + 2) / (k + 1) for 0-based row k.
    for k in 1..l {
        let prev_pivot = (k + 1) as f64 / k as f64;
        rhs[k] += rhs[k - 1] / prev_pivot;
    }
    let last_pivot = (l + 1) as f64 / l as f64;
    rhs[l - 1] /= last_pivot;
    for k in (0..l - 1).rev() {
        let pivot = (k + 2) as f64 / (k + 1) as f64;
        rhs[k] = (rhs[k] + rhs[k + 1]) / pivot;
    }
}

/// Solve `(BB^T)_{S,S} t = rhs` where `S` is the flat set of `pattern`.
///
/// `rhs` and the result are ordered by increasing index in `S`. The system is
/// block diagonal with one `H(l)` per flat group, each solved independently.
pub fn solve_restricted_gram(pattern: &GradientPattern, rhs: &[f64]) -> Result<Vec<f64>> {
    let size = pattern.flat_len();
    if rhs.len() != size {
        return Err(Error::LengthMismatch {
            expected: size,
            got: rhs.len(),
        });
    }
    ensure_finite(rhs)?;
    let mut t = rhs.to_vec();
    let mut offset = 0;
    for g in pattern.groups() {
        let l = g.len();
        solve_h_in_place(&mut t[offset..offset + l]);
        offset += l;
    }
    Ok(t)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dense_gram(m: usize) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; m]; m];
        for i in 0..m {
            a[i][i] = 2.0;
            if i > 0 {
                a[i][i - 1] = -1.0;
                a[i - 1][i] = -1.0;
            }
        }
        a
    }

    /// Gaussian elimination with partial pivoting, test oracle only.
    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let m = b.len();
        for c in 0..m {
            let p = (c..m)
                .max_by(|&r, &s| a[r][c].abs().total_cmp(&a[s][c].abs()))
                .unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..m {
                let f = a[r][c] / a[c][c];
                for k in c..m {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; m];
        for r in (0..m).rev() {
            let s: f64 = (r + 1..m).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn forward_examples() {
        assert_eq!(
            forward_difference(&[1.0, 1.0, 2.0]).unwrap(),
            vec![0.0, -1.0]
        );
        assert_eq!(
            forward_difference(&[3.0, 2.0, 1.0]).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(forward_difference(&[4.5; 6]).unwrap(), vec![0.0; 5]);
        assert!(matches!(
            forward_difference(&[1.0]),
            Err(Error::SignalTooShort(1))
        ));
    }

    #[test]
    fn adjoint_examples() {
        assert_eq!(
            adjoint_difference(&[1.0, -1.0]).unwrap(),
            vec![1.0, -2.0, 1.0]
        );
        assert_eq!(adjoint_difference(&[0.0, 0.0]).unwrap(), vec![0.0; 3]);
        assert!(adjoint_difference(&[]).is_err());
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_seminorm(&[1.0, 1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(tv_seminorm(&[3.0, 1.0, 2.0]).unwrap(), 3.0);
        assert_eq!(tv_seminorm(&[-2.0; 4]).unwrap(), 0.0);
    }

    #[test]
    fn gram_inverse_small_cases() {
        assert_eq!(gram_inverse_entry(1, 1, 2).unwrap(), 0.5);
        // inverse of [[2,-1],[-1,2]] is (1/3)[[2,1],[1,2]]
        assert_abs_diff_eq!(
            gram_inverse_entry(1, 2, 3).unwrap(),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            gram_inverse_entry(2, 2, 3).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
        assert!(gram_inverse_entry(0, 1, 3).is_err());
        assert!(gram_inverse_entry(1, 3, 3).is_err());
    }

    #[test]
    fn h_inverse_small_cases() {
        assert_eq!(h_inverse_entry(1, 1, 1).unwrap(), 0.5);
        let expected = [[2.0 / 3.0, 1.0 / 3.0], [1.0 / 3.0, 2.0 / 3.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(
                    h_inverse_entry(i + 1, j + 1, 2).unwrap(),
                    expected[i][j],
                    epsilon = 1e-15
                );
            }
        }
        assert!(h_inverse_entry(3, 1, 2).is_err());
        assert!(h_inverse_entry(1, 1, 0).is_err());
    }

    #[test]
    fn gram_inverse_times_gram_is_identity() {
        for n in 2..=60 {
            let m = n - 1;
            let a = dense_gram(m);
            for i in 0..m {
                for j in 0..m {
                    let s: f64 = (0..m)
                        .map(|k| a[i][k] * gram_inverse_entry(k + 1, j + 1, n).unwrap())
                        .sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert!((s - target).abs() < 1e-10, "n={n} ({i},{j}) -> {s}");
                }
            }
        }
    }

    #[test]
    fn h_solve_examples() {
        let mut t = [1.0];
        solve_h_in_place(&mut t);
        assert_abs_diff_eq!(t[0], 0.5, epsilon = 1e-15);
        let mut t = [0.0, 1.0];
        solve_h_in_place(&mut t);
        assert_abs_diff_eq!(t[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t[1], 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn h_solve_matches_dense() {
        for l in 1..=80 {
            let b: Vec<f64> = (0..l).map(|k| ((k * 37 + 11) % 17) as f64 - 8.0).collect();
            let want = dense_solve(dense_gram(l), b.clone());
            let mut got = b.clone();
            solve_h_in_place(&mut got);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-10 * (1.0 + w.abs()));
            }
        }
    }

    #[test]
    fn gram_eigen_bound_on_random_vectors() {
        let op = DifferenceOperator::new(50).unwrap();
        for s in 0..20u64 {
            let w: Vec<f64> = (0..49)
                .map(|i| (((i as u64 + 3) * (s + 7)) % 13) as f64 - 6.0)
                .collect();
            let gw = op.gram(&w).unwrap();
            let num: f64 = w.iter().zip(&gw).map(|(a, b)| a * b).sum();
            let den: f64 = w.iter().map(|a| a * a).sum();
            if den > 0.0 {
                let r = num / den;
                assert!(r > 0.0 && r < GRAM_NORM_BOUND);
            }
        }
    }

    proptest! {
        #[test]
        fn adjoint_identity(x in prop::collection::vec(-10.0f64..10.0, 2..40), seed in 0u64..1000) {
            let n = x.len();
            let op = DifferenceOperator::new(n).unwrap();
            let w: Vec<f64> = (0..n - 1).map(|i| ((i as u64 * 31 + seed) % 19) as f64 / 3.0 - 3.0).collect();
            let bx = op.forward(&x).unwrap();
            let btw = op.adjoint(&w).unwrap();
            let lhs: f64 = bx.iter().zip(&w).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&btw).map(|(a, b)| a * b).sum();
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn gram_is_forward_of_adjoint(w in prop::collection::vec(-5.0f64..5.0, 1..30)) {
            let op = DifferenceOperator::new(w.len() + 1).unwrap();
            let direct = op.gram(&w).unwrap();
            let composed = op.forward(&op.adjoint(&w).unwrap()).unwrap();
            for (a, b) in direct.iter().zip(&composed) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
