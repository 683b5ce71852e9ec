//! Flat-group structure of a signal and the weak-decomposability certificate.
//!
//! For a signal `x`, the subdifferential of `||Bx||_1` is `{B^T v : v in V}`
//! where `v[i] = sign(x[i] - x[i+1])` on strict slopes and `v[i]` ranges over
//! `[-1, 1]` on flat pairs. The flat indices form the set `S`, split into
//! maximal runs called flat groups.
//!
//! [`construct_v0`] builds the member `v0` of `V` whose image `B^T v0` is
//! orthogonal to `B^T (v - v0)` for every `v` in `V`. It exists for every
//! pattern: on each flat group the rows `(BB^T v0)_S = 0` force `v0` to
//! interpolate linearly between the neighbouring fixed signs, which keeps it
//! inside the unit box.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffop::{solve_restricted_gram, DifferenceOperator};
use crate::error::{ensure_finite, Error, Result};
use crate::rng::rng_for;

/// A maximal run of flat gradient indices, 0-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatGroup {
    pub begin: usize,
    pub end: usize,
}

impl FlatGroup {
    pub fn len(&self) -> usize {
        self.end - self.begin + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Flat groups of a signal plus the fixed subgradient signs off the groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradientPattern {
    n: usize,
    groups: Vec<FlatGroup>,
    // 0 on S, +1 / -1 on S^c
    signs: Vec<i8>,
}

impl GradientPattern {
    /// Build from per-gradient slots: `0` marks a flat index, `+1`/`-1` a
    /// fixed sign. The signal length is `slots.len() + 1`.
    pub fn from_slots(slots: Vec<i8>) -> Result<Self> {
        let n = slots.len() + 1;
        if n < 2 {
            return Err(Error::SignalTooShort(n));
        }
        if let Some(bad) = slots.iter().find(|s| !matches!(s, -1..=1)) {
            return Err(Error::invalid(format!(
                "slot value {bad} is not one of -1, 0, 1"
            )));
        }
        let mut groups = Vec::new();
        let mut i = 0;
        while i < slots.len() {
            if slots[i] == 0 {
                let begin = i;
                while i + 1 < slots.len() && slots[i + 1] == 0 {
                    i += 1;
                }
                groups.push(FlatGroup { begin, end: i });
            }
            i += 1;
        }
        Ok(Self {
            n,
            groups,
            signs: slots,
        })
    }

    /// The pattern where every gradient is flat (a constant signal).
    pub fn constant(n: usize) -> Result<Self> {
        Self::from_slots(vec![0; n.checked_sub(1).ok_or(Error::SignalTooShort(n))?])
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn gradient_len(&self) -> usize {
        self.n - 1
    }

    pub fn groups(&self) -> &[FlatGroup] {
        &self.groups
    }

    /// Per-gradient slots, `0` on flat indices.
    pub fn slots(&self) -> &[i8] {
        &self.signs
    }

    /// `|S|`
    pub fn flat_len(&self) -> usize {
        self.groups.iter().map(FlatGroup::len).sum()
    }

    /// `|S^c|`, the number of nonzero gradients.
    pub fn jump_count(&self) -> usize {
        self.n - 1 - self.flat_len()
    }

    pub fn is_flat(&self, i: usize) -> bool {
        self.signs[i] == 0
    }

    pub fn fixed_sign(&self, i: usize) -> Option<f64> {
        match self.signs[i] {
            0 => None,
            s => Some(s as f64),
        }
    }

    /// Flat indices in increasing order.
    pub fn flat_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.groups.iter().flat_map(|g| g.begin..=g.end)
    }

    /// The fixed part of `v`: signs on `S^c`, zero on `S`.
    pub fn fixed_part(&self) -> Vec<f64> {
        self.signs.iter().map(|&s| s as f64).collect()
    }

    /// Whether `v` belongs to `V` up to `tol` on the box constraint; fixed
    /// signs must match exactly.
    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.len() == self.n - 1
            && v.iter().zip(&self.signs).all(|(&vi, &s)| match s {
                0 => vi.abs() <= 1.0 + tol,
                s => vi == s as f64,
            })
    }
}

/// Flat-group structure of `x`: index `i` is flat iff `|x[i] - x[i+1]| <= tie_tol`.
pub fn extract_pattern(x: &[f64], tie_tol: f64) -> Result<GradientPattern> {
    if x.len() < 2 {
        return Err(Error::SignalTooShort(x.len()));
    }
    ensure_finite(x)?;
    if tie_tol.is_nan() || tie_tol < 0.0 {
        return Err(Error::invalid("tie tolerance must be nonnegative"));
    }
    let slots = x
        .windows(2)
        .map(|w| {
            let d = w[0] - w[1];
            if d.abs() <= tie_tol {
                0
            } else if d > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    GradientPattern::from_slots(slots)
}

/// Like [`extract_pattern`] but rejects the all-zero signal, for callers that
/// need the subdifferential at a nonzero point.
pub fn extract_pattern_nonzero(x: &[f64], tie_tol: f64) -> Result<GradientPattern> {
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroSignal);
    }
    extract_pattern(x, tie_tol)
}

/// Random pattern with `k` jumps placed uniformly without replacement and
/// independent uniform signs.
pub fn random_pattern(n: usize, k: usize, seed: u64) -> Result<GradientPattern> {
    if n < 2 {
        return Err(Error::SignalTooShort(n));
    }
    if k > n - 1 {
        return Err(Error::invalid(format!("k = {k} exceeds n - 1 = {}", n - 1)));
    }
    let mut rng = rng_for(seed, &[0x7061_7474]);
    let mut slots = vec![0i8; n - 1];
    for i in sample(&mut rng, n - 1, k) {
        slots[i] = if rng.random::<bool>() { 1 } else { -1 };
    }
    GradientPattern::from_slots(slots)
}

/// Right-hand side of the block system for `v0` on `S`: `-(BB^T)_{S,S^c} v_{S^c}`.
///
/// Only the first and last row of each group touch `S^c`, with coefficient -1.
fn restricted_rhs(pattern: &GradientPattern) -> Vec<f64> {
    let m = pattern.gradient_len();
    let mut rhs = Vec::with_capacity(pattern.flat_len());
    for g in pattern.groups() {
        let start = rhs.len();
        rhs.resize(start + g.len(), 0.0);
        if g.begin > 0 {
            rhs[start] += pattern.signs[g.begin - 1] as f64;
        }
        if g.end + 1 < m {
            *rhs.last_mut().unwrap() += pattern.signs[g.end + 1] as f64;
        }
    }
    rhs
}

/// The weak-decomposability subgradient `v0` via the blockwise `H(l)` solves.
///
/// Each solved entry is a convex combination of neighbouring values in
/// `{-1, 0, 1}`; clamping to `[-1, 1]` only removes rounding of order 1e-15.
pub fn construct_v0(pattern: &GradientPattern) -> Vec<f64> {
    let rhs = restricted_rhs(pattern);
    let t = solve_restricted_gram(pattern, &rhs).expect("rhs built for this pattern");
    let mut v0 = pattern.fixed_part();
    for (i, val) in pattern.flat_indices().zip(t) {
        v0[i] = val.clamp(-1.0, 1.0);
    }
    v0
}

/// The same `v0` built by linear interpolation across each flat group between
/// its neighbouring fixed signs, with value 0 at the virtual positions `-1`
/// and `n - 1` (0-based gradient indices).
pub fn construct_v0_by_interpolation(pattern: &GradientPattern) -> Vec<f64> {
    let m = pattern.gradient_len();
    let mut v0 = pattern.fixed_part();
    for g in pattern.groups() {
        let left = if g.begin > 0 {
            pattern.signs[g.begin - 1] as f64
        } else {
            0.0
        };
        let right = if g.end + 1 < m {
            pattern.signs[g.end + 1] as f64
        } else {
            0.0
        };
        let span = (g.len() + 1) as f64;
        for (step, i) in (g.begin..=g.end).enumerate() {
            let t = (step + 1) as f64 / span;
            v0[i] = left + (right - left) * t;
        }
    }
    v0
}

/// Residuals that prove (or refute) weak decomposability at `v0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgradientCertificate {
    pub n: usize,
    /// 1-based inclusive `[begin, end]` pairs.
    pub groups: Vec<[usize; 2]>,
    pub v0: Vec<f64>,
    pub max_abs: f64,
    pub row_residual: f64,
    pub orthogonality_residual: f64,
    pub signs_match: bool,
    pub pass: bool,
}

/// Check `v0` against the pattern.
///
/// Box feasibility and the exact row condition `(BB^T v0)_S = 0` are the
/// algebraic check; orthogonality `<B^T v - B^T v0, B^T v0> = 0` is sampled
/// over `n_samples` random members of `V`. A failing certificate is returned,
/// not an error.
pub fn verify_weak_decomposability(
    pattern: &GradientPattern,
    v0: &[f64],
    tol: f64,
    n_samples: usize,
    seed: u64,
) -> Result<SubgradientCertificate> {
    let m = pattern.gradient_len();
    if v0.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            got: v0.len(),
        });
    }
    ensure_finite(v0)?;
    let op = DifferenceOperator::new(pattern.signal_len())?;

    let max_abs = v0.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let signs_match = (0..m).all(|i| pattern.fixed_sign(i).is_none_or(|s| v0[i] == s));

    let gv0 = op.gram(v0)?;
    let row_residual = pattern
        .flat_indices()
        .fold(0.0f64, |a, i| a.max(gv0[i].abs()));

    let btv0 = op.adjoint(v0)?;
    let mut rng = rng_for(seed, &[0x6365_7274]);
    let mut v = vec![0.0; m];
    let mut btv = vec![0.0; m + 1];
    let mut orthogonality_residual = 0.0f64;
    if pattern.flat_len() > 0 {
        for _ in 0..n_samples {
            for (i, vi) in v.iter_mut().enumerate() {
                *vi = pattern
                    .fixed_sign(i)
                    .unwrap_or_else(|| rng.random_range(-1.0..=1.0));
            }
            op.adjoint_into(&v, &mut btv);
            let ip: f64 = btv.iter().zip(&btv0).map(|(a, b)| (a - b) * b).sum();
            orthogonality_residual = orthogonality_residual.max(ip.abs());
        }
    }

    let pass =
        max_abs <= 1.0 + tol && signs_match && row_residual <= tol && orthogonality_residual <= tol;
    Ok(SubgradientCertificate {
        n: pattern.signal_len(),
        groups: pattern
            .groups()
            .iter()
            .map(|g| [g.begin + 1, g.end + 1])
            .collect(),
        v0: v0.to_vec(),
        max_abs,
        row_residual,
        orthogonality_residual,
        signs_match,
        pass,
    })
}
