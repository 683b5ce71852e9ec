//! Distances to the scaled TV subdifferential and to its cone.
//!
//! With `V` the set of admissible subgradient vectors of a pattern, the
//! scaled subdifferential is `lambda * {B^T v : v in V}`. The squared distance
//! from `g` to it is a box-constrained least-squares problem in the flat
//! coordinates `v_S`. Each flat group `[b, e]` only touches signal coordinates
//! `b..=e+1`, and distinct groups touch disjoint coordinates, so the problem
//! splits into one 1-D TV-denoising problem per group:
//!
//! ```text
//! min_{|u| <= 1} ||s - lambda D^T u||^2  =  ||z*||^2,
//! z* = argmin_z 1/2 ||z - s||^2 + lambda ||D z||_1,
//! ```
//!
//! where `s` is `g - lambda B^T v_fixed` on the group's coordinates. The
//! default [`InnerMethod::Exact`] solves those directly; the projected
//! gradient method is kept as an independent route.

pub mod denoise;
pub mod search;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffop::{DifferenceOperator, GRAM_NORM_BOUND};
use crate::error::{ensure_finite, Error, Result};
use crate::pattern::{random_pattern, GradientPattern};
use crate::rng::{gaussian_vec, rng_for};
use denoise::tv_denoise;
pub use search::{minimize_convex, SearchOptions, SearchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InnerMethod {
    /// Per-group exact TV denoising.
    #[default]
    Exact,
    /// Projected gradient on `v_S` with step `1 / (4 lambda^2)`.
    ProjectedGradient,
}

#[derive(Debug, Clone, Copy)]
pub struct DistanceOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: InnerMethod,
    pub search: SearchOptions,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 100_000,
            method: InnerMethod::Exact,
            search: SearchOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceResult {
    /// Squared distance.
    pub value: f64,
    pub minimizer_v: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// Norm of the projected gradient of `1/2 ||g - lambda B^T v||^2`,
    /// divided by `lambda`.
    pub kkt_residual: f64,
    pub converged: bool,
    /// Only for cone queries: the optimal scale reached the search cap.
    pub capped: bool,
}

/// Per-pattern data reused across many distance queries.
#[derive(Debug, Clone)]
pub struct SubdiffGeometry<'a> {
    pattern: &'a GradientPattern,
    op: DifferenceOperator,
    bt_fixed: Vec<f64>,
    // (first signal coordinate, number of coordinates) per flat group
    segments: Vec<(usize, usize)>,
    max_segment: usize,
}

/// Scratch buffers for one thread.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    s: Vec<f64>,
    z: Vec<f64>,
}

impl<'a> SubdiffGeometry<'a> {
    pub fn new(pattern: &'a GradientPattern) -> Self {
        let op = DifferenceOperator::new(pattern.signal_len()).expect("patterns have n >= 2");
        let bt_fixed = op.adjoint(&pattern.fixed_part()).expect("length matches");
        let segments: Vec<(usize, usize)> = pattern
            .groups()
            .iter()
            .map(|g| (g.begin, g.len() + 1))
            .collect();
        let max_segment = segments.iter().map(|s| s.1).max().unwrap_or(0);
        Self {
            pattern,
            op,
            bt_fixed,
            segments,
            max_segment,
        }
    }

    pub fn pattern(&self) -> &GradientPattern {
        self.pattern
    }

    pub fn workspace(&self) -> Workspace {
        Workspace {
            s: vec![0.0; self.max_segment],
            z: vec![0.0; self.max_segment],
        }
    }

    fn check_g(&self, g: &[f64]) -> Result<()> {
        if g.len() != self.op.signal_len() {
            return Err(Error::LengthMismatch {
                expected: self.op.signal_len(),
                got: g.len(),
            });
        }
        ensure_finite(g)
    }

    /// Squared distance from `g` to `lambda * subdiff`, value only.
    ///
    /// `g` must have the pattern's signal length; no validation here.
    pub fn scaled_value(&self, g: &[f64], lambda: f64, ws: &mut Workspace) -> f64 {
        if lambda == 0.0 {
            return g.iter().map(|v| v * v).sum();
        }
        let h = |i: usize| g[i] - lambda * self.bt_fixed[i];
        let mut total = 0.0;
        let mut pos = 0;
        for &(start, len) in &self.segments {
            total += (pos..start).map(|i| h(i) * h(i)).sum::<f64>();
            let (s, z) = (&mut ws.s[..len], &mut ws.z[..len]);
            for (j, sj) in s.iter_mut().enumerate() {
                *sj = h(start + j);
            }
            tv_denoise(s, lambda, z);
            total += z.iter().map(|v| v * v).sum::<f64>();
            pos = start + len;
        }
        total += (pos..g.len()).map(|i| h(i) * h(i)).sum::<f64>();
        total
    }

    /// Exact minimizer `v` of `||g - lambda B^T v||` over `V`.
    fn exact_minimizer(&self, g: &[f64], lambda: f64, ws: &mut Workspace) -> Vec<f64> {
        let mut v = self.pattern.fixed_part();
        if lambda == 0.0 {
            return v;
        }
        for (&(start, len), grp) in self.segments.iter().zip(self.pattern.groups()) {
            let (s, z) = (&mut ws.s[..len], &mut ws.z[..len]);
            for (j, sj) in s.iter_mut().enumerate() {
                *sj = g[start + j] - lambda * self.bt_fixed[start + j];
            }
            tv_denoise(s, lambda, z);
            let mut cum = 0.0;
            for j in 0..grp.len() {
                cum += (s[j] - z[j]) / lambda;
                let jump = z[j] - z[j + 1];
                v[grp.begin + j] = if jump != 0.0 {
                    jump.signum()
                } else {
                    cum.clamp(-1.0, 1.0)
                };
            }
        }
        v
    }

    /// `g - lambda B^T v`
    fn residual(&self, g: &[f64], lambda: f64, v: &[f64], r: &mut [f64]) {
        self.op.adjoint_into(v, r);
        for (ri, gi) in r.iter_mut().zip(g) {
            *ri = gi - lambda * *ri;
        }
    }

    /// Projected-gradient norm of the box problem in `v_S`, in units of `lambda`.
    fn kkt(&self, v: &[f64], r: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in self.pattern.flat_indices() {
            // d/dv_i of 1/2||r||^2 is -lambda (r_i - r_{i+1})
            let grad = -(r[i] - r[i + 1]);
            let viol = if v[i] >= 1.0 {
                grad.max(0.0)
            } else if v[i] <= -1.0 {
                (-grad).max(0.0)
            } else {
                grad.abs()
            };
            acc += viol * viol;
        }
        acc.sqrt()
    }

    /// Projected gradient with constant step `1 / (L lambda^2)`, `L = 4`.
    fn projected_gradient(
        &self,
        g: &[f64],
        lambda: f64,
        v: &mut [f64],
        tol: f64,
        max_iter: usize,
    ) -> (usize, f64) {
        let flat: Vec<usize> = self.pattern.flat_indices().collect();
        let mut r = vec![0.0; g.len()];
        let step = 1.0 / (GRAM_NORM_BOUND * lambda);
        let mut iters = 0;
        loop {
            self.residual(g, lambda, v, &mut r);
            let res = self.kkt(v, &r);
            if res <= tol || iters >= max_iter {
                return (iters, res);
            }
            for &i in &flat {
                v[i] = (v[i] + step * (r[i] - r[i + 1])).clamp(-1.0, 1.0);
            }
            iters += 1;
        }
    }

    fn finish(
        &self,
        g: &[f64],
        lambda: f64,
        v: Vec<f64>,
        iterations: usize,
        tol: f64,
    ) -> DistanceResult {
        let mut r = vec![0.0; g.len()];
        self.residual(g, lambda, &v, &mut r);
        let kkt_residual = if lambda == 0.0 { 0.0 } else { self.kkt(&v, &r) };
        DistanceResult {
            value: r.iter().map(|x| x * x).sum(),
            minimizer_v: v,
            lambda,
            iterations,
            kkt_residual,
            converged: kkt_residual <= tol * lambda.max(1.0),
            capped: false,
        }
    }

    /// Squared distance from `g` to `lambda * subdiff` with its minimizer.
    pub fn dist_sq_scaled(
        &self,
        g: &[f64],
        lambda: f64,
        opts: &DistanceOptions,
    ) -> Result<DistanceResult> {
        self.check_g(g)?;
        check_tol(opts.tol)?;
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid("lambda must be finite and nonnegative"));
        }
        let mut ws = self.workspace();
        match opts.method {
            InnerMethod::Exact => {
                let v = self.exact_minimizer(g, lambda, &mut ws);
                Ok(self.finish(g, lambda, v, 1, opts.tol))
            }
            InnerMethod::ProjectedGradient => {
                let mut v = self.pattern.fixed_part();
                let iters = if lambda > 0.0 {
                    self.projected_gradient(g, lambda, &mut v, opts.tol, opts.max_iter)
                        .0
                } else {
                    0
                };
                Ok(self.finish(g, lambda, v, iters, opts.tol))
            }
        }
    }

    /// Squared distance from `g` to the cone generated by the subdifferential.
    pub fn dist_sq_cone(&self, g: &[f64], opts: &DistanceOptions) -> Result<DistanceResult> {
        self.check_g(g)?;
        check_tol(opts.tol)?;
        let mut ws = self.workspace();
        match opts.method {
            InnerMethod::Exact => {
                let found = minimize_convex(|lam| self.scaled_value(g, lam, &mut ws), opts.search);
                let v = self.exact_minimizer(g, found.arg, &mut ws);
                let mut res = self.finish(g, found.arg, v, found.evaluations, opts.tol);
                res.capped = found.capped;
                Ok(res)
            }
            InnerMethod::ProjectedGradient => {
                // warm start across scale evaluations
                let mut v = self.pattern.fixed_part();
                let mut r = vec![0.0; g.len()];
                let mut inner = 0usize;
                let found = minimize_convex(
                    |lam| {
                        if lam > 0.0 {
                            inner += self
                                .projected_gradient(g, lam, &mut v, opts.tol, opts.max_iter)
                                .0;
                        }
                        self.residual(g, lam, &v, &mut r);
                        r.iter().map(|x| x * x).sum()
                    },
                    opts.search,
                );
                let mut v = self.pattern.fixed_part();
                if found.arg > 0.0 {
                    inner += self
                        .projected_gradient(g, found.arg, &mut v, opts.tol, opts.max_iter)
                        .0;
                }
                let mut res = self.finish(g, found.arg, v, inner, opts.tol);
                res.capped = found.capped;
                Ok(res)
            }
        }
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("tolerance must be positive"))
    }
}

/// `dist(g, lambda * subdiff)^2` for the subdifferential described by `pattern`.
pub fn dist_sq_scaled_subdiff(
    g: &[f64],
    lambda: f64,
    pattern: &GradientPattern,
    opts: &DistanceOptions,
) -> Result<DistanceResult> {
    SubdiffGeometry::new(pattern).dist_sq_scaled(g, lambda, opts)
}

/// `dist(g, cone(subdiff))^2`, minimizing over the scale.
pub fn dist_sq_cone(
    g: &[f64],
    pattern: &GradientPattern,
    opts: &DistanceOptions,
) -> Result<DistanceResult> {
    SubdiffGeometry::new(pattern).dist_sq_cone(g, opts)
}

/// Monte Carlo estimate of a mean squared distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(samples)`.
    pub stderr: f64,
    pub samples: usize,
    pub lambda_star: Option<f64>,
    #[serde(default)]
    pub capped: bool,
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 2 {
        Err(Error::invalid("need at least 2 Monte Carlo samples"))
    } else {
        Ok(())
    }
}

/// The Gaussian sample set for `(seed, samples)`; sample `j` depends only on
/// `(seed, j)`.
pub fn gaussian_samples(n: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..samples)
        .into_par_iter()
        .map(|j| gaussian_vec(&mut rng_for(seed, &[j as u64]), n))
        .collect()
}

/// Per-sample squared distances to `lambda * subdiff`, in sample order.
fn scaled_values(geom: &SubdiffGeometry<'_>, gs: &[Vec<f64>], lambda: f64) -> Vec<f64> {
    gs.par_iter()
        .map_init(
            || geom.workspace(),
            |ws, g| geom.scaled_value(g, lambda, ws),
        )
        .collect()
}

fn ordered_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Estimate `E dist(g, lambda * subdiff)^2` for `g ~ N(0, I)`.
pub fn estimate_expected_dist(
    pattern: &GradientPattern,
    lambda: f64,
    samples: usize,
    seed: u64,
) -> Result<DimensionEstimate> {
    check_samples(samples)?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::invalid("lambda must be finite and nonnegative"));
    }
    let geom = SubdiffGeometry::new(pattern);
    let gs = gaussian_samples(pattern.signal_len(), samples, seed);
    let (mean, stderr) = mean_stderr(&scaled_values(&geom, &gs, lambda));
    Ok(DimensionEstimate {
        mean,
        stderr,
        samples,
        lambda_star: Some(lambda),
        capped: false,
    })
}

/// Estimate `min_lambda E dist(g, lambda * subdiff)^2`.
///
/// The sample set is fixed across all scales (common random numbers), so the
/// objective is the convex sample-average function and the golden-section
/// search is exact up to its tolerance.
pub fn minimize_expected_dist(
    pattern: &GradientPattern,
    samples: usize,
    seed: u64,
) -> Result<DimensionEstimate> {
    minimize_expected_dist_with(pattern, samples, seed, SearchOptions::default())
}

pub fn minimize_expected_dist_with(
    pattern: &GradientPattern,
    samples: usize,
    seed: u64,
    search: SearchOptions,
) -> Result<DimensionEstimate> {
    check_samples(samples)?;
    let geom = SubdiffGeometry::new(pattern);
    let gs = gaussian_samples(pattern.signal_len(), samples, seed);
    Ok(minimize_on_samples(&geom, &gs, search).0)
}

fn minimize_on_samples(
    geom: &SubdiffGeometry<'_>,
    gs: &[Vec<f64>],
    search: SearchOptions,
) -> (DimensionEstimate, Vec<f64>) {
    let found = minimize_convex(|lam| ordered_mean(&scaled_values(geom, gs, lam)), search);
    let values = scaled_values(geom, gs, found.arg);
    let (mean, stderr) = mean_stderr(&values);
    let est = DimensionEstimate {
        mean,
        stderr,
        samples: gs.len(),
        lambda_star: Some(found.arg),
        capped: found.capped,
    };
    (est, values)
}

fn cone_values(
    geom: &SubdiffGeometry<'_>,
    gs: &[Vec<f64>],
    search: SearchOptions,
) -> Vec<(f64, bool)> {
    gs.par_iter()
        .map_init(
            || geom.workspace(),
            |ws, g| {
                let r = minimize_convex(|lam| geom.scaled_value(g, lam, ws), search);
                (r.value, r.capped)
            },
        )
        .collect()
}

/// Estimate `E dist(g, cone(subdiff))^2`.
pub fn estimate_cone_dim(
    pattern: &GradientPattern,
    samples: usize,
    seed: u64,
) -> Result<DimensionEstimate> {
    check_samples(samples)?;
    let geom = SubdiffGeometry::new(pattern);
    let gs = gaussian_samples(pattern.signal_len(), samples, seed);
    let vals = cone_values(&geom, &gs, SearchOptions::default());
    let values: Vec<f64> = vals.iter().map(|v| v.0).collect();
    let (mean, stderr) = mean_stderr(&values);
    Ok(DimensionEstimate {
        mean,
        stderr,
        samples,
        lambda_star: None,
        capped: vals.iter().any(|v| v.1),
    })
}

/// The additive gap allowed between `min_lambda D(lambda subdiff)` and
/// `D(cone(subdiff))` under weak decomposability.
pub const SANDWICH_GAP: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub n: usize,
    pub jumps: usize,
    pub min_scaled: DimensionEstimate,
    pub cone: DimensionEstimate,
    /// `min_scaled.mean - cone.mean`
    pub difference: f64,
    /// Paired standard error of the difference.
    pub difference_stderr: f64,
    pub pass: bool,
}

/// Check `D(cone) <= min_lambda D(lambda subdiff) <= D(cone) + 6` on one
/// common sample set, with a 3-sigma allowance on each side.
pub fn sandwich_check(
    pattern: &GradientPattern,
    samples: usize,
    seed: u64,
) -> Result<SandwichReport> {
    check_samples(samples)?;
    let geom = SubdiffGeometry::new(pattern);
    let gs = gaussian_samples(pattern.signal_len(), samples, seed);
    let (min_scaled, at_star) = minimize_on_samples(&geom, &gs, SearchOptions::default());
    let cone_vals = cone_values(&geom, &gs, SearchOptions::default());
    let cone_only: Vec<f64> = cone_vals.iter().map(|v| v.0).collect();
    let (cmean, cse) = mean_stderr(&cone_only);
    let cone = DimensionEstimate {
        mean: cmean,
        stderr: cse,
        samples,
        lambda_star: None,
        capped: cone_vals.iter().any(|v| v.1),
    };
    let diffs: Vec<f64> = at_star.iter().zip(&cone_only).map(|(a, b)| a - b).collect();
    let (difference, difference_stderr) = mean_stderr(&diffs);
    let pass = difference >= -3.0 * difference_stderr
        && difference <= SANDWICH_GAP + 3.0 * difference_stderr;
    Ok(SandwichReport {
        n: pattern.signal_len(),
        jumps: pattern.jump_count(),
        min_scaled,
        cone,
        difference,
        difference_stderr,
        pass,
    })
}

/// One point of the predicted phase-transition curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub delta_pred: f64,
    pub stderr: f64,
    pub lambda_star: f64,
    pub samples: usize,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct CurveOptions {
    pub samples: usize,
    /// Random patterns averaged per sparsity level.
    pub patterns: usize,
    pub search: SearchOptions,
}

impl Default for CurveOptions {
    fn default() -> Self {
        Self {
            samples: 500,
            patterns: 5,
            search: SearchOptions::default(),
        }
    }
}

/// Number of jumps for a gradient sparsity fraction: `round(eps (n - 1))`.
pub fn jumps_for_epsilon(n: usize, epsilon: f64) -> usize {
    ((epsilon * (n - 1) as f64).round() as usize).min(n - 1)
}

/// Predicted transition `delta(eps) = min_lambda D(lambda subdiff) / n`,
/// averaged over random patterns with `round(eps (n - 1))` jumps.
pub fn predicted_curve(
    n: usize,
    epsilon_grid: &[f64],
    opts: &CurveOptions,
    seed: u64,
) -> Result<Vec<CurvePoint>> {
    if n < 2 {
        return Err(Error::SignalTooShort(n));
    }
    check_samples(opts.samples)?;
    if opts.patterns == 0 {
        return Err(Error::invalid(
            "need at least one pattern per sparsity level",
        ));
    }
    if let Some(e) = epsilon_grid.iter().find(|e| !(0.0..=1.0).contains(*e)) {
        return Err(Error::invalid(format!("epsilon {e} outside [0, 1]")));
    }
    epsilon_grid
        .iter()
        .enumerate()
        .map(|(ei, &epsilon)| {
            let k = jumps_for_epsilon(n, epsilon);
            let mut means = Vec::with_capacity(opts.patterns);
            let mut ses = Vec::with_capacity(opts.patterns);
            let mut lambdas = Vec::with_capacity(opts.patterns);
            for p in 0..opts.patterns {
                let pseed = crate::rng::derive_seed(seed, &[ei as u64, p as u64]);
                let pattern = random_pattern(n, k, pseed)?;
                let geom = SubdiffGeometry::new(&pattern);
                let gs = gaussian_samples(n, opts.samples, pseed);
                let (est, _) = minimize_on_samples(&geom, &gs, opts.search);
                means.push(est.mean);
                ses.push(est.stderr);
                lambdas.push(est.lambda_star.unwrap_or(f64::NAN));
            }
            let pcount = opts.patterns as f64;
            let mean = ordered_mean(&means);
            let mc = (ses.iter().map(|s| s * s).sum::<f64>()).sqrt() / pcount;
            let se = if opts.patterns >= 2 {
                mean_stderr(&means).1.max(mc)
            } else {
                mc
            };
            Ok(CurvePoint {
                epsilon,
                delta_pred: mean / n as f64,
                stderr: se / n as f64,
                lambda_star: ordered_mean(&lambdas),
                samples: opts.samples,
                n,
                seed,
            })
        })
        .collect()
}
