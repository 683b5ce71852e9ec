//! End-to-end acceptance criteria, each checked at its stated tolerance.
//!
//! Every criterion prints one `PASS` or `FAIL` line to stderr (not captured
//! by the test harness) and the test fails if any criterion fails. The
//! phase-transition criterion dominates the runtime.

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use rand::Rng;
use tvpt::diffop::{gram_inverse_entry, h_inverse_entry};
use tvpt::experiments::{
    empirical_transition, measurements_for_delta, run_cell, ExperimentOptions, TransitionEstimate,
};
use tvpt::geometry::{
    dist_sq_cone, dist_sq_scaled_subdiff, estimate_cone_dim, jumps_for_epsilon,
    minimize_expected_dist, predicted_curve, sandwich_check, CurveOptions, DistanceOptions,
};
use tvpt::pattern::{
    construct_v0, extract_pattern, random_pattern, verify_weak_decomposability, GradientPattern,
};
use tvpt::rng::{derive_seed, rng_for};
use tvpt::solver::{solve_tv_equality, SolveOptions};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `max |T · C - I|` for the tridiagonal (2, -1) matrix `T` of size `size`.
fn tridiag_times(size: usize, c: impl Fn(usize, usize) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..size {
        for j in 0..size {
            let mut v = 2.0 * c(i, j);
            if i > 0 {
                v -= c(i - 1, j);
            }
            if i + 1 < size {
                v -= c(i + 1, j);
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((v - target).abs());
        }
    }
    worst
}

fn closed_form_inverses() -> Outcome {
    let mut gram_err = 0.0f64;
    for n in 2..=200 {
        let e = tridiag_times(n - 1, |i, j| gram_inverse_entry(i + 1, j + 1, n).unwrap());
        gram_err = gram_err.max(e);
    }
    let mut h_err = 0.0f64;
    for l in 1..=50 {
        h_err = h_err.max(tridiag_times(l, |i, j| {
            h_inverse_entry(i + 1, j + 1, l).unwrap()
        }));
    }
    check(
        gram_err <= 1e-8 && h_err <= 1e-10,
        format!(
            "max |BB^T C - I| = {gram_err:.2e} (n <= 200), max |H C - I| = {h_err:.2e} (l <= 50)"
        ),
    )
}

fn certificate_suite() -> Outcome {
    let mut rng = rng_for(0x6163_6332, &[]);
    let (mut box_w, mut row_w, mut orth_w) = (0.0f64, 0.0f64, 0.0f64);
    let mut failures = 0;
    for t in 0..10_000u64 {
        let n = rng.random_range(2..=300usize);
        let k = rng.random_range(0..n);
        let p = random_pattern(n, k, derive_seed(0x7061, &[t])).unwrap();
        let v0 = construct_v0(&p);
        let c = verify_weak_decomposability(&p, &v0, 1e-10, 8, t).unwrap();
        box_w = box_w.max(c.max_abs);
        row_w = row_w.max(c.row_residual);
        orth_w = orth_w.max(c.orthogonality_residual);
        if c.max_abs > 1.0
            || !c.signs_match
            || c.row_residual > 1e-10
            || c.orthogonality_residual > 1e-9
        {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!("10000 patterns, max |v0| = {box_w}, row residual {row_w:.2e}, orthogonality {orth_w:.2e}, {failures} failing"),
    )
}

fn distance_oracles() -> Outcome {
    let opts = DistanceOptions::default();
    let base = [0.7, -1.3, 0.4, 1.9, -0.2];
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 2..=4 {
        for s in common::all_slot_vectors(n) {
            let p = GradientPattern::from_slots(s.clone()).unwrap();
            for shift in 0..3 {
                let g: Vec<f64> = (0..n)
                    .map(|i| base[(i + 2 * shift) % 5] * (1.0 + shift as f64 * 0.4))
                    .collect();
                for lambda in [0.0, 0.35, 1.0, 2.5] {
                    let lib = dist_sq_scaled_subdiff(&g, lambda, &p, &opts).unwrap().value;
                    worst = worst.max((lib - common::brute_scaled(&g, &s, lambda)).abs());
                    cases += 1;
                }
                let lib = dist_sq_cone(&g, &p, &opts).unwrap().value;
                worst = worst.max((lib - common::brute_cone(&g, &s, 20.0)).abs());
                cases += 1;
            }
        }
    }
    let p = extract_pattern(&[1.0, 1.0, 2.0], 0.0).unwrap();
    let g = [1.0, 0.0, 0.0];
    let scaled = dist_sq_scaled_subdiff(&g, 1.0, &p, &opts).unwrap().value;
    let cone = dist_sq_cone(&g, &p, &opts).unwrap().value;
    let hand = (scaled - 3.0).abs().max((cone - 5.0 / 6.0).abs());
    check(
        worst <= 1e-4 && hand <= 1e-6,
        format!(
            "{cases} grid cases, max deviation {worst:.2e}; hand values {scaled:.9} and {cone:.9}"
        ),
    )
}

fn sandwich_bounds() -> Outcome {
    let mut rng = rng_for(0x7361_6e64, &[]);
    let mut failures = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for t in 0..50u64 {
        let k = rng.random_range(1..100usize);
        let p = random_pattern(100, k, derive_seed(0x7377, &[t])).unwrap();
        let r = sandwich_check(&p, 2000, derive_seed(0x6d63, &[t])).unwrap();
        lo = lo.min(r.difference);
        hi = hi.max(r.difference);
        if !r.pass {
            failures.push((k, r.difference, r.difference_stderr));
        }
    }
    check(
        failures.is_empty(),
        format!("50 patterns (n = 100, 2000 samples), difference range [{lo:.3}, {hi:.3}], failing {failures:?}"),
    )
}

fn analytic_anchors() -> Outcome {
    let n = 60;
    let all_jumps = random_pattern(n, n - 1, 5).unwrap();
    let samples = 4000;
    let est = minimize_expected_dist(&all_jumps, samples, 11).unwrap();
    let lambda = est.lambda_star.unwrap();
    // lambda* is the sample mean of <g, b> / ||b||^2 for b = B^T sign
    let b_norm = (0..n)
        .map(|i| {
            let s = |j: usize| all_jumps.fixed_sign(j).unwrap_or(0.0);
            let a = if i < n - 1 { s(i) } else { 0.0 };
            let c = if i > 0 { s(i - 1) } else { 0.0 };
            (a - c).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    let lambda_bound = 4.0 / (b_norm * (samples as f64).sqrt());
    let ok_empty = (est.mean - n as f64).abs() <= 4.0 * est.stderr && lambda <= lambda_bound;
    let cone = estimate_cone_dim(&GradientPattern::constant(20).unwrap(), samples, 12).unwrap();
    let ok_const = (cone.mean - 1.0).abs() <= 4.0 * cone.stderr;
    check(
        ok_empty && ok_const,
        format!(
            "S empty: min D = {:.3} +- {:.3} vs n = {n}, lambda* = {lambda:.2e} (bound {lambda_bound:.2e}); constant: D cone = {:.4} +- {:.4}",
            est.mean, est.stderr, cone.mean, cone.stderr
        ),
    )
}

fn rate_at(
    t: &TransitionEstimate,
    n: usize,
    k: usize,
    delta: f64,
    seed: u64,
    opts: &ExperimentOptions,
) -> f64 {
    let m = measurements_for_delta(n, delta);
    match t.cells.iter().find(|c| c.m == m) {
        Some(c) => c.success_rate(),
        None => run_cell(n, m, k, 50, seed, opts)
            .unwrap()
            .cell
            .success_rate(),
    }
}

fn phase_transition() -> Outcome {
    let n = 200;
    let seed = 2024;
    let trials = 50;
    let grid = [0.1, 0.2, 0.4];
    let curve_opts = CurveOptions {
        samples: 2000,
        ..Default::default()
    };
    let curve = predicted_curve(n, &grid, &curve_opts, seed).unwrap();
    let opts = ExperimentOptions::default();
    let mut lines = Vec::new();
    let mut ok = true;
    for p in &curve {
        let deltas: Vec<f64> = (-6..=6)
            .map(|j| ((p.delta_pred + 0.025 * j as f64) * 1e9).round() / 1e9)
            .filter(|d| *d > 0.0 && *d <= 1.0)
            .collect();
        let t = empirical_transition(n, p.epsilon, &deltas, trials, seed, &opts).unwrap();
        let k = jumps_for_epsilon(n, p.epsilon);
        let cell_seed = derive_seed(seed, &[k as u64]);
        let above = rate_at(&t, n, k, p.delta_pred + 0.1, cell_seed, &opts);
        let below = rate_at(&t, n, k, p.delta_pred - 0.1, cell_seed, &opts);
        let diff = (p.delta_pred - t.delta_50).abs();
        let row_ok = diff <= 0.05 && above >= 0.9 && below <= 0.1;
        ok &= row_ok;
        lines.push(format!(
            "eps {:.1}: pred {:.4} (+- {:.4}), empirical 50% {:.4} [10% {:.4}, 90% {:.4}], |diff| {diff:.4}, rate at +0.1 {above:.2}, at -0.1 {below:.2}, unconverged {}{}",
            p.epsilon, p.delta_pred, p.stderr, t.delta_50, t.delta_10, t.delta_90, t.not_converged,
            if row_ok { "" } else { " <- fails" }
        ));
    }
    check(
        ok,
        format!(
            "n = 200, 50 trials per cell\n      {}",
            lines.join("\n      ")
        ),
    )
}

fn solver_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for i in 0..25 {
        let (a, y, _) = common::lp_instance(i);
        let (lp, _) = common::tv_lp(&a, &y);
        let r = solve_tv_equality(&a, &y, &SolveOptions::default()).unwrap();
        unconverged += (!r.converged) as usize;
        worst = worst.max(common::rel_diff(r.objective, lp));
    }
    check(
        worst <= 1e-5 && unconverged == 0,
        format!("25 instances (n <= 40), max relative objective gap {worst:.2e}, {unconverged} unconverged"),
    )
}

fn cli_determinism() -> Outcome {
    let run = |args: &[&str], threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_tvpt"))
            .args(args)
            .env("TVPT_THREADS", threads)
            .output()
            .unwrap()
    };
    let predict = [
        "predict",
        "--n",
        "100",
        "--eps",
        "0.1:0.9:0.2",
        "--samples",
        "500",
        "--seed",
        "7",
    ];
    let empirical = [
        "empirical",
        "--n",
        "40",
        "--eps",
        "0.1,0.3",
        "--delta",
        "0.3,0.6",
        "--trials",
        "5",
        "--seed",
        "7",
    ];
    let mut same = true;
    let mut codes = Vec::new();
    for args in [&predict[..], &empirical[..]] {
        let a = run(args, "1");
        let b = run(args, "1");
        let c = run(args, "4");
        codes.push(a.status.code());
        same &= a.status.success() && a.stdout == b.stdout && a.stdout == c.stdout;
    }
    check(same, format!("predict and empirical reruns byte-identical across 1 and 4 threads, exit codes {codes:?}"))
}

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 8] = [
        ("closed-form inverses", closed_form_inverses),
        ("weak decomposability certificates", certificate_suite),
        ("distance oracle equivalence", distance_oracles),
        ("sandwich bound", sandwich_bounds),
        ("analytic anchors", analytic_anchors),
        ("phase-transition reproduction", phase_transition),
        ("solver linear-programming oracle", solver_oracle),
        ("CLI determinism", cli_determinism),
    ];
    // ACCEPTANCE_ONLY=2,5 restricts a local run to the listed criteria
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            let _ = writeln!(std::io::stderr(), "SKIP [{}] {name}", i + 1);
            continue;
        }
        let started = std::time::Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = started.elapsed().as_secs_f64();
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let _ = writeln!(
            std::io::stderr(),
            "{tag} [{}] {name} ({secs:.1} s): {detail}",
            i + 1
        );
        if outcome.is_err() {
            failed.push(name.to_string());
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
