//! One-dimensional minimization of convex functions on `[0, cap]`.

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    /// First right end of the bracket.
    pub initial: f64,
    /// Bracket growth stops here.
    pub cap: f64,
    /// Absolute tolerance on the argument.
    pub tol: f64,
    pub max_evals: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            initial: 1.0,
            cap: 1e6,
            tol: 1e-6,
            max_evals: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub arg: f64,
    pub value: f64,
    /// The minimizer sits at the cap, so the infimum may lie beyond it.
    pub capped: bool,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

struct Tracker<F> {
    f: F,
    evals: usize,
    best: (f64, f64),
}

impl<F: FnMut(f64) -> f64> Tracker<F> {
    fn eval(&mut self, x: f64) -> f64 {
        self.evals += 1;
        let fx = (self.f)(x);
        if fx < self.best.1 {
            self.best = (x, fx);
        }
        fx
    }
}

/// Golden-section search over an expanding bracket `[0, hi]`.
///
/// `hi` doubles until the objective stops decreasing or `cap` is reached.
/// Exact for convex `f` up to `tol` in the argument.
pub fn minimize_convex<F: FnMut(f64) -> f64>(f: F, opts: SearchOptions) -> SearchResult {
    let mut t = Tracker {
        f,
        evals: 0,
        best: (0.0, f64::INFINITY),
    };
    let cap = opts.cap.max(opts.initial);

    let f0 = t.eval(0.0);
    let mut prev = 0.0;
    let mut hi = opts.initial;
    let mut f_hi = t.eval(hi);
    let mut hit_cap = false;
    if f_hi < f0 {
        loop {
            if hi >= cap {
                hit_cap = true;
                break;
            }
            let next = (2.0 * hi).min(cap);
            let f_next = t.eval(next);
            if f_next >= f_hi {
                hi = next;
                break;
            }
            prev = hi;
            hi = next;
            f_hi = f_next;
        }
    }

    // convexity puts the minimizer in [prev, hi]
    let (mut a, mut b) = (prev, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = t.eval(c);
    let mut fd = t.eval(d);
    while b - a > opts.tol && t.evals < opts.max_evals {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = t.eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = t.eval(d);
        }
    }
    let (arg, value) = t.best;
    let capped = hit_cap && cap - arg <= opts.tol.max(1e-9 * cap) + (b - a);
    SearchResult {
        arg,
        value,
        capped,
        evaluations: t.evals,
    }
}
