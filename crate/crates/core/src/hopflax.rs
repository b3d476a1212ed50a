//! Hopf-Lax semigroup `Q_t f(x) = min_y f(y) + d(x,y)^p / (p t^(p-1))`.
//!
//! On a finite space the infimum is a minimum over all points and is
//! evaluated exactly. `D^-(x,t)` and `D^+(x,t)` are the smallest and largest
//! distance from `x` to a minimizer. Between two consecutive changes of the
//! minimizer set every branch is `f(y) + C t^(1-p)`, so `t -> Q_t f(x)` is
//! smooth there; the exceptional times are the kinks where `D^- < D^+`.

use crate::fields::{discrete_slope, global_lipschitz, ScalarField};
use crate::report::{all_pass, Check, WorstOf};
use crate::space::FiniteMetricMeasureSpace;

/// Minimizers within this (relative) distance of the minimum are ties.
pub const ARGMIN_TIE_TOL: f64 = 1e-12;
/// `t` is exceptional for `x` when the minimizer distances spread more than this.
pub const KINK_GAP: f64 = 1e-9;
/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-5;
pub const DERIVATIVE_REL_TOL: f64 = 1e-4;
/// Round-off allowance for inequalities that hold exactly in real arithmetic.
pub const EXACT_TOL: f64 = 1e-12;

pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfLaxEvaluation {
    pub t: f64,
    pub p: f64,
    pub q_values: ScalarField,
    pub d_minus: Vec<f64>,
    pub d_plus: Vec<f64>,
    pub argmin_sets: Vec<Vec<usize>>,
}

fn cost(d: f64, t: f64, p: f64) -> f64 {
    d.powf(p) / (p * t.powf(p - 1.0))
}

/// Exact Hopf-Lax evaluation at time `t` (with `Q_0 f = f`).
pub fn hopf_lax(space: &FiniteMetricMeasureSpace, f: &[f64], t: f64, p: f64) -> HopfLaxEvaluation {
    assert!(p > 1.0, "p must exceed 1");
    assert!(t >= 0.0, "time must be nonnegative");
    let n = space.len();
    assert_eq!(f.len(), n);
    if t == 0.0 {
        return HopfLaxEvaluation {
            t,
            p,
            q_values: ScalarField::new(f.to_vec()).expect("finite field"),
            d_minus: vec![0.0; n],
            d_plus: vec![0.0; n],
            argmin_sets: (0..n).map(|x| vec![x]).collect(),
        };
    }
    let mut q = Vec::with_capacity(n);
    let mut dm = Vec::with_capacity(n);
    let mut dp = Vec::with_capacity(n);
    let mut sets = Vec::with_capacity(n);
    let mut vals = vec![0.0; n];
    for x in 0..n {
        for y in 0..n {
            vals[y] = f[y] + cost(space.dist(x, y), t, p);
        }
        let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let tol = ARGMIN_TIE_TOL * best.abs().max(1.0);
        let set: Vec<usize> = (0..n).filter(|&y| vals[y] <= best + tol).collect();
        let (lo, hi) = set.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), &y| {
            let d = space.dist(x, y);
            (lo.min(d), hi.max(d))
        });
        q.push(best);
        dm.push(lo);
        dp.push(hi);
        sets.push(set);
    }
    HopfLaxEvaluation {
        t,
        p,
        q_values: ScalarField::new(q).expect("finite minimum"),
        d_minus: dm,
        d_plus: dp,
        argmin_sets: sets,
    }
}

/// `t (p Lip f)^(1/(p-1))`, the a priori bound on `D^+`.
pub fn d_plus_bound(lip: f64, t: f64, p: f64) -> f64 {
    t * (p * lip).powf(1.0 / (p - 1.0))
}

/// Characteristic time at which minimizers can reach across the whole space.
pub fn characteristic_time(space: &FiniteMetricMeasureSpace, f: &[f64], p: f64) -> f64 {
    let diam = space.diameter();
    let lip = global_lipschitz(space, f);
    if lip > 0.0 {
        diam / (p * lip).powf(1.0 / (p - 1.0))
    } else {
        diam
    }
}

/// `count` log-spaced times in `[1e-2, 10]` times the characteristic time.
pub fn default_time_grid(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    p: f64,
    count: usize,
) -> Vec<f64> {
    let scale = characteristic_time(space, f, p);
    log_grid(1e-2 * scale, 10.0 * scale, count)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub x: usize,
    pub t: f64,
    pub s: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub violations: Vec<MonotonicityViolation>,
    pub check: Check,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.check.pass
    }
}

/// `D^+(x,t) <= D^-(x,s)` for every pair `t < s` of the grid.
pub fn dpm_monotonicity_check(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    p: f64,
    time_grid: &[f64],
) -> MonotonicityReport {
    assert!(
        time_grid.windows(2).all(|w| w[0] < w[1]) && time_grid.iter().all(|&t| t > 0.0),
        "time grid must be positive and strictly increasing"
    );
    let evals: Vec<_> = time_grid
        .iter()
        .map(|&t| hopf_lax(space, f, t, p))
        .collect();
    let tol = EXACT_TOL * space.diameter().max(1.0);
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, early) in evals.iter().enumerate() {
        for late in &evals[i + 1..] {
            for x in 0..space.len() {
                let residual = early.d_plus[x] - late.d_minus[x];
                worst = worst.max(residual);
                if residual > tol {
                    violations.push(MonotonicityViolation {
                        x,
                        t: early.t,
                        s: late.t,
                        residual,
                    });
                }
            }
        }
    }
    MonotonicityReport {
        violations,
        check: Check::new("dpm_monotonicity", worst, tol),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub x: usize,
    pub t: f64,
    pub finite_difference: f64,
    /// `-(1/q) (D^-/t)^p`
    pub predicted_minus: f64,
    /// `-(1/q) (D^+/t)^p`
    pub predicted_plus: f64,
    /// `D^+ - D^- > KINK_GAP` at `t` itself.
    pub kink: bool,
    /// The minimizer distances change inside the difference stencil.
    pub stencil_kink: bool,
    pub relative_error: f64,
    pub pass: bool,
}

impl DerivativeReport {
    pub fn is_exception(&self) -> bool {
        self.kink || self.stencil_kink
    }
}

/// Central difference of `t -> Q_t f(x)` against `-(1/q) (D^±/t)^p`.
pub fn time_derivative_check(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    p: f64,
    x: usize,
    t: f64,
) -> DerivativeReport {
    assert!(t > 0.0);
    let h = FD_STEP * t;
    let at = hopf_lax(space, f, t, p);
    let before = hopf_lax(space, f, t - h, p);
    let after = hopf_lax(space, f, t + h, p);
    derivative_from_evaluations(&before, &at, &after, x)
}

fn derivative_from_evaluations(
    before: &HopfLaxEvaluation,
    at: &HopfLaxEvaluation,
    after: &HopfLaxEvaluation,
    x: usize,
) -> DerivativeReport {
    let (t, p) = (at.t, at.p);
    let q = conjugate(p);
    let fd = (after.q_values[x] - before.q_values[x]) / (after.t - before.t);
    let predicted = |d: f64| -(d / t).powf(p) / q;
    let kink = at.d_plus[x] - at.d_minus[x] > KINK_GAP;
    let stencil_kink = after.d_plus[x] - before.d_minus[x] > KINK_GAP;
    let exact = predicted(at.d_plus[x]);
    let relative_error = if exact == 0.0 {
        if fd == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (fd - exact).abs() / exact.abs()
    };
    let exception = kink || stencil_kink;
    DerivativeReport {
        x,
        t,
        finite_difference: fd,
        predicted_minus: predicted(at.d_minus[x]),
        predicted_plus: exact,
        kink,
        stencil_kink,
        relative_error,
        pass: exception || relative_error <= DERIVATIVE_REL_TOL,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HjReport {
    /// Worst residual per check over the whole grid.
    pub checks: Vec<Check>,
    /// `(x, t)` pairs skipped as exceptional times.
    pub exceptions: Vec<(usize, f64)>,
    pub derivatives_checked: usize,
}

impl HjReport {
    pub fn passed(&self) -> bool {
        all_pass(&self.checks)
    }
}

/// Hamilton-Jacobi subsolution and slope-bound checks along a time grid.
///
/// Records, per grid time and point:
/// - `d_bound`: `D^+ <= t (p Lip f)^(1/(p-1))`;
/// - `lip_bound`: `Lip(Q_t f) <= p Lip f`;
/// - `two_point`: `Q_t f(z) - Q_t f(y) <= d(z,y) (d(z,y) + D^+(y,t))^(p-1) / t^(p-1)`;
/// - `derivative`: relative error of the derivative identity off exceptional times;
/// - `hj_subsolution`: `dQ/dt + (1/q) slope(Q_t f)^q`, allowed up to the
///   discretization gap implied by the two-point bound across each edge plus
///   `1e-6 (1 + p Lip f)^q`. The continuum slope vanishes on isolated points,
///   so the discrete slope only satisfies the inequality up to this gap;
/// - `nonincreasing`: `dQ/dt <= 0`, the continuum inequality on a finite space.
pub fn hj_subsolution_check(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    p: f64,
    time_grid: &[f64],
) -> HjReport {
    let q = conjugate(p);
    let n = space.len();
    let lip = global_lipschitz(space, f);
    let fscale = 1.0 + f.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let hj_base_tol = 1e-6 * (1.0 + p * lip).powf(q);
    let mut worst = WorstOf::default();
    let mut exceptions = Vec::new();
    let mut derivatives_checked = 0;

    for &t in time_grid {
        assert!(t > 0.0);
        let h = FD_STEP * t;
        let at = hopf_lax(space, f, t, p);
        let before = hopf_lax(space, f, t - h, p);
        let after = hopf_lax(space, f, t + h, p);
        let qv = at.q_values.values();

        let bound = d_plus_bound(lip, t, p);
        for x in 0..n {
            worst.record(Check::new(
                "d_bound",
                at.d_plus[x] - bound,
                EXACT_TOL * (1.0 + bound),
            ));
            worst.record(Check::new("d_order", at.d_minus[x] - at.d_plus[x], 0.0));
            worst.record(Check::new("q_below_f", qv[x] - f[x], EXACT_TOL * fscale));
        }

        let lip_q = global_lipschitz(space, qv);
        worst.record(Check::new(
            "lip_bound",
            lip_q - p * lip,
            EXACT_TOL * (1.0 + p * lip),
        ));

        for y in 0..n {
            for z in 0..n {
                if y == z {
                    continue;
                }
                let d = space.dist(z, y);
                let rhs = d * (d + at.d_plus[y]).powf(p - 1.0) / t.powf(p - 1.0);
                worst.record(Check::new(
                    "two_point",
                    qv[z] - qv[y] - rhs,
                    4.0 * EXACT_TOL * (fscale + rhs),
                ));
            }
        }

        let slope_q = discrete_slope(space, qv);
        for x in 0..n {
            let report = derivative_from_evaluations(&before, &at, &after, x);
            if report.is_exception() {
                exceptions.push((x, t));
                continue;
            }
            derivatives_checked += 1;
            worst.record(Check::new(
                "derivative",
                report.relative_error,
                DERIVATIVE_REL_TOL,
            ));
            worst.record(Check::new(
                "nonincreasing",
                report.finite_difference,
                1e-9 * fscale / t,
            ));
            let residual = report.finite_difference + slope_q[x].powf(q) / q;
            let reach = space
                .neighbors(x)
                .iter()
                .map(|&(z, w)| ((w + at.d_plus[x].max(at.d_plus[z])) / t).powf(p))
                .fold(0.0, f64::max);
            let gap = (reach - (at.d_plus[x] / t).powf(p)) / q;
            worst.record(
                Check::new("hj_subsolution", residual, hj_base_tol + gap)
                    .with_note("discrete slope; tolerance includes edge discretization gap"),
            );
        }
    }

    HjReport {
        checks: worst.into_checks(),
        exceptions,
        derivatives_checked,
    }
}

/// `psi^c(y) = min_x d(x,y)^p / p - psi(x)`, which equals `Q_1(-psi)(y)`.
pub fn c_transform(space: &FiniteMetricMeasureSpace, psi: &[f64], p: f64) -> ScalarField {
    let n = space.len();
    assert_eq!(psi.len(), n);
    ScalarField::from_fn(n, |y| {
        (0..n)
            .map(|x| space.dist(x, y).powf(p) / p - psi[x])
            .fold(f64::INFINITY, f64::min)
    })
}
