//! Primal-dual interior-point solver for separable convex objectives under
//! linear inequality constraints:
//!
//! ```text
//! minimize  sum_i phi_i(z_i)   subject to  G z >= h
//! ```
//!
//! Each `phi_i` is zero, a weighted quadratic, or a weighted power
//! `w * z^r` (`r > 1`, requiring `z > 0`). Iterates stay strictly feasible,
//! so the caller supplies a strictly feasible starting point.
//!
//! The multipliers returned with the solution certify optimality: the
//! stationarity residual `grad - G^T lambda` and the complementarity gap
//! `lambda . (G z - h)` both go to zero.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Term {
    /// `weight / 2 * (z - center)^2`
    Quadratic { weight: f64, center: f64 },
    /// `weight * z^exponent`
    Power { weight: f64, exponent: f64 },
}

impl Term {
    fn value(&self, z: f64) -> f64 {
        match *self {
            Term::Quadratic { weight, center } => 0.5 * weight * (z - center).powi(2),
            Term::Power { weight, exponent } => weight * z.powf(exponent),
        }
    }

    fn derivative(&self, z: f64) -> f64 {
        match *self {
            Term::Quadratic { weight, center } => weight * (z - center),
            Term::Power { weight, exponent } => weight * exponent * z.powf(exponent - 1.0),
        }
    }

    fn curvature(&self, z: f64) -> f64 {
        match *self {
            Term::Quadratic { weight, .. } => weight,
            Term::Power { weight, exponent } => {
                weight * exponent * (exponent - 1.0) * z.powf(exponent - 2.0)
            }
        }
    }

    fn in_domain(&self, z: f64) -> bool {
        match self {
            Term::Power { .. } => z > 0.0,
            _ => z.is_finite(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub terms: Vec<Term>,
    /// `m x n` constraint matrix.
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Options {
    /// Stop when `lambda . slack <= gap_tol * (1 + |objective|)`.
    pub gap_tol: f64,
    /// and `|grad - G^T lambda|_inf <= dual_tol * (1 + |grad|_inf)`.
    pub dual_tol: f64,
    /// Looser pair accepted once progress stalls on rounding error.
    pub acceptable_tol: f64,
    pub max_iter: usize,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            gap_tol: 1e-13,
            dual_tol: 1e-12,
            acceptable_tol: 1e-10,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Solution {
    pub z: DVector<f64>,
    pub lambda: DVector<f64>,
    pub slack: DVector<f64>,
    pub dual_residual: f64,
    pub iterations: usize,
}

impl Problem {
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        self.terms
            .iter()
            .zip(z.iter())
            .map(|(t, &v)| t.value(v))
            .sum()
    }

    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            z.len(),
            self.terms
                .iter()
                .zip(z.iter())
                .map(|(t, &v)| t.derivative(v)),
        )
    }

    fn curvature(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            z.len(),
            self.terms
                .iter()
                .zip(z.iter())
                .map(|(t, &v)| t.curvature(v)),
        )
    }

    fn feasible(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        if !self
            .terms
            .iter()
            .zip(z.iter())
            .all(|(t, &v)| t.in_domain(v))
        {
            return None;
        }
        let s = &self.g * z - &self.h;
        s.iter().all(|&v| v > 0.0).then_some(s)
    }
}

fn residual_norm(r_dual: &DVector<f64>, r_cent: &DVector<f64>) -> f64 {
    (r_dual.norm_squared() + r_cent.norm_squared()).sqrt()
}

/// Solve from a strictly feasible `z0`, then sharpen the result on the
/// detected active set.
pub(crate) fn solve(problem: &Problem, z0: DVector<f64>, opts: Options) -> Result<Solution> {
    let ipm = interior_point(problem, z0, opts)?;
    Ok(polish(problem, &ipm).unwrap_or(ipm))
}

fn interior_point(problem: &Problem, z0: DVector<f64>, opts: Options) -> Result<Solution> {
    let n = problem.terms.len();
    let m = problem.h.len();
    assert_eq!(problem.g.shape(), (m, n));
    assert_eq!(z0.len(), n);
    let mut z = z0;
    let mut s = problem
        .feasible(&z)
        .ok_or_else(|| Error::NoConvergence("starting point is not strictly feasible".into()))?;
    if m == 0 {
        return Err(Error::InvalidInput(
            "interior-point solve needs constraints".into(),
        ));
    }

    let grad0 = problem.gradient(&z);
    let scale = 1.0 + grad0.amax();
    let mut lambda = s.map(|v| scale / v.max(1e-300));
    let mu = 10.0;

    let mut stalled = 0;
    let mut iter = 0;
    loop {
        let grad = problem.gradient(&z);
        let r_dual = &grad - problem.g.tr_mul(&lambda);
        let gap = s.dot(&lambda);
        let obj = problem.objective(&z);
        let dual_res = r_dual.amax();
        let gap_scale = 1.0 + obj.abs();
        let dual_scale = 1.0 + grad.amax();
        let primal_done = gap <= opts.gap_tol * gap_scale;
        let acceptable = gap <= opts.acceptable_tol * gap_scale;
        let iterations = iter;
        let finish = |z, lambda, slack| Solution {
            z,
            lambda,
            slack,
            dual_residual: dual_res,
            iterations,
        };
        if (primal_done && dual_res <= opts.dual_tol * dual_scale) || (acceptable && stalled >= 3) {
            return Ok(finish(z, lambda, s));
        }
        if iter >= opts.max_iter {
            if acceptable {
                return Ok(finish(z, lambda, s));
            }
            return Err(Error::NoConvergence(format!(
                "interior point did not converge in {} iterations (gap {gap:.3e})",
                opts.max_iter
            )));
        }
        iter += 1;

        let t = mu * m as f64 / gap;
        let r_cent = lambda.component_mul(&s).add_scalar(-1.0 / t);
        let ratio = lambda.component_div(&s);
        let mut scaled_g = problem.g.clone();
        for (mut row, &r) in scaled_g.row_iter_mut().zip(ratio.iter()) {
            row *= r;
        }
        let mut normal = problem.g.tr_mul(&scaled_g);
        let curv = problem.curvature(&z);
        for i in 0..n {
            normal[(i, i)] += curv[i];
        }
        let rhs = -&r_dual - problem.g.tr_mul(&r_cent.component_div(&s));
        let dz = solve_spd(normal, &rhs)?;
        let gdz = &problem.g * &dz;
        let dlambda = -(&r_cent + lambda.component_mul(&gdz)).component_div(&s);

        let mut alpha: f64 = 1.0;
        for (l, dl) in lambda.iter().zip(dlambda.iter()) {
            if *dl < 0.0 {
                alpha = alpha.min(-l / dl);
            }
        }
        alpha = (0.99 * alpha).min(1.0);

        let base = residual_norm(&r_dual, &r_cent);
        let mut accepted = None;
        for _ in 0..60 {
            let zn = &z + alpha * &dz;
            if let Some(sn) = problem.feasible(&zn) {
                let ln = &lambda + alpha * &dlambda;
                let rd = problem.gradient(&zn) - problem.g.tr_mul(&ln);
                let rc = ln.component_mul(&sn).add_scalar(-1.0 / t);
                if residual_norm(&rd, &rc) <= (1.0 - 0.01 * alpha) * base {
                    accepted = Some((zn, ln, sn));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((zn, ln, sn)) => {
                stalled = if alpha < 0.1 { stalled + 1 } else { 0 };
                z = zn;
                lambda = ln;
                s = sn;
            }
            None if acceptable => return Ok(finish(z, lambda, s)),
            None => {
                return Err(Error::NoConvergence(format!(
                    "line search stalled at iteration {iter} (gap {gap:.3e}, dual residual {dual_res:.3e})"
                )))
            }
        }
    }
}

const POLISH_THRESHOLDS: [f64; 6] = [1e-9, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Treat nearly tight rows as equalities and minimize exactly on that face.
/// The result is kept only if it verifies as a KKT point of the full problem.
fn polish(problem: &Problem, ipm: &Solution) -> Option<Solution> {
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for thr in POLISH_THRESHOLDS {
        let active: Vec<usize> = (0..problem.h.len())
            .filter(|&j| {
                let row_scale: f64 = problem
                    .g
                    .row(j)
                    .iter()
                    .zip(ipm.z.iter())
                    .map(|(a, b)| (a * b).abs())
                    .sum();
                ipm.slack[j] <= thr * (1.0 + problem.h[j].abs() + row_scale)
            })
            .collect();
        let mut active = active;
        while !active.is_empty() && !tried.contains(&active) {
            tried.push(active.clone());
            match polish_on(problem, ipm, &active) {
                Ok(sol) => return Some(sol),
                // a row pulling the wrong way leaves the face
                Err(Some(i)) => {
                    active.remove(i);
                }
                Err(None) => break,
            }
        }
    }
    None
}

/// `Err(Some(i))` names the active row with the most negative multiplier.
fn polish_on(
    problem: &Problem,
    ipm: &Solution,
    active: &[usize],
) -> std::result::Result<Solution, Option<usize>> {
    let n = problem.terms.len();
    let k = active.len();
    let rows = k.max(n);
    let mut ga = DMatrix::zeros(rows, n);
    let mut r = DVector::zeros(rows);
    let gz = &problem.g * &ipm.z;
    for (i, &j) in active.iter().enumerate() {
        ga.row_mut(i).copy_from(&problem.g.row(j));
        r[i] = problem.h[j] - gz[j];
    }
    let svd = ga.clone().svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u.as_ref(), svd.v_t.as_ref()) else {
        return Err(None);
    };
    let sigma_max = svd.singular_values.max();
    let tol = 1e-10 * sigma_max.max(1e-300);
    let ranked: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] > tol).collect();
    let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] <= tol).collect();

    // Least-change projection onto the active face.
    let mut z = ipm.z.clone();
    for &i in &ranked {
        let coef = u.column(i).dot(&r) / svd.singular_values[i];
        z += coef * v_t.row(i).transpose();
    }
    let basis = DMatrix::from_fn(n, null.len(), |a, b| v_t[(null[b], a)]);
    let pinned: Vec<bool> = (0..n).map(|a| basis.row(a).amax() <= 1e-12).collect();

    let eval = |z: &DVector<f64>| -> Option<f64> {
        let mut total = 0.0;
        for (a, t) in problem.terms.iter().enumerate() {
            let v = if pinned[a] { z[a].max(0.0) } else { z[a] };
            if !pinned[a] && !t.in_domain(v) {
                return None;
            }
            total += t.value(v);
        }
        Some(total)
    };
    let grad_at = |z: &DVector<f64>| {
        DVector::from_fn(n, |a, _| {
            let v = if pinned[a] { z[a].max(0.0) } else { z[a] };
            problem.terms[a].derivative(v)
        })
    };

    let Some(mut f_cur) = eval(&z) else {
        return Err(None);
    };
    if !null.is_empty() {
        for _ in 0..60 {
            let grad = grad_at(&z);
            let gy = basis.tr_mul(&grad);
            if gy.amax() <= 1e-15 * (1.0 + grad.amax()) {
                break;
            }
            let curv = DVector::from_fn(n, |a, _| {
                if pinned[a] {
                    0.0
                } else {
                    problem.terms[a].curvature(z[a])
                }
            });
            let mut scaled = basis.clone();
            for (mut row, &c) in scaled.row_iter_mut().zip(curv.iter()) {
                row *= c;
            }
            let hy = basis.tr_mul(&scaled);
            let Ok(dy) = solve_spd(hy, &(-&gy)) else {
                return Err(None);
            };
            let dz = &basis * &dy;
            let slope = gy.dot(&dy);
            let mut alpha = 1.0;
            let mut moved = false;
            while alpha > 1e-12 {
                let zn = &z + alpha * &dz;
                if let Some(fn_) = eval(&zn) {
                    if fn_ <= f_cur + 1e-4 * alpha * slope + 1e-15 * (1.0 + f_cur.abs()) {
                        z = zn;
                        f_cur = fn_;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }

    // Verify against the full problem.
    for (a, t) in problem.terms.iter().enumerate() {
        if pinned[a] {
            if z[a] < -1e-13 && matches!(t, Term::Power { .. }) {
                return Err(None);
            }
        } else if !t.in_domain(z[a]) {
            return Err(None);
        }
    }
    let slack = &problem.g * &z - &problem.h;
    for j in 0..slack.len() {
        let row_scale: f64 = problem
            .g
            .row(j)
            .iter()
            .zip(z.iter())
            .map(|(a, b)| (a * b).abs())
            .sum();
        if slack[j] < -1e-12 * (1.0 + problem.h[j].abs() + row_scale) {
            return Err(None);
        }
    }
    let grad = grad_at(&z);
    let grad_scale = 1.0 + grad.amax();

    // Multipliers: the interior-point estimate, corrected to exact stationarity.
    let mut lam_a = DVector::from_fn(rows, |i, _| if i < k { ipm.lambda[active[i]] } else { 0.0 });
    let resid = &grad - ga.tr_mul(&lam_a);
    for &i in &ranked {
        let coef = v_t.row(i).transpose().dot(&resid) / svd.singular_values[i];
        lam_a += coef * u.column(i);
    }
    let lam_scale = 1.0 + lam_a.amax();
    let most_negative = (0..k).min_by(|&a, &b| lam_a[a].total_cmp(&lam_a[b]));
    if let Some(i) = most_negative.filter(|&i| lam_a[i] < -1e-9 * lam_scale) {
        return Err(Some(i));
    }
    let mut lambda = DVector::zeros(problem.h.len());
    for (i, &j) in active.iter().enumerate() {
        lambda[j] = lam_a[i].max(0.0);
    }
    let dual_residual = (&grad - problem.g.tr_mul(&lambda)).amax();
    if dual_residual > 1e-10 * grad_scale {
        return Err(None);
    }
    Ok(Solution {
        z,
        lambda,
        slack,
        dual_residual,
        iterations: ipm.iterations,
    })
}

fn solve_spd(mut a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let diag_scale = (0..n)
        .map(|i| a[(i, i)].abs())
        .fold(0.0, f64::max)
        .max(1e-300);
    let mut ridge = 0.0;
    for _ in 0..8 {
        if let Some(chol) = a.clone().cholesky() {
            return Ok(chol.solve(b));
        }
        ridge = if ridge == 0.0 {
            1e-14 * diag_scale
        } else {
            ridge * 100.0
        };
        for i in 0..n {
            a[(i, i)] += ridge;
        }
    }
    Err(Error::NoConvergence(
        "normal equations are not positive definite".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_with_one_constraint() {
        // min (x^2 + y^2)/2  s.t. x + y >= 2  ->  (1, 1)
        let problem = Problem {
            terms: vec![
                Term::Quadratic {
                    weight: 1.0,
                    center: 0.0
                };
                2
            ],
            g: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            h: DVector::from_vec(vec![2.0]),
        };
        let sol = solve(
            &problem,
            DVector::from_vec(vec![3.0, 3.0]),
            Options::default(),
        )
        .unwrap();
        assert!((sol.z[0] - 1.0).abs() < 1e-10);
        assert!((sol.z[1] - 1.0).abs() < 1e-10);
        assert!((sol.lambda[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn power_objective() {
        // min z^3 s.t. z >= 2 -> z = 2, lambda = 12
        let problem = Problem {
            terms: vec![Term::Power {
                weight: 1.0,
                exponent: 3.0,
            }],
            g: DMatrix::from_row_slice(1, 1, &[1.0]),
            h: DVector::from_vec(vec![2.0]),
        };
        let sol = solve(&problem, DVector::from_vec(vec![5.0]), Options::default()).unwrap();
        assert!((sol.z[0] - 2.0).abs() < 1e-10);
        assert!((sol.lambda[0] - 12.0).abs() < 1e-7);
    }

    #[test]
    fn infeasible_start_rejected() {
        let problem = Problem {
            terms: vec![Term::Quadratic {
                weight: 1.0,
                center: 0.0,
            }],
            g: DMatrix::from_row_slice(1, 1, &[1.0]),
            h: DVector::from_vec(vec![2.0]),
        };
        assert!(solve(&problem, DVector::from_vec(vec![1.0]), Options::default()).is_err());
    }
}
