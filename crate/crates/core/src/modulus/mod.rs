//! q-modulus of path families and the minimal q-upper gradient.
//!
//! Both are the same kind of convex program: minimize `sum_x m_x rho_x^q`
//! subject to trapezoid line-integral lower bounds along paths and `rho >= 0`.
//! The modulus fixes the family up front; the minimal upper gradient generates
//! its binding paths lazily with a shortest-path separation oracle.

mod oracle;
pub mod plan;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::convex::{self, Options, Problem, Term};
use crate::error::{Error, Result};
use crate::fields::{DiscretePath, GradientField};
use crate::space::FiniteMetricMeasureSpace;

pub use oracle::{all_pairs_g_distances, g_shortest_path, GDistances};
pub use plan::{
    exact_time_grid, plan_compression, plan_modulus_inequality, uniform_time_grid, weak_ug_check,
    DiscreteTestPlan, PlanAtom, PlanModulusReport,
};

/// Feasibility tolerance on family constraints.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Stationarity tolerance on the KKT system.
pub const KKT_TOL: f64 = 1e-9;
/// Complementary slackness tolerance.
pub const SLACKNESS_TOL: f64 = 1e-7;
/// Oracle threshold: a pair is violated when `dist_g < |f(a) - f(b)| - ORACLE_TOL`.
pub const ORACLE_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ROUNDS: usize = 500;

/// A deduplicated family of paths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathFamily {
    paths: Vec<DiscretePath>,
}

impl PathFamily {
    /// Duplicates are dropped; first occurrence order is kept.
    pub fn new(paths: impl IntoIterator<Item = DiscretePath>) -> Self {
        let mut seen = BTreeSet::new();
        let paths = paths
            .into_iter()
            .filter(|p| seen.insert(p.clone()))
            .collect();
        Self { paths }
    }

    pub fn paths(&self) -> &[DiscretePath] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn contains(&self, path: &DiscretePath) -> bool {
        self.paths.contains(path)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModulusSolution {
    pub rho: GradientField,
    pub value: f64,
    pub active_paths: Vec<usize>,
    /// Stationarity residual, relative to the gradient scale.
    pub kkt_residual: f64,
    pub slackness_residual: f64,
    /// Largest `1 - int_gamma rho` over the family (nonpositive when feasible).
    pub feasibility_residual: f64,
}

/// A linear lower bound `sum coeffs . rho >= rhs`.
#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<(usize, f64)>,
    rhs: f64,
}

fn path_row(space: &FiniteMetricMeasureSpace, path: &DiscretePath, rhs: f64) -> Row {
    let mut coeffs: Vec<(usize, f64)> = Vec::new();
    for (&v, c) in path
        .vertices()
        .iter()
        .zip(path.trapezoid_coefficients(space))
    {
        match coeffs.iter_mut().find(|(u, _)| *u == v) {
            Some(slot) => slot.1 += c,
            None => coeffs.push((v, c)),
        }
    }
    Row { coeffs, rhs }
}

struct ProgramSolution {
    rho: Vec<f64>,
    kkt_residual: f64,
    slackness_residual: f64,
}

/// `min sum m rho^q  s.t.  rows, rho >= 0`, variables restricted to vertices touched by a row.
fn solve_rows(space: &FiniteMetricMeasureSpace, rows: &[Row], q: f64) -> Result<ProgramSolution> {
    let n = space.len();
    let touched: BTreeSet<usize> = rows
        .iter()
        .flat_map(|r| r.coeffs.iter().map(|c| c.0))
        .collect();
    let vars: Vec<usize> = touched.into_iter().collect();
    if rows.is_empty() {
        return Ok(ProgramSolution {
            rho: vec![0.0; n],
            kkt_residual: 0.0,
            slackness_residual: 0.0,
        });
    }
    let mut col = vec![usize::MAX; n];
    for (k, &v) in vars.iter().enumerate() {
        col[v] = k;
    }
    let nv = vars.len();
    let m_rows = rows.len() + nv;
    let mut g = DMatrix::zeros(m_rows, nv);
    let mut h = DVector::zeros(m_rows);
    for (j, row) in rows.iter().enumerate() {
        for &(v, c) in &row.coeffs {
            g[(j, col[v])] += c;
        }
        h[j] = row.rhs;
    }
    for k in 0..nv {
        g[(rows.len() + k, k)] = 1.0;
    }
    let terms = vars
        .iter()
        .map(|&v| Term::Power {
            weight: space.measure()[v],
            exponent: q,
        })
        .collect();
    let problem = Problem { terms, g, h };

    let start_level = rows
        .iter()
        .map(|r| 2.0 * r.rhs.max(0.0) / r.coeffs.iter().map(|c| c.1).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1.0);
    let sol = convex::solve(
        &problem,
        DVector::from_element(nv, start_level),
        Options::default(),
    )?;

    // Scale up onto the feasible set so every row holds exactly.
    let z = &sol.z;
    let mut kappa: f64 = 1.0;
    for (j, row) in rows.iter().enumerate() {
        let lhs = (problem.g.row(j) * z)[0];
        if row.rhs > 0.0 {
            kappa = kappa.max(row.rhs / lhs);
        }
    }
    let z = z * kappa;

    let grad: Vec<f64> = vars
        .iter()
        .zip(z.iter())
        .map(|(&v, &r)| q * space.measure()[v] * r.powf(q - 1.0))
        .collect();
    let scale = 1.0 + grad.iter().copied().fold(0.0, f64::max);
    let lam_rows = sol.lambda.rows(0, rows.len());
    let lam_nonneg = sol.lambda.rows(rows.len(), nv);
    let mut kkt: f64 = 0.0;
    for k in 0..nv {
        let mut r = grad[k] - lam_nonneg[k];
        for j in 0..rows.len() {
            r -= lam_rows[j] * problem.g[(j, k)];
        }
        kkt = kkt.max(r.abs() / scale);
    }
    let mut slack: f64 = 0.0;
    for j in 0..rows.len() {
        let lhs = (problem.g.row(j) * &z)[0];
        slack = slack.max(lam_rows[j] * (lhs - rows[j].rhs).abs());
    }
    for k in 0..nv {
        slack = slack.max(lam_nonneg[k] * z[k]);
    }

    let mut rho = vec![0.0; n];
    for (k, &v) in vars.iter().enumerate() {
        rho[v] = z[k];
    }
    Ok(ProgramSolution {
        rho,
        kkt_residual: kkt,
        slackness_residual: slack,
    })
}

/// `Mod_q(family)`. The empty family has modulus 0.
pub fn modulus(
    space: &FiniteMetricMeasureSpace,
    family: &PathFamily,
    q: f64,
) -> Result<ModulusSolution> {
    check_exponent(q)?;
    let rows: Vec<Row> = family
        .paths()
        .iter()
        .map(|p| path_row(space, p, 1.0))
        .collect();
    let sol = solve_rows(space, &rows, q)?;
    let rho = GradientField::from_solver(sol.rho);
    let value = rho.lq_energy(space, q);
    let integrals: Vec<f64> = family
        .paths()
        .iter()
        .map(|p| crate::fields::path_integral(space, &rho, p))
        .collect();
    let active_paths = integrals
        .iter()
        .enumerate()
        .filter(|(_, &v)| v - 1.0 <= SLACKNESS_TOL)
        .map(|(j, _)| j)
        .collect();
    let feasibility_residual = integrals
        .iter()
        .map(|v| 1.0 - v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ModulusSolution {
        rho,
        value,
        active_paths,
        kkt_residual: sol.kkt_residual,
        slackness_residual: sol.slackness_residual,
        feasibility_residual: if feasibility_residual.is_finite() {
            feasibility_residual
        } else {
            0.0
        },
    })
}

fn check_exponent(q: f64) -> Result<()> {
    if q > 1.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "exponent must exceed 1, got {q}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratedConstraint {
    pub round: usize,
    pub a: usize,
    pub b: usize,
    pub path: Vec<usize>,
    /// `|f(a) - f(b)|`, the required line integral.
    pub rhs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperGradientSolution {
    pub g: GradientField,
    pub value: f64,
    pub generated_constraints: Vec<GeneratedConstraint>,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub slackness_residual: f64,
    /// Largest `|f(a) - f(b)| - dist_g(a, b)` over all pairs after the final rescale.
    pub worst_violation: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct UpperGradientOptions {
    pub max_rounds: usize,
}

impl Default for UpperGradientOptions {
    fn default() -> Self {
        Self {
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

/// Minimal q-upper gradient of `f` by constraint generation.
pub fn min_upper_gradient(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    q: f64,
) -> Result<UpperGradientSolution> {
    min_upper_gradient_with(space, f, q, UpperGradientOptions::default())
}

pub fn min_upper_gradient_with(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    q: f64,
    opts: UpperGradientOptions,
) -> Result<UpperGradientSolution> {
    check_exponent(q)?;
    if f.len() != space.len() {
        return Err(Error::InvalidInput(
            "field length does not match space".into(),
        ));
    }
    let mut generated: Vec<GeneratedConstraint> = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut rows: Vec<Row> = Vec::new();
    for e in space.edges() {
        let rhs = (f[e.u] - f[e.v]).abs();
        if rhs > 0.0 {
            let path = DiscretePath::new(space, vec![e.u, e.v])?;
            rows.push(path_row(space, &path, rhs));
            seen.insert(path.vertices().to_vec());
            generated.push(GeneratedConstraint {
                round: 0,
                a: e.u,
                b: e.v,
                path: path.vertices().to_vec(),
                rhs,
            });
        }
    }

    let mut rounds = 0;
    loop {
        let sol = solve_rows(space, &rows, q)?;
        rounds += 1;
        let dist = all_pairs_g_distances(space, &sol.rho);
        let mut added = 0;
        let mut worst: f64 = 0.0;
        for a in 0..space.len() {
            for b in (a + 1)..space.len() {
                let rhs = (f[a] - f[b]).abs();
                let gap = rhs - dist.get(a, b);
                worst = worst.max(gap);
                if gap > ORACLE_TOL {
                    let path = g_shortest_path(space, &sol.rho, &dist, a, b);
                    if seen.insert(path.clone()) {
                        let dp = DiscretePath::new(space, path.clone())?;
                        rows.push(path_row(space, &dp, rhs));
                        generated.push(GeneratedConstraint {
                            round: rounds,
                            a,
                            b,
                            path,
                            rhs,
                        });
                        added += 1;
                    }
                }
            }
        }
        if added == 0 {
            // Rescale so every pair holds, not only the generated ones.
            let mut kappa: f64 = 1.0;
            for a in 0..space.len() {
                for b in (a + 1)..space.len() {
                    let rhs = (f[a] - f[b]).abs();
                    if rhs > 0.0 {
                        kappa = kappa.max(rhs / dist.get(a, b));
                    }
                }
            }
            let g = GradientField::from_solver(sol.rho.iter().map(|v| v * kappa).collect());
            let final_dist = all_pairs_g_distances(space, &g);
            let mut violation = f64::NEG_INFINITY;
            for a in 0..space.len() {
                for b in (a + 1)..space.len() {
                    violation = violation.max((f[a] - f[b]).abs() - final_dist.get(a, b));
                }
            }
            let value = g.lq_energy(space, q);
            return Ok(UpperGradientSolution {
                g,
                value,
                generated_constraints: generated,
                iterations: rounds,
                kkt_residual: sol.kkt_residual,
                slackness_residual: sol.slackness_residual,
                worst_violation: if violation.is_finite() {
                    violation
                } else {
                    0.0
                },
            });
        }
        if rounds >= opts.max_rounds {
            return Err(Error::NoConvergence(format!(
                "minimal upper gradient: {rounds} rounds, {added} pairs still violated (worst {worst:.3e})"
            )));
        }
    }
}

/// Minimal q-upper gradient enforcing every given path at once (no oracle).
/// Each path constrains its own endpoints.
pub fn min_upper_gradient_over_paths(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    q: f64,
    paths: &[DiscretePath],
) -> Result<(GradientField, f64)> {
    check_exponent(q)?;
    let rows: Vec<Row> = paths
        .iter()
        .filter(|p| p.start() < p.end())
        .filter_map(|p| {
            let rhs = (f[p.end()] - f[p.start()]).abs();
            (rhs > 0.0).then(|| path_row(space, p, rhs))
        })
        .collect();
    let sol = solve_rows(space, &rows, q)?;
    let g = GradientField::from_solver(sol.rho);
    let value = g.lq_energy(space, q);
    Ok((g, value))
}
