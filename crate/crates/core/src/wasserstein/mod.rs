//! Exact `W_p` between probability measures on a finite space, its
//! Kantorovich dual through the Hopf-Lax semigroup, and the checks tying
//! Wasserstein speed to the Cheeger flow.

pub mod bridge;
pub mod dual;
mod simplex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::FiniteMetricMeasureSpace;

pub use bridge::{
    dissipation_bridge_check, kuwada_check, theorem_chain_check, weighted_energy, BridgeReport,
    ChainReport, KuwadaReport, KuwadaStep,
};
pub use dual::{dual_objective, wasserstein_dual, AscentConfig, DualResult};

pub const MASS_TOL: f64 = 1e-12;
pub const MARGINAL_TOL: f64 = 1e-10;

/// Nonnegative masses summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbMeasure(Vec<f64>);

impl ProbMeasure {
    pub fn new(space: &FiniteMetricMeasureSpace, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != space.len() {
            return Err(Error::InvalidInput(
                "measure length does not match space".into(),
            ));
        }
        if let Some(v) = mass.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "negative or non-finite mass {v}"
            )));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!("masses sum to {total}, not 1")));
        }
        Ok(Self(mass))
    }

    /// `f m / sum f m` for a nonnegative density `f`.
    pub fn from_density(space: &FiniteMetricMeasureSpace, density: &[f64]) -> Result<Self> {
        if density.len() != space.len() {
            return Err(Error::InvalidInput(
                "density length does not match space".into(),
            ));
        }
        let mass: Vec<f64> = density
            .iter()
            .zip(space.measure())
            .map(|(f, m)| f * m)
            .collect();
        let total: f64 = mass.iter().sum();
        if !(total > 0.0 && total.is_finite()) || mass.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(
                "density must be nonnegative with positive mass".into(),
            ));
        }
        Self::new(space, mass.into_iter().map(|v| v / total).collect())
    }

    pub fn dirac(space: &FiniteMetricMeasureSpace, x: usize) -> Self {
        let mut mass = vec![0.0; space.len()];
        mass[x] = 1.0;
        Self(mass)
    }

    pub fn masses(&self) -> &[f64] {
        &self.0
    }

    pub fn density(&self, space: &FiniteMetricMeasureSpace) -> Vec<f64> {
        self.0
            .iter()
            .zip(space.measure())
            .map(|(a, m)| a / m)
            .collect()
    }
}

/// A transport plan with marginals `mu` (rows) and `nu` (columns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    pub matrix: Vec<Vec<f64>>,
}

impl Coupling {
    pub fn support_size(&self) -> usize {
        self.matrix.iter().flatten().filter(|&&v| v > 0.0).count()
    }

    /// Largest deviation of row and column sums from the marginals.
    pub fn marginal_error(&self, mu: &ProbMeasure, nu: &ProbMeasure) -> f64 {
        let n = self.matrix.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let row: f64 = self.matrix[i].iter().sum();
            let col: f64 = (0..n).map(|k| self.matrix[k][i]).sum();
            worst = worst.max((row - mu.0[i]).abs()).max((col - nu.0[i]).abs());
        }
        worst
    }

    /// `sum gamma_xy d(x, y)^p`
    pub fn cost(&self, space: &FiniteMetricMeasureSpace, p: f64) -> f64 {
        let n = self.matrix.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if self.matrix[i][j] > 0.0 {
                    total += self.matrix[i][j] * space.dist(i, j).powf(p);
                }
            }
        }
        total
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Transport {
    /// `W_p`
    pub value: f64,
    /// `W_p^p`
    pub cost: f64,
    pub coupling: Coupling,
    /// Optimal LP prices with `u_x + v_y <= d(x, y)^p`, extended to every point.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
}

pub fn wasserstein_primal(
    space: &FiniteMetricMeasureSpace,
    mu: &ProbMeasure,
    nu: &ProbMeasure,
    p: f64,
) -> Result<Transport> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("p must exceed 1, got {p}")));
    }
    let n = space.len();
    if mu.0.len() != n || nu.0.len() != n {
        return Err(Error::InvalidInput(
            "measure length does not match space".into(),
        ));
    }
    let (sm, sn): (f64, f64) = (mu.0.iter().sum(), nu.0.iter().sum());
    if (sm - sn).abs() > MARGINAL_TOL {
        return Err(Error::InvalidInput(format!(
            "marginal mismatch: {sm} vs {sn}"
        )));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mu.0[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| nu.0[j] > 0.0).collect();
    let cost_of = |i: usize, j: usize| space.dist(i, j).powf(p);
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| cost_of(i, j)).collect())
        .collect();
    let supply: Vec<f64> = rows.iter().map(|&i| mu.0[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.0[j]).collect();
    let sol = simplex::solve(&supply, &demand, &cost)?;

    let mut matrix = vec![vec![0.0; n]; n];
    for &(a, b, x) in &sol.basis {
        matrix[rows[a]][cols[b]] += x;
    }
    // extend prices by c-transforms so every pair stays feasible
    let mut v = vec![0.0; n];
    for (b, &j) in cols.iter().enumerate() {
        v[j] = sol.v[b];
    }
    let u: Vec<f64> = (0..n)
        .map(|i| {
            cols.iter()
                .map(|&j| cost_of(i, j) - v[j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    for j in 0..n {
        if nu.0[j] == 0.0 {
            v[j] = (0..n)
                .map(|i| cost_of(i, j) - u[i])
                .fold(f64::INFINITY, f64::min);
        }
    }
    let cost = sol.cost.max(0.0);
    Ok(Transport {
        value: cost.powf(1.0 / p),
        cost,
        coupling: Coupling { matrix },
        u,
        v,
        pivots: sol.pivots,
    })
}
