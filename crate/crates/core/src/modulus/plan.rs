//! Discrete test plans: finitely many weighted constant-speed paths.
//!
//! The evaluation map `e_t` snaps a path at time `t` to its nearest vertex
//! along arclength (ties go to the earlier vertex). Under that convention the
//! time a path spends at vertex `x_i` is exactly its trapezoid weight divided
//! by its length, which ties compression bounds to line integrals.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{upper_gradient_residuals, DiscretePath, UpperGradientReport};
use crate::hopflax::conjugate;
use crate::modulus::{modulus, PathFamily};
use crate::report::Check;
use crate::space::FiniteMetricMeasureSpace;

pub const DEFAULT_GRID_POINTS: usize = 64;
pub const INEQUALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanAtom {
    pub path: DiscretePath,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteTestPlan {
    atoms: Vec<PlanAtom>,
    time_grid: Vec<f64>,
    compression: f64,
}

/// `k / (count - 1)` for `k = 0..count`.
pub fn uniform_time_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|k| k as f64 / (count - 1) as f64).collect(),
    }
}

fn snap(params: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, &s) in params.iter().enumerate().skip(1) {
        if (s - t).abs() < (params[best] - t).abs() {
            best = i;
        }
    }
    best
}

/// Refines `base` with every snapping breakpoint of every atom and the
/// midpoints between consecutive breakpoints, so the marginals are evaluated
/// on every piece where they are constant.
pub fn exact_time_grid(
    space: &FiniteMetricMeasureSpace,
    atoms: &[PlanAtom],
    base: &[f64],
) -> Vec<f64> {
    let mut breaks = vec![0.0, 1.0];
    for atom in atoms {
        let params = atom.path.vertex_params(space);
        breaks.extend(params.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    }
    sort_dedup(&mut breaks);
    let mut grid: Vec<f64> = base.to_vec();
    grid.extend_from_slice(&breaks);
    grid.extend(breaks.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    sort_dedup(&mut grid);
    grid
}

fn sort_dedup(v: &mut Vec<f64>) {
    v.sort_by(f64::total_cmp);
    v.dedup();
}

/// Smallest `C` with `(e_t)_# pi <= C m` at every grid time.
pub fn plan_compression(space: &FiniteMetricMeasureSpace, atoms: &[PlanAtom], grid: &[f64]) -> f64 {
    let params: Vec<Vec<f64>> = atoms.iter().map(|a| a.path.vertex_params(space)).collect();
    let mut worst: f64 = 0.0;
    let mut mass = vec![0.0; space.len()];
    for &t in grid {
        mass.iter_mut().for_each(|v| *v = 0.0);
        for (atom, ps) in atoms.iter().zip(&params) {
            mass[atom.path.vertices()[snap(ps, t)]] += atom.weight;
        }
        for (x, &v) in mass.iter().enumerate() {
            worst = worst.max(v / space.measure()[x]);
        }
    }
    worst
}

impl DiscreteTestPlan {
    pub fn new(
        space: &FiniteMetricMeasureSpace,
        atoms: Vec<PlanAtom>,
        time_grid: Vec<f64>,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput(
                "a test plan needs at least one atom".into(),
            ));
        }
        if let Some(a) = atoms
            .iter()
            .find(|a| !(a.weight > 0.0 && a.weight.is_finite()))
        {
            return Err(Error::InvalidInput(format!(
                "atom weight {} is not positive",
                a.weight
            )));
        }
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "atom weights sum to {total}, not 1"
            )));
        }
        if time_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidInput("time grid must lie in [0, 1]".into()));
        }
        let compression = plan_compression(space, &atoms, &time_grid);
        Ok(Self {
            atoms,
            time_grid,
            compression,
        })
    }

    /// Uniform grid of `DEFAULT_GRID_POINTS` times.
    pub fn with_default_grid(
        space: &FiniteMetricMeasureSpace,
        atoms: Vec<PlanAtom>,
    ) -> Result<Self> {
        Self::new(space, atoms, uniform_time_grid(DEFAULT_GRID_POINTS))
    }

    pub fn atoms(&self) -> &[PlanAtom] {
        &self.atoms
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn compression(&self) -> f64 {
        self.compression
    }

    /// `sum_atoms weight * length^p`.
    pub fn p_energy(&self, space: &FiniteMetricMeasureSpace, p: f64) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.weight * a.path.energy(space, p))
            .sum()
    }

    /// `pi(Gamma)`: total weight of atoms whose path belongs to the family.
    pub fn mass_of(&self, family: &PathFamily) -> f64 {
        self.atoms
            .iter()
            .filter(|a| family.contains(&a.path))
            .map(|a| a.weight)
            .sum()
    }
}

/// Every atom of every plan must satisfy the upper-gradient inequality.
pub fn weak_ug_check(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    g: &[f64],
    plans: &[DiscreteTestPlan],
) -> UpperGradientReport {
    upper_gradient_residuals(
        space,
        f,
        g,
        plans.iter().flat_map(|p| p.atoms.iter().map(|a| &a.path)),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanModulusReport {
    pub lhs: f64,
    pub rhs: f64,
    /// Compression on the breakpoint-refined grid.
    pub compression: f64,
    pub modulus: f64,
    pub energy: f64,
    pub check: Check,
}

/// `pi(Gamma) <= C^{1/q} Mod_q(Gamma)^{1/q} (sum weight length^p)^{1/p}`.
pub fn plan_modulus_inequality(
    space: &FiniteMetricMeasureSpace,
    plan: &DiscreteTestPlan,
    family: &PathFamily,
    q: f64,
) -> Result<PlanModulusReport> {
    let p = conjugate(q);
    let lhs = plan.mass_of(family);
    let grid = exact_time_grid(space, &plan.atoms, &plan.time_grid);
    let compression = plan_compression(space, &plan.atoms, &grid);
    let modulus = modulus(space, family, q)?.value;
    let energy = plan.p_energy(space, p);
    let rhs = compression.powf(1.0 / q) * modulus.powf(1.0 / q) * energy.powf(1.0 / p);
    Ok(PlanModulusReport {
        lhs,
        rhs,
        compression,
        modulus,
        energy,
        check: Check::new("plan_modulus", lhs - rhs, INEQUALITY_TOL),
    })
}
