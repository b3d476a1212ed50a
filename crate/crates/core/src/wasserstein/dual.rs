//! Kantorovich dual `sup_phi sum Q_1 phi dnu - sum phi dmu` by supergradient ascent.

use serde::Serialize;

use crate::error::Result;
use crate::fields::ScalarField;
use crate::hopflax::hopf_lax;
use crate::space::FiniteMetricMeasureSpace;
use crate::wasserstein::{wasserstein_primal, ProbMeasure};

pub const WEAK_DUALITY_TOL: f64 = 1e-9;
pub const DUAL_GAP_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscentConfig {
    pub iterations: usize,
    /// Step `c / sqrt(k)` along the normalized supergradient; `c` is relative
    /// to `diam^p / p`.
    pub step_scale: f64,
    /// Start from the primal LP prices instead of `phi = 0`.
    pub warm_start: bool,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_scale: 0.5,
            warm_start: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DualResult {
    /// Best dual value found; a lower bound on `W_p^p / p`.
    pub lower_bound: f64,
    pub psi: ScalarField,
    pub initial_value: f64,
    pub iterations: usize,
}

/// `sum nu Q_1 phi - sum mu phi`
pub fn dual_objective(
    space: &FiniteMetricMeasureSpace,
    mu: &ProbMeasure,
    nu: &ProbMeasure,
    phi: &[f64],
    p: f64,
) -> f64 {
    let q1 = hopf_lax(space, phi, 1.0, p).q_values;
    let gain: f64 = nu.masses().iter().zip(q1.iter()).map(|(a, b)| a * b).sum();
    let cost: f64 = mu.masses().iter().zip(phi).map(|(a, b)| a * b).sum();
    gain - cost
}

/// Value and a supergradient: every `y` sends `nu_y` to its first minimizer.
fn value_and_supergradient(
    space: &FiniteMetricMeasureSpace,
    mu: &ProbMeasure,
    nu: &ProbMeasure,
    phi: &[f64],
    p: f64,
) -> (f64, Vec<f64>) {
    let eval = hopf_lax(space, phi, 1.0, p);
    let mut g: Vec<f64> = mu.masses().iter().map(|m| -m).collect();
    let mut value = 0.0;
    for (y, &w) in nu.masses().iter().enumerate() {
        value += w * eval.q_values[y];
        g[eval.argmin_sets[y][0]] += w;
    }
    value -= mu.masses().iter().zip(phi).map(|(a, b)| a * b).sum::<f64>();
    (value, g)
}

pub fn wasserstein_dual(
    space: &FiniteMetricMeasureSpace,
    mu: &ProbMeasure,
    nu: &ProbMeasure,
    p: f64,
    config: &AscentConfig,
) -> Result<DualResult> {
    let n = space.len();
    let mut phi = if config.warm_start {
        let t = wasserstein_primal(space, mu, nu, p)?;
        t.u.iter().map(|u| -u / p).collect()
    } else {
        vec![0.0; n]
    };
    let c = config.step_scale * space.diameter().powf(p) / p;
    let (initial_value, _) = value_and_supergradient(space, mu, nu, &phi, p);
    let mut best = (initial_value, phi.clone());
    for k in 1..=config.iterations {
        let (value, g) = value_and_supergradient(space, mu, nu, &phi, p);
        if value > best.0 {
            best = (value, phi.clone());
        }
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let step = c / (k as f64).sqrt() / norm;
        for (v, d) in phi.iter_mut().zip(&g) {
            *v += step * d;
        }
    }
    let (value, _) = value_and_supergradient(space, mu, nu, &phi, p);
    if value > best.0 {
        best = (value, phi);
    }
    Ok(DualResult {
        lower_bound: best.0,
        psi: ScalarField::new(best.1)?,
        initial_value,
        iterations: config.iterations,
    })
}
