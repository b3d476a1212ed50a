//! Wasserstein speed of Cheeger flows: the Kuwada bound, the entropy versus
//! metric dissipation inequality, and the small-time energy comparison.
//!
//! Densities are normalized to probability densities before anything is
//! measured, so `mu_k = f_k m / sum f_k m`.

use serde::Serialize;

use crate::cheeger::{entropy, FlowTrace, Phi};
use crate::error::{Error, Result};
use crate::fields::discrete_slope;
use crate::hopflax::conjugate;
use crate::modulus::min_upper_gradient;
use crate::report::Check;
use crate::space::FiniteMetricMeasureSpace;
use crate::wasserstein::{wasserstein_primal, ProbMeasure};

/// Multiplicative slack on every bound in this module.
pub const SLACK: f64 = 0.10;
pub const DENSITY_FLOOR: f64 = 1e-12;
/// Absolute floor on the comparisons, for traces with zero dissipation.
pub const ROUNDOFF_TOL: f64 = 1e-12;

/// `sum m slope(f)^q / f^{p-1}`
pub fn weighted_energy(space: &FiniteMetricMeasureSpace, f: &[f64], q: f64) -> f64 {
    let p = conjugate(q);
    let slope = discrete_slope(space, f);
    (0..space.len())
        .map(|x| space.measure()[x] * slope[x].powf(q) / f[x].powf(p - 1.0))
        .sum()
}

/// Probability densities of every field in the trace.
pub fn normalized_densities(
    space: &FiniteMetricMeasureSpace,
    trace: &FlowTrace,
) -> Result<Vec<Vec<f64>>> {
    trace
        .fields
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mass = space.integrate(f);
            if !(mass > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "field {k} has nonpositive mass"
                )));
            }
            let g: Vec<f64> = f.iter().map(|v| v / mass).collect();
            match g.iter().copied().fold(f64::INFINITY, f64::min) {
                lo if lo < DENSITY_FLOOR => Err(Error::InvalidInput(format!(
                    "density {lo:.3e} below {DENSITY_FLOOR:e} at step {k}"
                ))),
                _ => Ok(g),
            }
        })
        .collect()
}

fn check_exponents(trace: &FlowTrace, p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::InvalidInput(format!("p must exceed 1, got {p}")));
    }
    let q = trace.config.q;
    if (1.0 / p + 1.0 / q - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "p = {p} is not conjugate to the flow exponent q = {q}"
        )));
    }
    Ok(())
}

fn step_costs(
    space: &FiniteMetricMeasureSpace,
    densities: &[Vec<f64>],
    p: f64,
    window: usize,
) -> Result<Vec<f64>> {
    let measures = densities
        .iter()
        .map(|f| ProbMeasure::from_density(space, f))
        .collect::<Result<Vec<_>>>()?;
    (0..measures.len().saturating_sub(window))
        .map(|k| Ok(wasserstein_primal(space, &measures[k], &measures[k + window], p)?.cost))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct KuwadaStep {
    pub step: usize,
    /// `W_p(mu_k, mu_{k+w})^p`
    pub lhs: f64,
    /// `(1 + SLACK) l^{p-1} sum_j tau E(f_{j+1}) + tau sum_j tau E(f_j)` with `l = w tau`.
    pub bound: f64,
    /// `lhs / bound`
    pub consumption: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KuwadaReport {
    pub tau: f64,
    pub window: usize,
    pub steps: Vec<KuwadaStep>,
    pub max_consumption: f64,
    pub check: Check,
}

/// Compares the transport cost of every `window`-step stretch of the trace with
/// the time-integrated weighted slope energy.
pub fn kuwada_check(
    space: &FiniteMetricMeasureSpace,
    trace: &FlowTrace,
    p: f64,
    window: usize,
) -> Result<KuwadaReport> {
    check_exponents(trace, p)?;
    if window == 0 {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    let q = trace.config.q;
    let tau = trace.config.tau;
    let densities = normalized_densities(space, trace)?;
    let energies: Vec<f64> = densities
        .iter()
        .map(|f| weighted_energy(space, f, q))
        .collect();
    let costs = step_costs(space, &densities, p, window)?;
    let ell = window as f64 * tau;
    let mut steps = Vec::with_capacity(costs.len());
    let mut worst_excess = f64::NEG_INFINITY;
    let mut max_consumption: f64 = 0.0;
    for (k, &lhs) in costs.iter().enumerate() {
        let implicit: f64 = (k..k + window).map(|j| tau * energies[j + 1]).sum();
        let explicit: f64 = (k..k + window).map(|j| tau * energies[j]).sum();
        let bound = (1.0 + SLACK) * ell.powf(p - 1.0) * implicit + tau * explicit;
        let consumption = if bound > 0.0 {
            lhs / bound
        } else if lhs > ROUNDOFF_TOL {
            f64::INFINITY
        } else {
            0.0
        };
        worst_excess = worst_excess.max(lhs - bound);
        max_consumption = max_consumption.max(consumption);
        steps.push(KuwadaStep {
            step: k,
            lhs,
            bound,
            consumption,
        });
    }
    let check = Check::new("kuwada", worst_excess.max(0.0), ROUNDOFF_TOL).with_note(format!(
        "window {window}, max slack consumption {max_consumption:.6e}"
    ));
    Ok(KuwadaReport {
        tau,
        window,
        steps,
        max_consumption,
        check,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BridgeReport {
    pub tau: f64,
    /// `sum m Phi(f_0) - sum m Phi(f_K)` for every `K`.
    pub entropy_drop: Vec<f64>,
    /// `(1/q) sum_k tau sum m (Phi''(f_0) g_0)^q f_{k+1}`
    pub gradient_term: Vec<f64>,
    /// `(1/p) sum_k tau (W_p(mu_k, mu_{k+1}) / tau)^p`
    pub speed_term: Vec<f64>,
    /// Young slack `gradient_term + speed_term - entropy_drop`.
    pub young_slack: Vec<f64>,
    pub min_ug_value: f64,
    pub check: Check,
}

/// Entropy dissipation against the weak-gradient and metric-speed terms,
/// with `Phi'' = z^{1-p}` and the minimal upper gradient of `f_0`.
pub fn dissipation_bridge_check(
    space: &FiniteMetricMeasureSpace,
    trace: &FlowTrace,
    p: f64,
) -> Result<BridgeReport> {
    check_exponents(trace, p)?;
    let q = trace.config.q;
    let tau = trace.config.tau;
    let phi = Phi::Entropy(p);
    let m = space.measure();
    let densities = normalized_densities(space, trace)?;
    let f0 = &densities[0];
    let ug = min_upper_gradient(space, f0, q)?;
    let weights: Vec<f64> = (0..space.len())
        .map(|x| m[x] * (phi.second_derivative(f0[x]) * ug.g[x]).powf(q))
        .collect();
    let costs = step_costs(space, &densities, p, 1)?;
    let h0 = entropy(space, f0, phi);
    let scale = 1.0 + h0.abs();

    let (mut grad, mut speed) = (0.0, 0.0);
    let mut report = BridgeReport {
        tau,
        entropy_drop: Vec::new(),
        gradient_term: Vec::new(),
        speed_term: Vec::new(),
        young_slack: Vec::new(),
        min_ug_value: ug.value,
        check: Check::new("dissipation_bridge", 0.0, 0.0),
    };
    let mut worst = f64::NEG_INFINITY;
    for (k, &cost) in costs.iter().enumerate() {
        let next = &densities[k + 1];
        grad += tau / q * weights.iter().zip(next).map(|(w, f)| w * f).sum::<f64>();
        speed += tau / p * cost / tau.powf(p);
        let drop = h0 - entropy(space, next, phi);
        let allowed = (1.0 + SLACK) * (grad + speed) + tau * scale;
        worst = worst.max(drop - allowed);
        report.entropy_drop.push(drop);
        report.gradient_term.push(grad);
        report.speed_term.push(speed);
        report.young_slack.push(grad + speed - drop);
    }
    report.check = Check::new("dissipation_bridge", worst.max(0.0), ROUNDOFF_TOL);
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    /// Mean of `E(f_k)` over the first `window` implicit steps.
    pub early_average: f64,
    /// `sum m g_0^q / f_0^{p-1}` for the minimal upper gradient `g_0`.
    pub min_ug_energy: f64,
    pub check: Check,
}

/// Small-time weighted slope energy along the flow against the same energy
/// of the minimal upper gradient at time zero.
pub fn theorem_chain_check(
    space: &FiniteMetricMeasureSpace,
    trace: &FlowTrace,
    p: f64,
    window: usize,
) -> Result<ChainReport> {
    check_exponents(trace, p)?;
    let q = trace.config.q;
    let densities = normalized_densities(space, trace)?;
    let w = window.clamp(1, trace.steps().max(1));
    if trace.steps() == 0 {
        return Err(Error::InvalidInput("trace has no steps".into()));
    }
    let early_average = (1..=w)
        .map(|k| weighted_energy(space, &densities[k], q))
        .sum::<f64>()
        / w as f64;
    let f0 = &densities[0];
    let ug = min_upper_gradient(space, f0, q)?;
    let min_ug_energy: f64 = (0..space.len())
        .map(|x| space.measure()[x] * ug.g[x].powf(q) / f0[x].powf(p - 1.0))
        .sum();
    let excess = early_average - (1.0 + SLACK) * min_ug_energy;
    Ok(ChainReport {
        early_average,
        min_ug_energy,
        check: Check::new("theorem_chain", excess.max(0.0), ROUNDOFF_TOL),
    })
}
