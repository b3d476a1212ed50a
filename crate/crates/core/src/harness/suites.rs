//! Instance generation and the checks each suite records.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cheeger::{
    active_pattern_changes, dissipation_order, equality_branch_residual, flow_properties_check,
    gradient_flow, integration_by_parts_check, observed_orders, step_dissipation, FlowConfig, Phi,
    MIN_ORDER,
};
use crate::error::Result;
use crate::fields::{all_simple_paths, discrete_slope, DiscretePath};
use crate::harness::{CheckRecord, Recorder, SuiteConfig, SuiteName};
use crate::hopflax::{conjugate, default_time_grid, dpm_monotonicity_check, hj_subsolution_check};
use crate::modulus::plan::{plan_modulus_inequality, DiscreteTestPlan, PlanAtom};
use crate::modulus::{min_upper_gradient, min_upper_gradient_over_paths, modulus, PathFamily};
use crate::report::Check;
use crate::space::{
    grid_graph, path_graph, random_space, FiniteMetricMeasureSpace, RandomSpaceSpec,
};
use crate::wasserstein::{
    dissipation_bridge_check, kuwada_check, theorem_chain_check, wasserstein_dual,
    wasserstein_primal, AscentConfig, ProbMeasure,
};

pub const HJ_TIMES: usize = 32;
pub const BRUTE_FORCE_MAX_N: usize = 6;
pub const BRUTE_FORCE_TOL: f64 = 1e-7;
pub const PLAN_PAIRS_PER_INSTANCE: usize = 2;
pub const FLOW_TAUS: [f64; 3] = [4e-2, 2e-2, 1e-2];
pub const FLOW_HORIZON: f64 = 0.4;
/// Edge lengths for flow instances; longer edges slow the flow down.
pub const FLOW_WEIGHT_RANGE: (f64, f64) = (2.0, 6.0);
pub const BRIDGE_HORIZON: f64 = 0.08;
pub const CHAIN_WINDOW: usize = 4;
pub const IDENTIFICATION_CONSTANT: f64 = 5.0;
pub const GAP_MONOTONE_TOL: f64 = 1e-9;
pub const GRID_SIDES: [usize; 3] = [4, 6, 8];

#[derive(Debug, Clone, Copy)]
pub(crate) struct Instance {
    pub seed: u64,
    pub n: usize,
    pub p: f64,
}

impl Instance {
    fn descriptor(&self, suite: SuiteName) -> String {
        match suite {
            SuiteName::Identification => format!("n={} p={}", self.n, self.p),
            _ => format!("seed={} n={} p={}", self.seed, self.n, self.p),
        }
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        let key = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((self.n as u64) << 32)
            .wrapping_add(self.p.to_bits().rotate_left(17))
            .wrapping_add(salt);
        ChaCha8Rng::seed_from_u64(key)
    }
}

pub(crate) fn instances(config: &SuiteConfig) -> Vec<Instance> {
    let seeds: &[u64] = match config.suite {
        SuiteName::Identification => &config.seeds[..1],
        _ => &config.seeds,
    };
    let mut out = Vec::new();
    for &seed in seeds {
        for &n in &config.sizes {
            for &p in &config.exponents {
                out.push(Instance { seed, n, p });
            }
        }
    }
    out
}

pub(crate) fn run_instance(config: &SuiteConfig, inst: &Instance) -> Vec<CheckRecord> {
    let mut rec = Recorder::new(inst.descriptor(config.suite), &config.tolerances);
    let outcome = match config.suite {
        SuiteName::Hj => hj(inst, &mut rec),
        SuiteName::Modulus => modulus_suite(inst, &mut rec),
        SuiteName::Flow => flow(inst, &mut rec),
        SuiteName::Duality => duality(inst, &mut rec),
        SuiteName::Identification => identification(inst, &mut rec),
    };
    if let Err(e) = outcome {
        rec.error(config.suite.as_str(), &e);
    }
    rec.finish()
}

/// Checks spanning several instances.
pub(crate) fn cross_instance(config: &SuiteConfig, records: &[CheckRecord]) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    if config.suite == SuiteName::Identification {
        for &p in &config.exponents {
            let mut sizes = config.sizes.clone();
            sizes.sort_unstable();
            sizes.dedup();
            let gaps: Vec<f64> = sizes
                .iter()
                .filter_map(|&n| {
                    let inst = Instance {
                        seed: config.seeds[0],
                        n,
                        p,
                    };
                    let key = inst.descriptor(SuiteName::Identification);
                    records
                        .iter()
                        .find(|r| r.instance == key && r.name == "functional_gap")
                        .map(|r| r.residual)
                })
                .collect();
            let rise = gaps.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
            let mut rec = Recorder::new(format!("p={p}"), &config.tolerances);
            if gaps.len() == sizes.len() {
                rec.check(
                    Check::new("gap_nonincreasing", rise, GAP_MONOTONE_TOL)
                        .with_note(format!("gaps {gaps:?} over sizes {sizes:?}")),
                );
            } else {
                rec.check(Check::flag("gap_nonincreasing", false).with_note("missing sizes"));
            }
            out.extend(rec.finish());
        }
    }
    out
}

fn uniform_field(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn space_for(inst: &Instance, spec: RandomSpaceSpec) -> Result<FiniteMetricMeasureSpace> {
    random_space(inst.seed, &RandomSpaceSpec { n: inst.n, ..spec })
}

fn hj(inst: &Instance, rec: &mut Recorder) -> Result<()> {
    let space = space_for(inst, RandomSpaceSpec::default())?;
    let f = uniform_field(&mut inst.rng(1), space.len(), -1.0, 1.0);
    let grid = default_time_grid(&space, &f, inst.p, HJ_TIMES);
    rec.check(dpm_monotonicity_check(&space, &f, inst.p, &grid).check);
    let report = hj_subsolution_check(&space, &f, inst.p, &grid);
    for c in report.checks {
        rec.check(c);
    }
    rec.value("derivatives_checked", report.derivatives_checked as f64);
    rec.value("derivative_exceptions", report.exceptions.len() as f64);
    Ok(())
}

/// A simple edge-path from a random start with a random number of steps.
fn random_path(space: &FiniteMetricMeasureSpace, rng: &mut ChaCha8Rng) -> Result<DiscretePath> {
    let n = space.len();
    let target = rng.gen_range(1..n);
    let mut vertices = vec![rng.gen_range(0..n)];
    let mut on = vec![false; n];
    on[vertices[0]] = true;
    while vertices.len() <= target {
        let here = *vertices.last().expect("nonempty");
        let options: Vec<usize> = space
            .neighbors(here)
            .iter()
            .map(|&(y, _)| y)
            .filter(|&y| !on[y])
            .collect();
        match options.choose(rng) {
            Some(&y) => {
                on[y] = true;
                vertices.push(y);
            }
            None => break,
        }
    }
    if vertices.len() < 2 {
        vertices.push(space.neighbors(vertices[0])[0].0);
    }
    DiscretePath::new(space, vertices)
}

fn random_paths(
    space: &FiniteMetricMeasureSpace,
    rng: &mut ChaCha8Rng,
    count: usize,
) -> Result<Vec<DiscretePath>> {
    (0..count).map(|_| random_path(space, rng)).collect()
}

fn modulus_suite(inst: &Instance, rec: &mut Recorder) -> Result<()> {
    let q = conjugate(inst.p);
    let space = space_for(inst, RandomSpaceSpec::default())?;
    let mut rng = inst.rng(2);
    let f = uniform_field(&mut rng, space.len(), -1.0, 1.0);

    let ug = min_upper_gradient(&space, &f, q)?;
    rec.check(Check::new("ug_kkt", ug.kkt_residual, 1e-9));
    rec.check(Check::new("ug_slackness", ug.slackness_residual, 1e-7));
    rec.check(Check::new("ug_violation", ug.worst_violation, 1e-9));
    let slope_value = discrete_slope(&space, &f).lq_energy(&space, q);
    rec.check(Check::new(
        "ug_below_slope",
        ug.value - slope_value,
        1e-9 * (1.0 + slope_value),
    ));
    rec.value(
        "ug_generated_constraints",
        ug.generated_constraints.len() as f64,
    );
    if space.len() <= BRUTE_FORCE_MAX_N {
        let (_, brute) = min_upper_gradient_over_paths(&space, &f, q, &all_simple_paths(&space))?;
        rec.check(Check::new(
            "ug_brute_force",
            (ug.value - brute).abs() / (1.0 + brute),
            BRUTE_FORCE_TOL,
        ));
    }
    if q != 2.0 {
        // empirical comparison across exponents; no equality is claimed
        let other = min_upper_gradient(&space, &f, 2.0)?;
        let spread =
            ug.g.iter()
                .zip(other.g.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        rec.value("ug_exponent_spread", spread);
    }

    let inner_count = rng.gen_range(1..=3);
    let inner = random_paths(&space, &mut rng, inner_count)?;
    let extra_count = rng.gen_range(1..=3);
    let extra = random_paths(&space, &mut rng, extra_count)?;
    let small = PathFamily::new(inner.iter().cloned());
    let large = PathFamily::new(inner.into_iter().chain(extra));
    let (ms, ml) = (modulus(&space, &small, q)?, modulus(&space, &large, q)?);
    rec.check(Check::new(
        "modulus_monotone",
        ms.value - ml.value,
        1e-9 * (1.0 + ml.value),
    ));
    for sol in [&ms, &ml] {
        rec.check(Check::new("modulus_kkt", sol.kkt_residual, 1e-9));
        rec.check(Check::new(
            "modulus_slackness",
            sol.slackness_residual,
            1e-7,
        ));
        rec.check(Check::new(
            "modulus_feasibility",
            sol.feasibility_residual,
            1e-9,
        ));
    }

    for _ in 0..PLAN_PAIRS_PER_INSTANCE {
        let k = rng.gen_range(1..=4);
        let paths = random_paths(&space, &mut rng, k)?;
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let atoms: Vec<PlanAtom> = paths
            .iter()
            .zip(&raw)
            .map(|(path, w)| PlanAtom {
                path: path.clone(),
                weight: w / total,
            })
            .collect();
        let plan = DiscreteTestPlan::with_default_grid(&space, atoms)?;
        let mut members: Vec<DiscretePath> =
            paths.into_iter().filter(|_| rng.gen_bool(0.5)).collect();
        let extra_count = rng.gen_range(0..=2);
        members.extend(random_paths(&space, &mut rng, extra_count)?);
        if members.is_empty() {
            members.push(plan.atoms()[0].path.clone());
        }
        let report = plan_modulus_inequality(&space, &plan, &PathFamily::new(members), q)?;
        rec.check(report.check);
    }
    Ok(())
}

fn flow(inst: &Instance, rec: &mut Recorder) -> Result<()> {
    let p = inst.p;
    let q = conjugate(p);
    let phi = Phi::Entropy(p);
    let space = space_for(
        inst,
        RandomSpaceSpec {
            weight_range: FLOW_WEIGHT_RANGE,
            ..RandomSpaceSpec::default()
        },
    )?;
    let mut rng = inst.rng(3);
    let f0 = uniform_field(&mut rng, space.len(), 0.5, 1.5);

    let tau = FLOW_TAUS[FLOW_TAUS.len() - 1];
    let steps = (FLOW_HORIZON / tau).round() as usize;
    let trace = gradient_flow(&space, &f0, FlowConfig::new(q, tau, steps))?;
    let props = flow_properties_check(&space, &trace, phi);
    for c in props.checks {
        rec.check(c);
    }
    let defect = step_dissipation(&space, &trace, phi)
        .iter()
        .map(|d| d.chain_defect().abs())
        .fold(0.0, f64::max);
    rec.value("chain_defect", defect);
    rec.value(
        "active_pattern_changes",
        active_pattern_changes(&space, &trace) as f64,
    );

    let order = dissipation_order(&space, &f0, q, FLOW_HORIZON, &FLOW_TAUS, phi)?;
    rec.check(order.check.with_note(format!(
        "residuals {:?} orders {:?}",
        order.residuals, order.orders
    )));
    let unit = space_for(inst, RandomSpaceSpec::default())?;
    let unit_order = dissipation_order(&unit, &f0, q, FLOW_HORIZON, &FLOW_TAUS, phi)?;
    let mut c = unit_order.check;
    c.name = "dissipation_order_unit_weights".into();
    rec.info(c);

    for step in [0, steps / 4, steps - 1] {
        let g = uniform_field(&mut rng, space.len(), -1.0, 1.0);
        rec.check(integration_by_parts_check(&space, &trace, step, &g).check);
    }

    let affine = |z: f64| 2.0 * z + 1.0;
    let mut residuals = Vec::with_capacity(FLOW_TAUS.len());
    for &t in &FLOW_TAUS {
        let short = gradient_flow(&space, &f0, FlowConfig::new(q, t, 1))?;
        residuals.push(equality_branch_residual(&space, &short, 0, affine));
    }
    let orders = observed_orders(&residuals);
    let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
    rec.check(
        Check::new("equality_branch_order", MIN_ORDER - worst, 0.0)
            .with_note(format!("residuals {residuals:?} orders {orders:?}")),
    );
    Ok(())
}

fn random_measure(space: &FiniteMetricMeasureSpace, rng: &mut ChaCha8Rng) -> Result<ProbMeasure> {
    let mut density: Vec<f64> = (0..space.len())
        .map(|_| {
            if rng.gen_bool(0.2) {
                0.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    if density.iter().all(|&v| v == 0.0) {
        density[0] = 1.0;
    }
    let mut mass: Vec<f64> = density
        .iter()
        .zip(space.measure())
        .map(|(f, m)| f * m)
        .collect();
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|v| *v /= total);
    ProbMeasure::new(space, mass)
}

fn duality(inst: &Instance, rec: &mut Recorder) -> Result<()> {
    let p = inst.p;
    let space = space_for(inst, RandomSpaceSpec::default())?;
    let mut rng = inst.rng(4);
    let (mu, nu) = (
        random_measure(&space, &mut rng)?,
        random_measure(&space, &mut rng)?,
    );
    let primal = wasserstein_primal(&space, &mu, &nu, p)?;
    let target = primal.cost / p;
    rec.check(Check::new(
        "marginals",
        primal.coupling.marginal_error(&mu, &nu),
        1e-10,
    ));
    rec.check(Check::flag(
        "vertex_support",
        primal.coupling.support_size() <= 2 * space.len() - 1,
    ));
    for warm_start in [true, false] {
        let cfg = AscentConfig {
            warm_start,
            ..AscentConfig::default()
        };
        let dual = wasserstein_dual(&space, &mu, &nu, p, &cfg)?;
        let gap = target - dual.lower_bound;
        rec.check(
            Check::new("weak_duality", -gap, 1e-9).with_note(if warm_start {
                "warm"
            } else {
                "cold"
            }),
        );
        let c = Check::new(
            if warm_start {
                "dual_gap"
            } else {
                "dual_gap_cold_start"
            },
            gap,
            1e-4 * (1.0 + target),
        );
        if warm_start {
            rec.check(c);
        } else {
            rec.info(c);
        }
    }

    // flow traces on the same space
    let q = conjugate(p);
    let f0 = uniform_field(&mut rng, space.len(), 0.5, 1.5);
    let mut consumption = Vec::with_capacity(FLOW_TAUS.len());
    for &tau in &FLOW_TAUS {
        let steps = (BRIDGE_HORIZON / tau).round() as usize;
        let trace = gradient_flow(&space, &f0, FlowConfig::new(q, tau, steps))?;
        let k = kuwada_check(&space, &trace, p, 1)?;
        consumption.push(k.max_consumption);
        rec.check(k.check.with_note(format!(
            "tau {tau:e}, max slack consumption {:.6e}",
            k.max_consumption
        )));
        let mut whole = kuwada_check(&space, &trace, p, steps)?.check;
        whole.name = "kuwada_whole_horizon".into();
        rec.info(whole);
        let bridge = dissipation_bridge_check(&space, &trace, p)?;
        let slack = bridge
            .young_slack
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        rec.check(
            bridge
                .check
                .with_note(format!("tau {tau:e}, smallest Young slack {slack:.6e}")),
        );
        let mut chain = theorem_chain_check(&space, &trace, p, CHAIN_WINDOW)?.check;
        chain.name = "theorem_chain_random".into();
        rec.info(chain);
    }
    let rise = consumption
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    rec.check(
        Check::new("kuwada_consumption_shrinks", rise.max(0.0), 0.0)
            .with_note(format!("consumption {consumption:?}")),
    );

    if inst.seed == 0 && inst.n == 6 {
        // affine start on a path, where the minimal upper gradient equals the slope
        let line = path_graph(8);
        let f: Vec<f64> = (0..8).map(|i| 1.0 + i as f64 / 7.0).collect();
        let trace = gradient_flow(&line, &f, FlowConfig::new(q, 1e-3, CHAIN_WINDOW))?;
        rec.check(
            theorem_chain_check(&line, &trace, p, CHAIN_WINDOW)?
                .check
                .with_note("affine start on P_8"),
        );
    }
    Ok(())
}

fn identification(inst: &Instance, rec: &mut Recorder) -> Result<()> {
    let q = conjugate(inst.p);
    let n = inst.n;
    let space = path_graph(n);
    let f: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let ug = min_upper_gradient(&space, &f, q)?;
    let ug_norm = ug.value.powf(1.0 / q);
    let slope_norm = discrete_slope(&space, &f)
        .lq_energy(&space, q)
        .powf(1.0 / q);
    let tol = IDENTIFICATION_CONSTANT / n as f64;
    rec.check(Check::new("ug_norm", (ug_norm - 1.0).abs(), tol));
    rec.check(Check::new("slope_norm", (slope_norm - 1.0).abs(), tol));
    rec.check(Check::new("ug_kkt", ug.kkt_residual, 1e-9));
    rec.value("functional_gap", (slope_norm - ug_norm).abs());

    // grid graphs are recorded once, alongside the smallest path
    if n == 8 {
        for side in GRID_SIDES {
            grid_study(side, q, rec)?;
        }
    }
    Ok(())
}

/// `f(x, y) = x + y^2 / 2` on the `side x side` grid, with `|grad f|^2 = 1 + y^2`.
fn grid_study(side: usize, q: f64, rec: &mut Recorder) -> Result<()> {
    let space = grid_graph(side);
    let h = 1.0 / (side - 1) as f64;
    let f: Vec<f64> = (0..side * side)
        .map(|i| {
            let (r, c) = (i / side, i % side);
            let (x, y) = (c as f64 * h, r as f64 * h);
            x + 0.5 * y * y
        })
        .collect();
    let ug = min_upper_gradient(&space, &f, q)?;
    let slope = discrete_slope(&space, &f).lq_energy(&space, q);
    let panels = 2000;
    let continuum: f64 = (0..panels)
        .map(|k| {
            let y = (k as f64 + 0.5) / panels as f64;
            (1.0 + y * y).powf(q / 2.0) / panels as f64
        })
        .sum();
    rec.value(&format!("grid{side}_ug_norm"), ug.value.powf(1.0 / q));
    rec.value(&format!("grid{side}_slope_norm"), slope.powf(1.0 / q));
    rec.value(
        &format!("grid{side}_continuum_norm"),
        continuum.powf(1.0 / q),
    );
    Ok(())
}
