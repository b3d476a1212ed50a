//! Command-line front end: one subcommand per computation, JSON reports on
//! stdout, nonzero exit status when a check fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use weakgrad::cheeger::{
    active_pattern, active_pattern_changes, cheeger_energy, entropy, flow_properties_check,
    gradient_flow, FlowConfig, FlowTrace, Phi, DEFAULT_INNER_TOL,
};
use weakgrad::fields::discrete_slope;
use weakgrad::harness::{
    emit_report, run_suite, to_canonical_json, Format, SuiteConfig, SuiteName,
};
use weakgrad::hopflax::{conjugate, dpm_monotonicity_check, hj_subsolution_check, hopf_lax};
use weakgrad::modulus::{
    min_upper_gradient, modulus, plan_modulus_inequality, weak_ug_check, DiscreteTestPlan,
    PathFamily, PlanAtom,
};
use weakgrad::space::space_from_json;
use weakgrad::wasserstein::{
    dissipation_bridge_check, kuwada_check, wasserstein_dual, wasserstein_primal, AscentConfig,
    ProbMeasure,
};
use weakgrad::{Check, DiscretePath, FiniteMetricMeasureSpace, ScalarField};

#[derive(Parser)]
#[command(
    name = "weakgrad",
    version,
    about = "Weak gradients on finite metric measure spaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hopf-Lax values and minimizer radii with the HJ checks.
    HopfLax {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        p: f64,
        /// Comma-separated positive times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// q-modulus of a family of paths given as id sequences.
    Modulus {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        family: PathBuf,
        #[arg(long)]
        q: f64,
        /// Test plan `{"atoms":[{"path":[ids],"weight":w}]}` for the plan/modulus inequality.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Minimal q-upper gradient of a field.
    MinUg {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        q: f64,
        /// Test plan whose atoms the result is checked against as a weak upper gradient.
        #[arg(long)]
        plan: Option<PathBuf>,
    },
    /// Cheeger gradient flow; writes the trace as CSV and prints the checks.
    Flow {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        steps: usize,
        /// `power:k` or `entropy:p`.
        #[arg(long, default_value = "power:2")]
        phi: String,
        #[arg(long, default_value = "flow_trace.csv")]
        trace: PathBuf,
    },
    /// Exact W_p between two measures, optionally with the dual lower bound.
    Wasserstein {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        dual: bool,
    },
    /// Kuwada bound and dissipation inequality along a flow trace.
    Kuwada {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        p: f64,
        /// The space the trace was computed on.
        #[arg(long)]
        space: PathBuf,
        #[arg(long, default_value_t = 1)]
        window: usize,
    },
    /// Runs a verification suite and writes its report files.
    Suite {
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json")]
        format: String,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_space(path: &Path) -> Result<FiniteMetricMeasureSpace> {
    space_from_json(&read(path)?).with_context(|| format!("parsing space {}", path.display()))
}

/// A JSON object keyed by node id, one number per node.
fn load_keyed(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<Vec<f64>> {
    let map: BTreeMap<String, f64> = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    if let Some(extra) = map.keys().find(|k| space.index_of(k).is_none()) {
        bail!("{}: unknown node id {extra:?}", path.display());
    }
    space
        .ids()
        .iter()
        .map(|id| {
            map.get(id)
                .copied()
                .ok_or_else(|| anyhow!("{}: missing node id {id:?}", path.display()))
        })
        .collect()
}

fn keyed(space: &FiniteMetricMeasureSpace, values: &[f64]) -> Value {
    Value::Object(
        space
            .ids()
            .iter()
            .cloned()
            .zip(values.iter().map(|&v| json!(v)))
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FamilyDoc {
    Bare(Vec<Vec<String>>),
    Wrapped { paths: Vec<Vec<String>> },
}

fn load_family(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<PathFamily> {
    let doc: FamilyDoc = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let paths = match doc {
        FamilyDoc::Bare(p) | FamilyDoc::Wrapped { paths: p } => p,
    };
    let paths = paths
        .iter()
        .map(|ids| DiscretePath::from_ids(space, ids))
        .collect::<weakgrad::Result<Vec<_>>>()?;
    Ok(PathFamily::new(paths))
}

#[derive(Deserialize)]
struct AtomDoc {
    path: Vec<String>,
    weight: f64,
}

#[derive(Deserialize)]
struct PlanDoc {
    atoms: Vec<AtomDoc>,
}

fn load_plan(space: &FiniteMetricMeasureSpace, path: &Path) -> Result<DiscreteTestPlan> {
    let doc: PlanDoc = serde_json::from_str(&read(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    let atoms = doc
        .atoms
        .iter()
        .map(|a| {
            Ok(PlanAtom {
                path: DiscretePath::from_ids(space, &a.path)?,
                weight: a.weight,
            })
        })
        .collect::<weakgrad::Result<Vec<_>>>()?;
    Ok(DiscreteTestPlan::with_default_grid(space, atoms)?)
}

fn print_json(value: &Value) -> Result<()> {
    print!("{}", to_canonical_json(value)?);
    Ok(())
}

fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

fn hopf_lax_cmd(space: &Path, field: &Path, p: f64, times: &[f64]) -> Result<bool> {
    if !(p > 1.0) {
        bail!("p must exceed 1");
    }
    let mut times = times.to_vec();
    if times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        bail!("times must be positive");
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let x = load_space(space)?;
    let f = load_keyed(&x, field)?;
    let evals: Vec<Value> = times
        .iter()
        .map(|&t| {
            let ev = hopf_lax(&x, &f, t, p);
            json!({
                "t": t,
                "q_values": keyed(&x, &ev.q_values),
                "d_minus": keyed(&x, &ev.d_minus),
                "d_plus": keyed(&x, &ev.d_plus),
            })
        })
        .collect();
    let mut checks = hj_subsolution_check(&x, &f, p, &times).checks;
    checks.push(dpm_monotonicity_check(&x, &f, p, &times).check);
    let pass = all_pass(&checks);
    print_json(&json!({ "p": p, "evaluations": evals, "checks": checks, "pass": pass }))?;
    Ok(pass)
}

fn modulus_cmd(space: &Path, family: &Path, q: f64, plan: Option<&Path>) -> Result<bool> {
    let x = load_space(space)?;
    let family = load_family(&x, family)?;
    let sol = modulus(&x, &family, q)?;
    let mut checks = vec![
        Check::new("kkt", sol.kkt_residual, weakgrad::modulus::KKT_TOL),
        Check::new(
            "slackness",
            sol.slackness_residual,
            weakgrad::modulus::SLACKNESS_TOL,
        ),
        Check::new(
            "feasibility",
            sol.feasibility_residual,
            weakgrad::modulus::FEASIBILITY_TOL,
        ),
    ];
    let mut plan_report = Value::Null;
    if let Some(path) = plan {
        let plan = load_plan(&x, path)?;
        let r = plan_modulus_inequality(&x, &plan, &family, q)?;
        checks.push(r.check.clone());
        plan_report = serde_json::to_value(&r)?;
    }
    let pass = all_pass(&checks);
    print_json(&json!({
        "q": q,
        "value": sol.value,
        "rho": keyed(&x, &sol.rho),
        "plan": plan_report,
        "active_paths": sol.active_paths,
        "checks": checks,
        "pass": pass,
    }))?;
    Ok(pass)
}

fn min_ug_cmd(space: &Path, field: &Path, q: f64, plan: Option<&Path>) -> Result<bool> {
    let x = load_space(space)?;
    let f = load_keyed(&x, field)?;
    let sol = min_upper_gradient(&x, &f, q)?;
    let slope_energy = discrete_slope(&x, &f).lq_energy(&x, q);
    let mut checks = vec![
        Check::new("kkt", sol.kkt_residual, weakgrad::modulus::KKT_TOL),
        Check::new(
            "slackness",
            sol.slackness_residual,
            weakgrad::modulus::SLACKNESS_TOL,
        ),
        Check::new(
            "violation",
            sol.worst_violation,
            weakgrad::modulus::FEASIBILITY_TOL,
        ),
        Check::new(
            "below_slope",
            sol.value - slope_energy,
            weakgrad::modulus::FEASIBILITY_TOL * (1.0 + slope_energy),
        ),
    ];
    if let Some(path) = plan {
        let plan = load_plan(&x, path)?;
        let r = weak_ug_check(&x, &f, &sol.g, &[plan]);
        checks.push(Check::new("weak_ug", r.worst, r.tolerance));
    }
    let id = |i: usize| x.ids()[i].clone();
    let log: Vec<Value> = sol
        .generated_constraints
        .iter()
        .map(|c| {
            json!({
                "round": c.round,
                "a": id(c.a),
                "b": id(c.b),
                "path": c.path.iter().map(|&i| id(i)).collect::<Vec<_>>(),
                "rhs": c.rhs,
            })
        })
        .collect();
    let pass = all_pass(&checks);
    print_json(&json!({
        "q": q,
        "value": sol.value,
        "g": keyed(&x, &sol.g),
        "slope_energy": slope_energy,
        "iterations": sol.iterations,
        "generated_constraints": log,
        "checks": checks,
        "pass": pass,
    }))?;
    Ok(pass)
}

const TRACE_HEADER: [&str; 6] = ["time", "energy", "mass", "min", "max", "entropy"];

fn write_trace(
    x: &FiniteMetricMeasureSpace,
    trace: &FlowTrace,
    phi: Phi,
    path: &Path,
) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header: Vec<String> = TRACE_HEADER.iter().map(|s| s.to_string()).collect();
    header.extend(x.ids().iter().map(|id| format!("f_{id}")));
    w.write_record(&header)?;
    for (k, f) in trace.fields.iter().enumerate() {
        let mut row = vec![
            trace.times[k],
            trace.energies[k],
            x.integrate(f),
            f.min(),
            f.max(),
            entropy(x, f, phi),
        ];
        row.extend(f.iter().copied());
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

fn flow_cmd(
    space: &Path,
    field: &Path,
    q: f64,
    tau: f64,
    steps: usize,
    phi: &str,
    out: &Path,
) -> Result<bool> {
    let x = load_space(space)?;
    let f0 = load_keyed(&x, field)?;
    let phi = Phi::parse(phi)?;
    let trace = gradient_flow(&x, &f0, FlowConfig::new(q, tau, steps))?;
    write_trace(&x, &trace, phi, out)?;
    let report = flow_properties_check(&x, &trace, phi);
    let pass = report.passed();
    print_json(&json!({
        "q": q,
        "tau": tau,
        "steps": steps,
        "trace": out.display().to_string(),
        "final_energy": trace.energies.last(),
        "active_pattern_changes": active_pattern_changes(&x, &trace),
        "final_active_pattern": Value::Object(
            x.ids()
                .iter()
                .cloned()
                .zip(active_pattern(&x, trace.last()).into_iter().map(|ys| json!(ys.iter().map(|&y| x.ids()[y].clone()).collect::<Vec<_>>())))
                .collect()
        ),
        "checks": report.checks,
        "dissipation": report.dissipation,
        "pass": pass,
    }))?;
    Ok(pass)
}

/// Rebuilds a flow trace from the CSV written by `flow`.
fn read_trace(x: &FiniteMetricMeasureSpace, path: &Path, q: f64) -> Result<FlowTrace> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = r.headers()?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("{}: missing column {name:?}", path.display()))
    };
    let time_col = column("time")?;
    let field_cols: Vec<usize> = x
        .ids()
        .iter()
        .map(|id| column(&format!("f_{id}")))
        .collect::<Result<_>>()?;
    let mut times = Vec::new();
    let mut fields = Vec::new();
    for row in r.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {:?}", &row[i]))
        };
        times.push(num(time_col)?);
        fields.push(ScalarField::new(
            field_cols.iter().map(|&i| num(i)).collect::<Result<_>>()?,
        )?);
    }
    if fields.len() < 2 {
        bail!("{}: a trace needs at least two rows", path.display());
    }
    let tau = times[1] - times[0];
    if !(tau > 0.0) {
        bail!("{}: times must increase", path.display());
    }
    if let Some(k) = times
        .windows(2)
        .position(|w| ((w[1] - w[0]) - tau).abs() > 1e-9 * tau.max(1.0))
    {
        bail!("{}: uneven time step at row {}", path.display(), k + 1);
    }
    let laplacians = fields
        .windows(2)
        .map(|w| {
            ScalarField::new(
                w[1].iter()
                    .zip(w[0].iter())
                    .map(|(a, b)| (a - b) / tau)
                    .collect(),
            )
        })
        .collect::<weakgrad::Result<Vec<_>>>()?;
    let steps = laplacians.len();
    Ok(FlowTrace {
        energies: fields.iter().map(|f| cheeger_energy(x, f, q)).collect(),
        times,
        fields,
        laplacians,
        kkt_residuals: vec![0.0; steps],
        kkt_tolerances: vec![DEFAULT_INNER_TOL; steps],
        config: FlowConfig::new(q, tau, steps),
    })
}

fn wasserstein_cmd(space: &Path, mu: &Path, nu: &Path, p: f64, dual: bool) -> Result<bool> {
    let x = load_space(space)?;
    let mu = ProbMeasure::new(&x, load_keyed(&x, mu)?)?;
    let nu = ProbMeasure::new(&x, load_keyed(&x, nu)?)?;
    let t = wasserstein_primal(&x, &mu, &nu, p)?;
    let mut checks = vec![Check::new(
        "marginals",
        t.coupling.marginal_error(&mu, &nu),
        weakgrad::wasserstein::MARGINAL_TOL,
    )];
    let coupling: Vec<Value> = (0..x.len())
        .flat_map(|i| (0..x.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| t.coupling.matrix[i][j] > 0.0)
        .map(|(i, j)| json!({ "from": x.ids()[i], "to": x.ids()[j], "mass": t.coupling.matrix[i][j] }))
        .collect();
    let mut report = json!({
        "p": p,
        "value": t.value,
        "cost": t.cost,
        "coupling": coupling,
        "pivots": t.pivots,
    });
    if dual {
        let d = wasserstein_dual(&x, &mu, &nu, p, &AscentConfig::default())?;
        let target = t.cost / p;
        checks.push(Check::new(
            "weak_duality",
            d.lower_bound - target,
            weakgrad::wasserstein::dual::WEAK_DUALITY_TOL * (1.0 + target),
        ));
        checks.push(Check::new(
            "dual_gap",
            target - d.lower_bound,
            weakgrad::wasserstein::dual::DUAL_GAP_TOL * (1.0 + target),
        ));
        report["dual"] = json!({
            "lower_bound": d.lower_bound,
            "psi": keyed(&x, &d.psi),
            "iterations": d.iterations,
        });
    }
    let pass = all_pass(&checks);
    report["checks"] = serde_json::to_value(&checks)?;
    report["pass"] = json!(pass);
    print_json(&report)?;
    Ok(pass)
}

fn kuwada_cmd(trace: &Path, p: f64, space: &Path, window: usize) -> Result<bool> {
    if !(p > 1.0) {
        bail!("p must exceed 1");
    }
    let x = load_space(space)?;
    let trace = read_trace(&x, trace, conjugate(p))?;
    let k = kuwada_check(&x, &trace, p, window)?;
    let b = dissipation_bridge_check(&x, &trace, p)?;
    let checks = vec![k.check.clone(), b.check.clone()];
    let pass = all_pass(&checks);
    print_json(&json!({
        "p": p,
        "q": conjugate(p),
        "tau": trace.config.tau,
        "window": window,
        "max_consumption": k.max_consumption,
        "steps": k.steps,
        "young_slack": b.young_slack,
        "min_ug_value": b.min_ug_value,
        "checks": checks,
        "pass": pass,
    }))?;
    Ok(pass)
}

fn suite_cmd(name: &str, config: Option<&Path>, out: Option<&Path>, format: &str) -> Result<bool> {
    let suite: SuiteName = name.parse()?;
    let format: Format = format.parse()?;
    let config = match config {
        Some(path) => SuiteConfig::from_json(&read(path)?)?,
        None => SuiteConfig::preset(suite),
    };
    if config.suite != suite {
        bail!("config is for suite {}, not {suite}", config.suite);
    }
    let report = run_suite(&config)?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let written = emit_report(&report, format, &dir)?;
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    let s = &report.summary;
    println!(
        "{suite}: {} passed, {} failed, {} informational",
        s.passed, s.failed, s.informational
    );
    Ok(report.passed())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::HopfLax {
            space,
            field,
            p,
            times,
        } => hopf_lax_cmd(&space, &field, p, &times),
        Command::Modulus {
            space,
            family,
            q,
            plan,
        } => modulus_cmd(&space, &family, q, plan.as_deref()),
        Command::MinUg {
            space,
            field,
            q,
            plan,
        } => min_ug_cmd(&space, &field, q, plan.as_deref()),
        Command::Flow {
            space,
            field,
            q,
            tau,
            steps,
            phi,
            trace,
        } => flow_cmd(&space, &field, q, tau, steps, &phi, &trace),
        Command::Wasserstein {
            space,
            mu,
            nu,
            p,
            dual,
        } => wasserstein_cmd(&space, &mu, &nu, p, dual),
        Command::Kuwada {
            trace,
            p,
            space,
            window,
        } => kuwada_cmd(&trace, p, &space, window),
        Command::Suite {
            name,
            config,
            out,
            format,
        } => suite_cmd(&name, config.as_deref(), out.as_deref(), &format),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
