//! Independent reference computations checked against the library.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weakgrad::cheeger::prox_step;
use weakgrad::hopflax::hopf_lax;
use weakgrad::modulus::{min_upper_gradient, modulus, PathFamily};
use weakgrad::space::{
    build_from_graph, random_space, EdgeSpec, GraphSpec, NodeSpec, RandomSpaceSpec,
};
use weakgrad::wasserstein::{wasserstein_primal, ProbMeasure};
use weakgrad::{DiscretePath, FiniteMetricMeasureSpace};

const EXACT_REL_TOL: f64 = 1e-12;
const CLOSED_FORM_REL_TOL: f64 = 1e-7;
const TRANSPORT_REL_TOL: f64 = 1e-9;
const MIN_UG_FEASIBILITY_TOL: f64 = 1e-9;
const MIN_UG_GAP_REL_TOL: f64 = 1e-4;

fn space(seed: u64, n: usize) -> FiniteMetricMeasureSpace {
    random_space(
        seed,
        &RandomSpaceSpec {
            n,
            ..Default::default()
        },
    )
    .unwrap()
}

fn adjacency(space: &FiniteMetricMeasureSpace) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); space.len()];
    for e in space.edges() {
        adj[e.u].push((e.v, e.w));
        adj[e.v].push((e.u, e.w));
    }
    adj
}

fn bellman_ford(space: &FiniteMetricMeasureSpace) -> Vec<Vec<f64>> {
    let n = space.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (s, row) in d.iter_mut().enumerate() {
        row[s] = 0.0;
        for _ in 0..n {
            for e in space.edges() {
                for (a, b) in [(e.u, e.v), (e.v, e.u)] {
                    if row[a] + e.w < row[b] {
                        row[b] = row[a] + e.w;
                    }
                }
            }
        }
    }
    d
}

fn simple_paths(space: &FiniteMetricMeasureSpace) -> Vec<Vec<usize>> {
    fn grow(adj: &[Vec<(usize, f64)>], path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *path.last().unwrap();
        for &(y, _) in &adj[last] {
            if path.contains(&y) {
                continue;
            }
            path.push(y);
            out.push(path.clone());
            grow(adj, path, out);
            path.pop();
        }
    }
    let adj = adjacency(space);
    let mut out = Vec::new();
    for s in 0..space.len() {
        grow(&adj, &mut vec![s], &mut out);
    }
    out
}

/// Trapezoid weights of a vertex path, spread over all points.
fn line_weights(space: &FiniteMetricMeasureSpace, path: &[usize]) -> Vec<f64> {
    let adj = adjacency(space);
    let mut a = vec![0.0; space.len()];
    for pair in path.windows(2) {
        let w = adj[pair[0]].iter().find(|(y, _)| *y == pair[1]).unwrap().1;
        a[pair[0]] += 0.5 * w;
        a[pair[1]] += 0.5 * w;
    }
    a
}

fn slope(space: &FiniteMetricMeasureSpace, f: &[f64]) -> Vec<f64> {
    let adj = adjacency(space);
    adj.iter()
        .enumerate()
        .map(|(x, nb)| {
            nb.iter()
                .map(|&(y, w)| (f[y] - f[x]).abs() / w)
                .fold(0.0, f64::max)
        })
        .collect()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    (got - want).abs() <= tol * (1.0 + want.abs())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distances_match_bellman_ford(seed in 0u64..1000, n in 3usize..10) {
        let x = space(seed, n);
        let d = bellman_ford(&x);
        for i in 0..n {
            for j in 0..n {
                prop_assert!(rel_close(x.dist(i, j), d[i][j], EXACT_REL_TOL));
            }
        }
    }

    #[test]
    fn hopf_lax_matches_direct_minimum(seed in 0u64..1000, n in 3usize..10, p in 1.2f64..4.0, t in 0.01f64..5.0) {
        let x = space(seed, n);
        let d = bellman_ford(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = uniform(&mut rng, n, -2.0, 2.0);
        let ev = hopf_lax(&x, &f, t, p);
        for i in 0..n {
            let direct = (0..n)
                .map(|y| f[y] + d[i][y].powf(p) / (p * t.powf(p - 1.0)))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(rel_close(ev.q_values[i], direct, EXACT_REL_TOL));
            prop_assert!(ev.d_minus[i] <= ev.d_plus[i]);
        }
    }

    #[test]
    fn single_path_modulus_closed_form(seed in 0u64..1000, n in 3usize..8, q in prop::sample::select(vec![1.5, 2.0, 3.0])) {
        let x = space(seed, n);
        let paths = simple_paths(&x);
        let path = &paths[(seed as usize * 7919) % paths.len()];
        let a = line_weights(&x, path);
        // min sum m rho^q subject to a . rho >= 1
        let qc = q / (q - 1.0);
        let s: f64 = a.iter().zip(x.measure()).map(|(a, m)| a.powf(qc) * m.powf(1.0 - qc)).sum();
        let want = s.powf(1.0 - q);
        let family = PathFamily::new([DiscretePath::new(&x, path.clone()).unwrap()]);
        let got = modulus(&x, &family, q).unwrap().value;
        prop_assert!(rel_close(got, want, CLOSED_FORM_REL_TOL), "{got} vs {want}");
    }

    #[test]
    fn prox_minimizes_its_objective(seed in 0u64..1000, n in 3usize..8, q in prop::sample::select(vec![1.5, 2.0, 3.0]), tau in 0.01f64..0.5) {
        let x = space(seed, n);
        let m = x.measure().to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
        let f = uniform(&mut rng, n, 0.0, 2.0);
        let u = prox_step(&x, &f, q, tau).unwrap().u.into_inner();
        let objective = |v: &[f64]| -> f64 {
            let fit: f64 = (0..n).map(|i| m[i] * (v[i] - f[i]).powi(2)).sum::<f64>() / (2.0 * tau);
            let energy: f64 = slope(&x, v).iter().zip(&m).map(|(s, m)| m * s.powf(q)).sum::<f64>() / q;
            fit + energy
        };
        let base = objective(&u);
        for eps in [1e-2, 1e-4] {
            for _ in 0..20 {
                let h = uniform(&mut rng, n, -1.0, 1.0);
                let moved: Vec<f64> = u.iter().zip(&h).map(|(a, b)| a + eps * b).collect();
                prop_assert!(objective(&moved) >= base - 1e-10 * (1.0 + base));
            }
        }
        let mass = |v: &[f64]| v.iter().zip(&m).map(|(a, b)| a * b).sum::<f64>();
        prop_assert!((mass(&u) - mass(&f)).abs() <= 1e-9 * (1.0 + mass(&f).abs()));
    }

    #[test]
    fn transport_on_a_line_matches_quantile_coupling(seed in 0u64..1000, n in 2usize..9, p in 1.1f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gaps = uniform(&mut rng, n - 1, 0.2, 2.0);
        let spec = GraphSpec {
            nodes: (0..n).map(|i| NodeSpec { id: format!("v{i}"), m: 1.0 }).collect(),
            edges: (0..n - 1)
                .map(|i| EdgeSpec { u: format!("v{i}"), v: format!("v{}", i + 1), w: gaps[i] })
                .collect(),
        };
        let x = build_from_graph(&spec).unwrap();
        let mut pos = vec![0.0];
        for g in &gaps {
            pos.push(pos.last().unwrap() + g);
        }
        let normalize = |v: Vec<f64>| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|a| a / s).collect::<Vec<f64>>()
        };
        let mu = normalize(uniform(&mut rng, n, 0.0, 1.0));
        let nu = normalize(uniform(&mut rng, n, 0.0, 1.0));

        // monotone rearrangement: walk both cumulative distributions together
        let (mut i, mut j) = (0, 0);
        let (mut ri, mut rj) = (mu[0], nu[0]);
        let mut want = 0.0;
        while i < n && j < n {
            let step = ri.min(rj);
            want += step * (pos[i] - pos[j]).abs().powf(p);
            ri -= step;
            rj -= step;
            if ri <= 1e-15 {
                i += 1;
                ri = if i < n { mu[i] } else { 0.0 };
            }
            if rj <= 1e-15 {
                j += 1;
                rj = if j < n { nu[j] } else { 0.0 };
            }
        }
        let got = wasserstein_primal(&x, &ProbMeasure::new(&x, mu).unwrap(), &ProbMeasure::new(&x, nu).unwrap(), p)
            .unwrap()
            .cost;
        prop_assert!(rel_close(got, want, TRANSPORT_REL_TOL), "{got} vs {want}");
    }
}

/// Lagrangian dual of `min sum m g^q` over `a_k . g >= c_k`, maximized by
/// exact coordinate ascent in each multiplier.
fn min_ug_dual_bound(m: &[f64], rows: &[(Vec<f64>, f64)], q: f64, sweeps: usize) -> f64 {
    let n = m.len();
    let minimizer = |b: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|x| (b[x].max(0.0) / (q * m[x])).powf(1.0 / (q - 1.0)))
            .collect()
    };
    let dual = |lambda: &[f64], b: &[f64]| -> f64 {
        let g = minimizer(b);
        let linear: f64 = lambda.iter().zip(rows).map(|(l, (_, c))| l * c).sum();
        linear - (q - 1.0) * (0..n).map(|x| m[x] * g[x].powf(q)).sum::<f64>()
    };
    let mut lambda = vec![0.0; rows.len()];
    let mut b = vec![0.0; n];
    for _ in 0..sweeps {
        for (k, (a, c)) in rows.iter().enumerate() {
            // d/dl of the dual along coordinate k is c - a . g(b + (l - lambda_k) a), decreasing in l
            let slope_at = |l: f64| -> f64 {
                let shifted: Vec<f64> = (0..n).map(|x| b[x] + (l - lambda[k]) * a[x]).collect();
                let g = minimizer(&shifted);
                c - a.iter().zip(&g).map(|(a, g)| a * g).sum::<f64>()
            };
            let new = if slope_at(0.0) <= 0.0 {
                0.0
            } else {
                let mut hi = lambda[k].max(1.0);
                while slope_at(hi) > 0.0 {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if slope_at(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            };
            for x in 0..n {
                b[x] += (new - lambda[k]) * a[x];
            }
            lambda[k] = new;
        }
    }
    dual(&lambda, &b)
}

#[test]
fn min_upper_gradient_matches_brute_force_dual() {
    let mut checked = 0;
    for seed in 0..12u64 {
        for n in [4usize, 5, 6] {
            let x = space(seed, n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + n as u64);
            let f = uniform(&mut rng, n, -1.0, 1.0);
            let rows: Vec<(Vec<f64>, f64)> = simple_paths(&x)
                .iter()
                .map(|path| {
                    (
                        line_weights(&x, path),
                        (f[*path.last().unwrap()] - f[path[0]]).abs(),
                    )
                })
                .collect();
            for q in [1.5, 2.0, 3.0] {
                let sol = min_upper_gradient(&x, &f, q).unwrap();
                for (a, c) in &rows {
                    let along: f64 = a.iter().zip(sol.g.iter()).map(|(a, g)| a * g).sum();
                    assert!(
                        along >= c - MIN_UG_FEASIBILITY_TOL,
                        "seed {seed} n {n} q {q}: {along} < {c}"
                    );
                }
                let lower = min_ug_dual_bound(x.measure(), &rows, q, 400);
                assert!(lower <= sol.value + MIN_UG_FEASIBILITY_TOL * (1.0 + sol.value));
                assert!(
                    sol.value - lower <= MIN_UG_GAP_REL_TOL * (1.0 + sol.value),
                    "seed {seed} n {n} q {q}: value {} dual {lower}",
                    sol.value
                );
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 108);
}
