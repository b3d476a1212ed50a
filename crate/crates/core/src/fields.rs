//! Scalar fields, discrete slopes, edge-paths and line integrals.
//!
//! Conventions shared by every other module:
//! - the slope at `x` is the largest difference quotient over the graph
//!   neighbors of `x`, measured with edge lengths;
//! - paths are vertex sequences along edges, parametrized on `[0, 1]` at
//!   constant speed equal to their length;
//! - line integrals use the trapezoid rule on every edge.
//!
//! On a finite space every function is Lipschitz and `L^q` convergence is
//! pointwise, so the minimal relaxed slope is represented by
//! [`discrete_slope`] directly, without any relaxation step.

use std::ops::{Deref, Index};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::FiniteMetricMeasureSpace;

/// Real values, one per point.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ScalarField(Vec<f64>);

impl ScalarField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite field value {v}")));
        }
        Ok(Self(values))
    }

    pub fn for_space(space: &FiniteMetricMeasureSpace, values: Vec<f64>) -> Result<Self> {
        check_len(space, values.len())?;
        Self::new(values)
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self((0..n).map(f).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.iter().map(|&v| f(v)).collect())
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Deref for ScalarField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ScalarField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Nonnegative values, one per point: candidate gradients and densities.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct GradientField(Vec<f64>);

impl GradientField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "gradient entries must be finite and nonnegative, got {v}"
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    /// Clamps tiny negative round-off to zero.
    pub(crate) fn from_solver(values: Vec<f64>) -> Self {
        Self(values.into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0);
        Self(self.0.iter().map(|v| v * c).collect())
    }

    /// `sum_x m_x g(x)^q`.
    pub fn lq_energy(&self, space: &FiniteMetricMeasureSpace, q: f64) -> f64 {
        space
            .measure()
            .iter()
            .zip(&self.0)
            .map(|(m, g)| m * g.powf(q))
            .sum()
    }
}

impl Deref for GradientField {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for GradientField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_len(space: &FiniteMetricMeasureSpace, len: usize) -> Result<()> {
    if len != space.len() {
        return Err(Error::InvalidInput(format!(
            "field has {len} entries, space has {} points",
            space.len()
        )));
    }
    Ok(())
}

/// An edge-path `x_0, ..., x_k` with `k >= 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct DiscretePath {
    vertices: Vec<usize>,
}

impl DiscretePath {
    pub fn new(space: &FiniteMetricMeasureSpace, vertices: Vec<usize>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidInput("a path needs at least one edge".into()));
        }
        if let Some(&v) = vertices.iter().find(|&&v| v >= space.len()) {
            return Err(Error::InvalidInput(format!("vertex {v} out of range")));
        }
        for pair in vertices.windows(2) {
            if space.edge_length(pair[0], pair[1]).is_none() {
                return Err(Error::InvalidInput(format!(
                    "{} and {} are not adjacent",
                    space.ids()[pair[0]],
                    space.ids()[pair[1]]
                )));
            }
        }
        Ok(Self { vertices })
    }

    pub fn from_ids(space: &FiniteMetricMeasureSpace, ids: &[impl AsRef<str>]) -> Result<Self> {
        let vertices = ids
            .iter()
            .map(|id| {
                space
                    .index_of(id.as_ref())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown node {:?}", id.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, vertices)
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn start(&self) -> usize {
        self.vertices[0]
    }

    pub fn end(&self) -> usize {
        *self.vertices.last().unwrap()
    }

    pub fn edge_lengths<'a>(
        &'a self,
        space: &'a FiniteMetricMeasureSpace,
    ) -> impl Iterator<Item = f64> + 'a {
        self.vertices
            .windows(2)
            .map(|p| space.edge_length(p[0], p[1]).expect("validated path"))
    }

    /// Arclength, which is also the constant metric speed on `[0, 1]`.
    pub fn length(&self, space: &FiniteMetricMeasureSpace) -> f64 {
        self.edge_lengths(space).sum()
    }

    /// `int_0^1 |gamma'|^p dt`, i.e. `length^p` at constant speed.
    pub fn energy(&self, space: &FiniteMetricMeasureSpace, p: f64) -> f64 {
        self.length(space).powf(p)
    }

    /// Arclength parameter of every vertex, normalized to `[0, 1]`.
    pub fn vertex_params(&self, space: &FiniteMetricMeasureSpace) -> Vec<f64> {
        let total = self.length(space);
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.vertices.len());
        out.push(0.0);
        for w in self.edge_lengths(space) {
            acc += w;
            out.push(acc / total);
        }
        *out.last_mut().unwrap() = 1.0;
        out
    }

    /// Trapezoid weights: `int_gamma g = sum_i coeffs[i] * g(x_i)`.
    pub fn trapezoid_coefficients(&self, space: &FiniteMetricMeasureSpace) -> Vec<f64> {
        let mut coeffs = vec![0.0; self.vertices.len()];
        for (i, w) in self.edge_lengths(space).enumerate() {
            coeffs[i] += 0.5 * w;
            coeffs[i + 1] += 0.5 * w;
        }
        coeffs
    }

    /// Sub-path between two vertex-aligned parameters `t < s`, re-parametrized at constant speed.
    pub fn restrict(&self, space: &FiniteMetricMeasureSpace, t: f64, s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) || !(0.0..=1.0).contains(&s) || t >= s {
            return Err(Error::InvalidInput(format!(
                "restriction needs 0 <= t < s <= 1, got t={t}, s={s}"
            )));
        }
        let params = self.vertex_params(space);
        let locate = |x: f64| {
            params
                .iter()
                .position(|&p| (p - x).abs() <= 1e-12)
                .ok_or_else(|| Error::InvalidInput(format!("parameter {x} is not at a vertex")))
        };
        let (i, j) = (locate(t)?, locate(s)?);
        Self::new(space, self.vertices[i..=j].to_vec())
    }
}

/// Largest neighbor difference quotient at each point.
pub fn discrete_slope(space: &FiniteMetricMeasureSpace, f: &[f64]) -> GradientField {
    assert_eq!(f.len(), space.len());
    let values = (0..space.len())
        .map(|x| {
            space
                .neighbors(x)
                .iter()
                .map(|&(y, w)| (f[y] - f[x]).abs() / w)
                .fold(0.0, f64::max)
        })
        .collect();
    GradientField(values)
}

/// `max_{i != j} |f(i) - f(j)| / d(i, j)`.
pub fn global_lipschitz(space: &FiniteMetricMeasureSpace, f: &[f64]) -> f64 {
    let n = space.len();
    let mut lip: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            lip = lip.max((f[i] - f[j]).abs() / space.dist(i, j));
        }
    }
    lip
}

/// Trapezoid line integral `sum_i (g(x_i) + g(x_{i+1})) / 2 * w(x_i, x_{i+1})`.
pub fn path_integral(space: &FiniteMetricMeasureSpace, g: &[f64], path: &DiscretePath) -> f64 {
    let v = path.vertices();
    path.edge_lengths(space)
        .enumerate()
        .map(|(i, w)| 0.5 * (g[v[i]] + g[v[i + 1]]) * w)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpperGradientReport {
    /// `|f(end) - f(start)| - int_gamma g` per path.
    pub residuals: Vec<f64>,
    pub worst: f64,
    pub tolerance: f64,
}

impl UpperGradientReport {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }

    pub fn failures(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let tol = self.tolerance;
        self.residuals
            .iter()
            .copied()
            .enumerate()
            .filter(move |&(_, r)| r > tol)
    }
}

pub const UPPER_GRADIENT_TOL: f64 = 1e-12;

pub(crate) fn upper_gradient_residuals(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    g: &[f64],
    paths: impl IntoIterator<Item = impl std::borrow::Borrow<DiscretePath>>,
) -> UpperGradientReport {
    let residuals: Vec<f64> = paths
        .into_iter()
        .map(|p| {
            let p = p.borrow();
            (f[p.end()] - f[p.start()]).abs() - path_integral(space, g, p)
        })
        .collect();
    let worst = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    UpperGradientReport {
        residuals,
        worst: if worst.is_finite() { worst } else { 0.0 },
        tolerance: UPPER_GRADIENT_TOL,
    }
}

/// Test `|f(end) - f(start)| <= int_gamma g` on every given path.
pub fn is_upper_gradient(
    space: &FiniteMetricMeasureSpace,
    f: &[f64],
    g: &[f64],
    paths: &[DiscretePath],
) -> UpperGradientReport {
    upper_gradient_residuals(space, f, g, paths)
}

/// Every simple edge-path between distinct vertices, each orientation once.
/// Exponential; intended for small spaces (n <= 7).
pub fn all_simple_paths(space: &FiniteMetricMeasureSpace) -> Vec<DiscretePath> {
    let n = space.len();
    let mut out = Vec::new();
    let mut stack = Vec::with_capacity(n);
    let mut on_path = vec![false; n];
    fn extend(
        space: &FiniteMetricMeasureSpace,
        stack: &mut Vec<usize>,
        on_path: &mut [bool],
        out: &mut Vec<DiscretePath>,
    ) {
        let last = *stack.last().unwrap();
        for &(y, _) in space.neighbors(last) {
            if on_path[y] {
                continue;
            }
            stack.push(y);
            on_path[y] = true;
            out.push(DiscretePath {
                vertices: stack.clone(),
            });
            extend(space, stack, on_path, out);
            on_path[y] = false;
            stack.pop();
        }
    }
    for s in 0..n {
        stack.clear();
        stack.push(s);
        on_path[s] = true;
        extend(space, &mut stack, &mut on_path, &mut out);
        on_path[s] = false;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{path_graph, random_space, two_point, RandomSpaceSpec};
    use proptest::prelude::*;

    #[test]
    fn slope_examples() {
        let x2 = two_point();
        assert_eq!(discrete_slope(&x2, &[0.0, 1.0]).values(), &[1.0, 1.0]);
        assert_eq!(discrete_slope(&x2, &[3.0, 3.0]).values(), &[0.0, 0.0]);

        let p5 = path_graph(5);
        let f: Vec<f64> = (0..5).map(|i| i as f64 / 4.0).collect();
        for s in discrete_slope(&p5, &f).values() {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn lipschitz_examples() {
        let x2 = two_point();
        assert_eq!(global_lipschitz(&x2, &[0.0, 1.0]), 1.0);
        assert_eq!(global_lipschitz(&x2, &[2.0, 2.0]), 0.0);

        let p5 = path_graph(5);
        let f: Vec<f64> = (0..5).map(|i| (i as f64 / 4.0).powi(2)).collect();
        assert!((global_lipschitz(&p5, &f) - 7.0 / 4.0).abs() < 1e-14);
    }

    #[test]
    fn integral_examples() {
        let x2 = two_point();
        let ab = DiscretePath::new(&x2, vec![0, 1]).unwrap();
        assert_eq!(path_integral(&x2, &[1.0, 1.0], &ab), 1.0);
        assert_eq!(path_integral(&x2, &[0.0, 0.0], &ab), 0.0);

        let p3 = path_graph(3);
        let full = DiscretePath::new(&p3, vec![0, 1, 2]).unwrap();
        assert!((path_integral(&p3, &[0.0, 2.0, 0.0], &full) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn energy_examples() {
        let x2 = two_point();
        let ab = DiscretePath::new(&x2, vec![0, 1]).unwrap();
        assert_eq!(ab.energy(&x2, 2.0), 1.0);
        let aba = DiscretePath::new(&x2, vec![0, 1, 0]).unwrap();
        assert_eq!(aba.energy(&x2, 3.0), 8.0);

        let p5 = path_graph(5);
        let full = DiscretePath::new(&p5, (0..5).collect()).unwrap();
        assert!((full.energy(&p5, 2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn restriction() {
        let p5 = path_graph(5);
        let full = DiscretePath::new(&p5, (0..5).collect()).unwrap();
        assert_eq!(full.restrict(&p5, 0.0, 1.0).unwrap(), full);
        let half = full.restrict(&p5, 0.0, 0.5).unwrap();
        assert_eq!(half.vertices(), &[0, 1, 2]);
        assert!((half.length(&p5) - 0.5).abs() < 1e-15);
        assert!(full.restrict(&p5, 0.0, 0.3).is_err());
        assert!(full.restrict(&p5, 0.5, 0.5).is_err());
    }

    #[test]
    fn invalid_paths_rejected() {
        let p3 = path_graph(3);
        assert!(DiscretePath::new(&p3, vec![0]).is_err());
        assert!(DiscretePath::new(&p3, vec![0, 2]).is_err());
        assert!(DiscretePath::new(&p3, vec![0, 7]).is_err());
    }

    #[test]
    fn upper_gradient_examples() {
        let x2 = two_point();
        let ab = DiscretePath::new(&x2, vec![0, 1]).unwrap();
        let ok = is_upper_gradient(&x2, &[0.0, 1.0], &[1.0, 1.0], &[ab.clone()]);
        assert!(ok.passed());
        let bad = is_upper_gradient(&x2, &[0.0, 1.0], &[0.0, 0.0], &[ab]);
        assert!(!bad.passed());
        assert_eq!(bad.worst, 1.0);
    }

    #[test]
    fn simple_path_enumeration_counts() {
        // P_3: 0-1, 1-0, 1-2, 2-1, 0-1-2, 2-1-0
        assert_eq!(all_simple_paths(&path_graph(3)).len(), 6);
    }

    fn instance(seed: u64, n: usize) -> FiniteMetricMeasureSpace {
        random_space(
            seed,
            &RandomSpaceSpec {
                n,
                edge_density: 0.5,
                ..Default::default()
            },
        )
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn slope_is_upper_gradient_on_all_simple_paths(seed in 0u64..1000, n in 2usize..=7,
                                                       vals in prop::collection::vec(-3.0f64..3.0, 7)) {
            let x = instance(seed, n);
            let f = &vals[..n];
            let g = discrete_slope(&x, f);
            let report = is_upper_gradient(&x, f, &g, &all_simple_paths(&x));
            prop_assert!(report.passed(), "worst residual {}", report.worst);
        }

        #[test]
        fn slope_subadditive_and_leibniz(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0,
                                         f in prop::collection::vec(-3.0f64..3.0, 9),
                                         g in prop::collection::vec(-3.0f64..3.0, 9)) {
            let x = instance(seed, 9);
            let sf = discrete_slope(&x, &f);
            let sg = discrete_slope(&x, &g);
            let comb: Vec<f64> = f.iter().zip(&g).map(|(u, v)| a * u + b * v).collect();
            let prod: Vec<f64> = f.iter().zip(&g).map(|(u, v)| u * v).collect();
            let sc = discrete_slope(&x, &comb);
            let sp = discrete_slope(&x, &prod);
            for i in 0..9 {
                prop_assert!(sc[i] <= a.abs() * sf[i] + b.abs() * sg[i] + 1e-12);
                // the discrete Leibniz bound pairs each factor with its neighbor value
                let nb = |h: &[f64]| x.neighbors(i).iter().map(|&(y, _)| h[y].abs()).fold(h[i].abs(), f64::max);
                prop_assert!(sp[i] <= nb(&f) * sg[i] + nb(&g) * sf[i] + 1e-12);
            }
        }

        #[test]
        fn chain_rule_bound(seed in 0u64..1000, f in prop::collection::vec(-2.0f64..2.0, 8)) {
            // phi = tanh, |phi'| = 1 - tanh^2 is maximized where |z| is smallest
            let x = instance(seed, 8);
            let composed: Vec<f64> = f.iter().map(|v| v.tanh()).collect();
            let s = discrete_slope(&x, &f);
            let sc = discrete_slope(&x, &composed);
            for i in 0..8 {
                let (lo, hi) = x.neighbors(i).iter().fold((f[i], f[i]), |(lo, hi), &(y, _)| (lo.min(f[y]), hi.max(f[y])));
                let zmin = if lo <= 0.0 && hi >= 0.0 { 0.0 } else { lo.abs().min(hi.abs()) };
                let lphi = 1.0 - zmin.tanh().powi(2);
                prop_assert!(sc[i] <= lphi * s[i] + 1e-12);
            }
        }

        #[test]
        fn slope_is_local(seed in 0u64..1000, f in prop::collection::vec(-2.0f64..2.0, 8),
                          noise in prop::collection::vec(-2.0f64..2.0, 8), at in 0usize..8) {
            let x = instance(seed, 8);
            let mut h = noise.clone();
            h[at] = f[at];
            for &(y, _) in x.neighbors(at) {
                h[y] = f[y];
            }
            prop_assert_eq!(discrete_slope(&x, &f)[at], discrete_slope(&x, &h)[at]);
        }
    }
}
