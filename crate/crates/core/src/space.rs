//! Finite metric measure spaces induced by weighted graphs.
//!
//! A space is built from a [`GraphSpec`]: point masses on the nodes and
//! positive lengths on the edges. The metric is always the shortest-path
//! metric of the graph, so every pair of points is joined by an edge-path
//! whose length equals their distance. Distances are computed once and the
//! space is immutable afterwards.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: String,
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub u: String,
    pub v: String,
    pub w: f64,
}

/// Ingestion format for a finite metric measure space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
}

/// Serialized form of a space: the graph plus its distance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDocument {
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    pub dist: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricMeasureSpace {
    ids: Vec<String>,
    measure: Vec<f64>,
    dist: Vec<Vec<f64>>,
    edges: Vec<Edge>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl FiniteMetricMeasureSpace {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub fn measure(&self) -> &[f64] {
        &self.measure
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.dist[i][j]
    }

    pub fn dist_matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of `x` with the connecting edge length, sorted by index.
    pub fn neighbors(&self, x: usize) -> &[(usize, f64)] {
        &self.adjacency[x]
    }

    pub fn edge_length(&self, u: usize, v: usize) -> Option<f64> {
        self.adjacency[u]
            .iter()
            .find(|&&(y, _)| y == v)
            .map(|&(_, w)| w)
    }

    pub fn total_measure(&self) -> f64 {
        self.measure.iter().sum()
    }

    pub fn min_measure(&self) -> f64 {
        self.measure.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn diameter(&self) -> f64 {
        self.dist
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Measure-weighted sum of a function over the points.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.measure.iter().zip(values).map(|(m, v)| m * v).sum()
    }

    pub fn to_graph_spec(&self) -> GraphSpec {
        GraphSpec {
            nodes: self
                .ids
                .iter()
                .zip(&self.measure)
                .map(|(id, &m)| NodeSpec { id: id.clone(), m })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    u: self.ids[e.u].clone(),
                    v: self.ids[e.v].clone(),
                    w: e.w,
                })
                .collect(),
        }
    }

    pub fn to_document(&self) -> SpaceDocument {
        let GraphSpec { nodes, edges } = self.to_graph_spec();
        SpaceDocument {
            nodes,
            edges,
            dist: self.dist.clone(),
        }
    }

    pub fn validate(&self) -> MetricReport {
        let mut report = validate_metric_matrix(&self.dist);
        for e in &self.edges {
            let residual = self.dist[e.u][e.v] - e.w;
            if residual > METRIC_TOL * (1.0 + e.w) {
                report.push(MetricViolation::EdgeBound {
                    u: e.u,
                    v: e.v,
                    residual,
                });
            }
        }
        if !(self.total_measure() > 0.0 && self.total_measure().is_finite()) {
            report.push(MetricViolation::Measure {
                residual: self.total_measure(),
            });
        }
        report
    }
}

/// Build the shortest-path metric measure space of a weighted graph.
pub fn build_from_graph(spec: &GraphSpec) -> Result<FiniteMetricMeasureSpace> {
    let n = spec.nodes.len();
    if n == 0 {
        return Err(Error::InvalidGraph("no nodes".into()));
    }
    let mut index = HashMap::with_capacity(n);
    for (i, node) in spec.nodes.iter().enumerate() {
        if index.insert(node.id.as_str(), i).is_some() {
            return Err(Error::InvalidGraph(format!(
                "duplicate node id {:?}",
                node.id
            )));
        }
        if !(node.m > 0.0 && node.m.is_finite()) {
            return Err(Error::InvalidGraph(format!(
                "node {:?} has nonpositive measure {}",
                node.id, node.m
            )));
        }
    }

    let mut seen = BTreeSet::new();
    let mut edges = Vec::with_capacity(spec.edges.len());
    for e in &spec.edges {
        let u = *index
            .get(e.u.as_str())
            .ok_or_else(|| Error::InvalidGraph(format!("unknown node {:?}", e.u)))?;
        let v = *index
            .get(e.v.as_str())
            .ok_or_else(|| Error::InvalidGraph(format!("unknown node {:?}", e.v)))?;
        if u == v {
            return Err(Error::InvalidGraph(format!("self-loop at {:?}", e.u)));
        }
        if !(e.w > 0.0 && e.w.is_finite()) {
            return Err(Error::InvalidGraph(format!(
                "edge ({:?}, {:?}) has nonpositive length {}",
                e.u, e.v, e.w
            )));
        }
        let key = (u.min(v), u.max(v));
        if !seen.insert(key) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({:?}, {:?})",
                e.u, e.v
            )));
        }
        edges.push(Edge {
            u: key.0,
            v: key.1,
            w: e.w,
        });
    }

    let mut adjacency = vec![Vec::new(); n];
    for e in &edges {
        adjacency[e.u].push((e.v, e.w));
        adjacency[e.v].push((e.u, e.w));
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(y, _)| y);
    }

    // Floyd-Warshall; n is small.
    let mut dist = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in &edges {
        dist[e.u][e.v] = e.w;
        dist[e.v][e.u] = e.w;
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i][k];
            if !dik.is_finite() {
                continue;
            }
            for j in 0..n {
                let cand = dik + dist[k][j];
                if cand < dist[i][j] {
                    dist[i][j] = cand;
                }
            }
        }
    }
    if dist.iter().flatten().any(|d| !d.is_finite()) {
        return Err(Error::Disconnected);
    }
    // Symmetrize exactly; both triangles hold the same minima up to summation order.
    for i in 0..n {
        for j in (i + 1)..n {
            let d = dist[i][j].min(dist[j][i]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    Ok(FiniteMetricMeasureSpace {
        ids: spec.nodes.iter().map(|nd| nd.id.clone()).collect(),
        measure: spec.nodes.iter().map(|nd| nd.m).collect(),
        dist,
        edges,
        adjacency,
    })
}

/// Re-ingest a serialized space. The stored `dist` block is ignored and
/// recomputed from the edges.
pub fn build_from_document(doc: &SpaceDocument) -> Result<FiniteMetricMeasureSpace> {
    build_from_graph(&GraphSpec {
        nodes: doc.nodes.clone(),
        edges: doc.edges.clone(),
    })
}

/// Parse either a bare graph spec or a serialized space document.
pub fn space_from_json(text: &str) -> Result<FiniteMetricMeasureSpace> {
    let spec: GraphSpec = serde_json::from_str(text)?;
    build_from_graph(&spec)
}

const METRIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricViolation {
    Diagonal {
        i: usize,
        residual: f64,
    },
    Symmetry {
        i: usize,
        j: usize,
        residual: f64,
    },
    Positivity {
        i: usize,
        j: usize,
        residual: f64,
    },
    Triangle {
        i: usize,
        j: usize,
        k: usize,
        residual: f64,
    },
    EdgeBound {
        u: usize,
        v: usize,
        residual: f64,
    },
    Measure {
        residual: f64,
    },
}

impl MetricViolation {
    pub fn residual(&self) -> f64 {
        match *self {
            MetricViolation::Diagonal { residual, .. }
            | MetricViolation::Symmetry { residual, .. }
            | MetricViolation::Positivity { residual, .. }
            | MetricViolation::Triangle { residual, .. }
            | MetricViolation::EdgeBound { residual, .. }
            | MetricViolation::Measure { residual } => residual,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricReport {
    pub violations: Vec<MetricViolation>,
    pub worst_residual: f64,
}

impl MetricReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, v: MetricViolation) {
        self.worst_residual = self.worst_residual.max(v.residual().abs());
        self.violations.push(v);
    }
}

/// Check the metric axioms on a raw square matrix.
pub fn validate_metric_matrix(dist: &[Vec<f64>]) -> MetricReport {
    let n = dist.len();
    let mut report = MetricReport::default();
    let scale = dist
        .iter()
        .flatten()
        .copied()
        .filter(|d| d.is_finite())
        .fold(1.0, |a: f64, d| a.max(d.abs()));
    let tol = METRIC_TOL * scale;
    for i in 0..n {
        if dist[i].len() != n {
            report.push(MetricViolation::Symmetry {
                i,
                j: dist[i].len(),
                residual: f64::INFINITY,
            });
            return report;
        }
    }
    for i in 0..n {
        if dist[i][i].abs() > tol {
            report.push(MetricViolation::Diagonal {
                i,
                residual: dist[i][i],
            });
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            if j > i {
                let asym = (dist[i][j] - dist[j][i]).abs();
                if !(asym <= tol) {
                    report.push(MetricViolation::Symmetry {
                        i,
                        j,
                        residual: asym,
                    });
                }
            }
            if !(dist[i][j] > 0.0) {
                report.push(MetricViolation::Positivity {
                    i,
                    j,
                    residual: dist[i][j],
                });
            }
        }
    }
    for i in 0..n {
        for k in 0..n {
            for j in 0..n {
                if i == j || j == k || i == k {
                    continue;
                }
                let residual = dist[i][k] - (dist[i][j] + dist[j][k]);
                if residual > tol {
                    report.push(MetricViolation::Triangle { i, j, k, residual });
                }
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSpaceSpec {
    pub n: usize,
    pub edge_density: f64,
    pub weight_range: (f64, f64),
    pub measure_range: (f64, f64),
}

impl Default for RandomSpaceSpec {
    fn default() -> Self {
        Self {
            n: 8,
            edge_density: 0.4,
            weight_range: (0.5, 1.5),
            measure_range: (0.5, 1.5),
        }
    }
}

const RANDOM_SPACE_RETRIES: usize = 200;

/// Random connected Erdos-Renyi space, deterministic in `seed`.
pub fn random_space(seed: u64, spec: &RandomSpaceSpec) -> Result<FiniteMetricMeasureSpace> {
    if spec.n < 2 {
        return Err(Error::InvalidInput("random space needs n >= 2".into()));
    }
    let (wlo, whi) = spec.weight_range;
    let (mlo, mhi) = spec.measure_range;
    if !(wlo > 0.0 && whi >= wlo && mlo > 0.0 && mhi >= mlo) {
        return Err(Error::InvalidInput(
            "ranges must be positive and ordered".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RANDOM_SPACE_RETRIES {
        let nodes: Vec<NodeSpec> = (0..spec.n)
            .map(|i| NodeSpec {
                id: format!("v{i}"),
                m: uniform(&mut rng, mlo, mhi),
            })
            .collect();
        let mut edges = Vec::new();
        for i in 0..spec.n {
            for j in (i + 1)..spec.n {
                if rng.gen::<f64>() < spec.edge_density {
                    edges.push(EdgeSpec {
                        u: format!("v{i}"),
                        v: format!("v{j}"),
                        w: uniform(&mut rng, wlo, whi),
                    });
                }
            }
        }
        match build_from_graph(&GraphSpec { nodes, edges }) {
            Ok(space) => return Ok(space),
            Err(Error::Disconnected) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::RetriesExhausted(RANDOM_SPACE_RETRIES))
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Two points `a`, `b` at distance 1 with unit masses.
pub fn two_point() -> FiniteMetricMeasureSpace {
    two_point_with_measure(1.0, 1.0)
}

pub fn two_point_with_measure(ma: f64, mb: f64) -> FiniteMetricMeasureSpace {
    build_from_graph(&GraphSpec {
        nodes: vec![
            NodeSpec {
                id: "a".into(),
                m: ma,
            },
            NodeSpec {
                id: "b".into(),
                m: mb,
            },
        ],
        edges: vec![EdgeSpec {
            u: "a".into(),
            v: "b".into(),
            w: 1.0,
        }],
    })
    .expect("two-point space is valid")
}

/// Path graph on `n` nodes spanning [0, 1] with uniform masses `1/n`.
pub fn path_graph(n: usize) -> FiniteMetricMeasureSpace {
    assert!(n >= 2, "path graph needs at least two nodes");
    let h = 1.0 / (n - 1) as f64;
    let nodes = (0..n)
        .map(|i| NodeSpec {
            id: i.to_string(),
            m: 1.0 / n as f64,
        })
        .collect();
    let edges = (0..n - 1)
        .map(|i| EdgeSpec {
            u: i.to_string(),
            v: (i + 1).to_string(),
            w: h,
        })
        .collect();
    build_from_graph(&GraphSpec { nodes, edges }).expect("path graph is valid")
}

/// `k x k` grid on [0, 1]^2 with uniform masses `1/k^2`. Node `(r, c)` has index `r * k + c`.
pub fn grid_graph(k: usize) -> FiniteMetricMeasureSpace {
    assert!(k >= 2, "grid needs at least two nodes per side");
    let h = 1.0 / (k - 1) as f64;
    let id = |r: usize, c: usize| format!("{r}_{c}");
    let mut nodes = Vec::with_capacity(k * k);
    let mut edges = Vec::new();
    for r in 0..k {
        for c in 0..k {
            nodes.push(NodeSpec {
                id: id(r, c),
                m: 1.0 / (k * k) as f64,
            });
            if c + 1 < k {
                edges.push(EdgeSpec {
                    u: id(r, c),
                    v: id(r, c + 1),
                    w: h,
                });
            }
            if r + 1 < k {
                edges.push(EdgeSpec {
                    u: id(r, c),
                    v: id(r + 1, c),
                    w: h,
                });
            }
        }
    }
    build_from_graph(&GraphSpec { nodes, edges }).expect("grid graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> GraphSpec {
        let node = |id: &str| NodeSpec {
            id: id.into(),
            m: 1.0,
        };
        let edge = |u: &str, v: &str, w| EdgeSpec {
            u: u.into(),
            v: v.into(),
            w,
        };
        GraphSpec {
            nodes: vec![node("a"), node("b"), node("c")],
            edges: vec![
                edge("a", "b", 1.0),
                edge("b", "c", 1.0),
                edge("a", "c", 3.0),
            ],
        }
    }

    #[test]
    fn two_point_distance() {
        let x = two_point();
        assert_eq!(x.len(), 2);
        assert_eq!(x.dist(0, 1), 1.0);
        assert!(x.validate().is_valid());
    }

    #[test]
    fn path_graph_is_line_metric() {
        let x = path_graph(5);
        for i in 0..5 {
            for j in 0..5 {
                let expected = (i as f64 - j as f64).abs() / 4.0;
                assert!((x.dist(i, j) - expected).abs() < 1e-15);
            }
        }
        assert!((x.total_measure() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn triangle_shortcut() {
        let x = build_from_graph(&triangle()).unwrap();
        assert_eq!(x.dist(0, 2), 2.0);
        // the long edge is not on a shortest path
        assert!(x.dist(0, 2) < x.edge_length(0, 2).unwrap());
        assert!(x.validate().is_valid());
    }

    #[test]
    fn disconnected_graph_rejected() {
        let mut spec = triangle();
        spec.nodes.push(NodeSpec {
            id: "d".into(),
            m: 1.0,
        });
        let err = build_from_graph(&spec).unwrap_err();
        assert_eq!(
            err.to_string(),
            "not a metric space candidate: infinite distances"
        );
    }

    #[test]
    fn bad_weights_rejected() {
        let mut spec = triangle();
        spec.edges[0].w = 0.0;
        assert!(matches!(
            build_from_graph(&spec),
            Err(Error::InvalidGraph(_))
        ));
        let mut spec = triangle();
        spec.nodes[1].m = -1.0;
        assert!(matches!(
            build_from_graph(&spec),
            Err(Error::InvalidGraph(_))
        ));
        let mut spec = triangle();
        spec.edges.push(EdgeSpec {
            u: "a".into(),
            v: "a".into(),
            w: 1.0,
        });
        assert!(matches!(
            build_from_graph(&spec),
            Err(Error::InvalidGraph(_))
        ));
        let mut spec = triangle();
        spec.nodes.push(NodeSpec {
            id: "a".into(),
            m: 1.0,
        });
        assert!(matches!(
            build_from_graph(&spec),
            Err(Error::InvalidGraph(_))
        ));
    }

    #[test]
    fn triangle_violation_reported() {
        let dist = vec![
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
            vec![3.0, 1.0, 0.0],
        ];
        let report = validate_metric_matrix(&dist);
        assert!(!report.is_valid());
        assert!(report.violations.iter().any(|v| matches!(
            v,
            MetricViolation::Triangle { i: 0, j: 1, k: 2, residual } if (*residual - 1.0).abs() < 1e-15
        )));
        assert!((report.worst_residual - 1.0).abs() < 1e-15);
    }

    #[test]
    fn asymmetry_reported() {
        let dist = vec![vec![0.0, 1.0], vec![2.0, 0.0]];
        let report = validate_metric_matrix(&dist);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, MetricViolation::Symmetry { .. })));
    }

    #[test]
    fn random_space_is_deterministic() {
        let spec = RandomSpaceSpec {
            n: 2,
            ..Default::default()
        };
        let a = random_space(0, &spec).unwrap();
        let b = random_space(0, &spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);

        let spec = RandomSpaceSpec {
            n: 12,
            edge_density: 0.4,
            ..Default::default()
        };
        let x = random_space(1, &spec).unwrap();
        assert_eq!(x.len(), 12);
        assert!(x.validate().is_valid());
    }

    #[test]
    fn document_roundtrip_is_idempotent() {
        let x = random_space(7, &RandomSpaceSpec::default()).unwrap();
        let text = serde_json::to_string(&x.to_document()).unwrap();
        let doc: SpaceDocument = serde_json::from_str(&text).unwrap();
        let y = build_from_document(&doc).unwrap();
        assert_eq!(x, y);
        // a document also parses as a plain graph spec
        assert_eq!(space_from_json(&text).unwrap(), x);
    }

    #[test]
    fn grid_has_expected_shape() {
        let x = grid_graph(3);
        assert_eq!(x.len(), 9);
        assert_eq!(x.edges().len(), 12);
        assert!((x.dist(0, 8) - 2.0).abs() < 1e-15);
    }
}
