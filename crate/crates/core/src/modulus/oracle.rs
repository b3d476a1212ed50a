//! Shortest paths under the edge cost `(g(u) + g(v)) / 2 * w(u, v)`, i.e. the
//! trapezoid line integral of `g` along each edge.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::space::FiniteMetricMeasureSpace;

/// All-pairs `g`-distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GDistances {
    dist: Vec<Vec<f64>>,
}

impl GDistances {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.dist[a][b]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.dist
    }
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn edge_cost(g: &[f64], u: usize, v: usize, w: f64) -> f64 {
    0.5 * (g[u] + g[v]) * w
}

fn dijkstra(space: &FiniteMetricMeasureSpace, g: &[f64], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; space.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    while let Some(Entry(d, x)) = heap.pop() {
        if d > dist[x] {
            continue;
        }
        for &(y, w) in space.neighbors(x) {
            let nd = d + edge_cost(g, x, y, w);
            if nd < dist[y] {
                dist[y] = nd;
                heap.push(Entry(nd, y));
            }
        }
    }
    dist
}

pub fn all_pairs_g_distances(space: &FiniteMetricMeasureSpace, g: &[f64]) -> GDistances {
    let dist = (0..space.len())
        .into_par_iter()
        .map(|s| dijkstra(space, g, s))
        .collect();
    GDistances { dist }
}

/// A `g`-shortest path from `a` to `b`; among shortest paths, the
/// lexicographically smallest vertex sequence (up to rounding in the costs).
pub fn g_shortest_path(
    space: &FiniteMetricMeasureSpace,
    g: &[f64],
    dist: &GDistances,
    a: usize,
    b: usize,
) -> Vec<usize> {
    let to_b = &dist.dist[b];
    let tol = 1e-12 * (1.0 + to_b[a]);
    let mut path = vec![a];
    let mut visited = vec![false; space.len()];
    visited[a] = true;
    let mut x = a;
    while x != b {
        let next = space.neighbors(x).iter().find(|&&(y, w)| {
            !visited[y] && (to_b[x] - edge_cost(g, x, y, w) - to_b[y]).abs() <= tol
        });
        match next {
            Some(&(y, _)) => {
                visited[y] = true;
                path.push(y);
                x = y;
            }
            None => return predecessor_path(space, g, a, b),
        }
    }
    path
}

fn predecessor_path(space: &FiniteMetricMeasureSpace, g: &[f64], a: usize, b: usize) -> Vec<usize> {
    let mut dist = vec![f64::INFINITY; space.len()];
    let mut pred = vec![usize::MAX; space.len()];
    let mut heap = BinaryHeap::new();
    dist[a] = 0.0;
    heap.push(Entry(0.0, a));
    while let Some(Entry(d, x)) = heap.pop() {
        if d > dist[x] {
            continue;
        }
        for &(y, w) in space.neighbors(x) {
            let nd = d + edge_cost(g, x, y, w);
            if nd < dist[y] {
                dist[y] = nd;
                pred[y] = x;
                heap.push(Entry(nd, y));
            }
        }
    }
    let mut path = vec![b];
    while *path.last().unwrap() != a {
        path.push(pred[*path.last().unwrap()]);
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{grid_graph, path_graph};

    #[test]
    fn path_graph_distances_are_integrals() {
        let x = path_graph(5);
        let g = [1.0; 5];
        let d = all_pairs_g_distances(&x, &g);
        assert!((d.get(0, 4) - 1.0).abs() < 1e-15);
        assert_eq!(g_shortest_path(&x, &g, &d, 0, 4), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn ties_pick_smallest_sequence() {
        // 3x3 grid: many shortest corner-to-corner paths
        let x = grid_graph(3);
        let g = [1.0; 9];
        let d = all_pairs_g_distances(&x, &g);
        assert_eq!(g_shortest_path(&x, &g, &d, 0, 8), vec![0, 1, 2, 5, 8]);
    }

    #[test]
    fn zero_gradient_region_is_free() {
        let x = path_graph(4);
        let g = [0.0, 0.0, 0.0, 2.0];
        let d = all_pairs_g_distances(&x, &g);
        assert_eq!(d.get(0, 2), 0.0);
        assert!((d.get(0, 3) - 1.0 / 3.0).abs() < 1e-15);
    }
}
