//! Transportation simplex with Bland's rule.
//!
//! Starts from the northwest-corner basis and pivots on the spanning tree of
//! basic cells. Entering cell: smallest row-major index with negative reduced
//! cost. Leaving cell: smallest index among the tied minimizers of the ratio
//! test. Degenerate (zero-amount) basic cells are kept so the basis always has
//! `rows + cols - 1` cells.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct TransportSolution {
    /// `(row, col, amount)` for every basic cell.
    pub basis: Vec<(usize, usize, f64)>,
    pub v: Vec<f64>,
    pub cost: f64,
    pub pivots: usize,
}

const MAX_PIVOTS: usize = 1_000_000;

pub(crate) fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
) -> Result<TransportSolution> {
    let (r, c) = (supply.len(), demand.len());
    if r == 0 || c == 0 {
        return Err(Error::InvalidInput(
            "transport problem needs nonempty supports".into(),
        ));
    }
    let cmax = cost.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
    let eps = 1e-12 * (1.0 + cmax);

    let mut basis = northwest_corner(supply, demand);
    let mut pivots = 0;
    loop {
        let (u, v) = potentials(r, c, &basis, cost);
        let entering = (0..r * c).map(|k| (k / c, k % c)).find(|&(i, j)| {
            !basis.iter().any(|&(bi, bj, _)| bi == i && bj == j) && cost[i][j] - u[i] - v[j] < -eps
        });
        let Some((ei, ej)) = entering else {
            let total = basis.iter().map(|&(i, j, x)| x * cost[i][j]).sum();
            return Ok(TransportSolution {
                basis,
                v,
                cost: total,
                pivots,
            });
        };
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(Error::NoConvergence(
                "transportation simplex pivot limit".into(),
            ));
        }

        let cycle = tree_path(r, c, &basis, ei, ej);
        // cells on the path alternate -, +, -, ... starting next to the entering cell
        let mut leave: Option<usize> = None;
        for (pos, &cell) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                let better = match leave {
                    None => true,
                    Some(l) => {
                        let (a, b) = (basis[cell].2, basis[l].2);
                        a < b || (a == b && index(&basis[cell], c) < index(&basis[l], c))
                    }
                };
                if better {
                    leave = Some(cell);
                }
            }
        }
        let leave = leave.expect("a cycle always has a decreasing cell");
        let theta = basis[leave].2;
        for (pos, &cell) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                basis[cell].2 -= theta;
            } else {
                basis[cell].2 += theta;
            }
        }
        basis[leave] = (ei, ej, theta);
        for cell in basis.iter_mut() {
            if cell.2 < 0.0 {
                cell.2 = 0.0;
            }
        }
    }
}

fn index(cell: &(usize, usize, f64), cols: usize) -> usize {
    cell.0 * cols + cell.1
}

fn northwest_corner(supply: &[f64], demand: &[f64]) -> Vec<(usize, usize, f64)> {
    let (r, c) = (supply.len(), demand.len());
    let mut a = supply.to_vec();
    let mut b = demand.to_vec();
    let mut basis = Vec::with_capacity(r + c - 1);
    let (mut i, mut j) = (0, 0);
    loop {
        let x = a[i].min(b[j]).max(0.0);
        basis.push((i, j, x));
        a[i] -= x;
        b[j] -= x;
        if i == r - 1 && j == c - 1 {
            break;
        }
        if i == r - 1 {
            j += 1;
        } else if j == c - 1 || a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    basis
}

/// `u_i + v_j = c_ij` on basic cells, with `u_0 = 0`.
fn potentials(
    r: usize,
    c: usize,
    basis: &[(usize, usize, f64)],
    cost: &[Vec<f64>],
) -> (Vec<f64>, Vec<f64>) {
    let adj = adjacency(r, c, basis);
    let mut u = vec![f64::NAN; r];
    let mut v = vec![f64::NAN; c];
    u[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        for &cell in &adj[node] {
            let (i, j, _) = basis[cell];
            if node < r {
                if v[j].is_nan() {
                    v[j] = cost[i][j] - u[i];
                    queue.push_back(r + j);
                }
            } else if u[i].is_nan() {
                u[i] = cost[i][j] - v[j];
                queue.push_back(i);
            }
        }
    }
    (u, v)
}

fn adjacency(r: usize, c: usize, basis: &[(usize, usize, f64)]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); r + c];
    for (k, &(i, j, _)) in basis.iter().enumerate() {
        adj[i].push(k);
        adj[r + j].push(k);
    }
    adj
}

/// Basic cells on the tree path from row `ei` to column `ej`, in order from the row end.
fn tree_path(
    r: usize,
    c: usize,
    basis: &[(usize, usize, f64)],
    ei: usize,
    ej: usize,
) -> Vec<usize> {
    let adj = adjacency(r, c, basis);
    let mut via = vec![usize::MAX; r + c];
    let mut seen = vec![false; r + c];
    seen[ei] = true;
    let mut queue = VecDeque::from([ei]);
    let target = r + ej;
    while let Some(node) = queue.pop_front() {
        if node == target {
            break;
        }
        for &cell in &adj[node] {
            let (i, j, _) = basis[cell];
            let other = if node < r { r + j } else { i };
            if !seen[other] {
                seen[other] = true;
                via[other] = cell;
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = target;
    while node != ei {
        let cell = via[node];
        path.push(cell);
        let (i, j, _) = basis[cell];
        node = if node < r { r + j } else { i };
    }
    path.reverse();
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let cost = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let sol = solve(&[0.5, 0.5], &[0.5, 0.5], &cost).unwrap();
        assert_eq!(sol.cost, 0.0);
        let sol = solve(&[1.0, 0.0], &[0.0, 1.0], &cost).unwrap();
        assert!((sol.cost - 1.0).abs() < 1e-15);
    }

    #[test]
    fn against_enumeration_of_permutations() {
        // uniform 3x3 assignment: optimum is a permutation
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let w = [1.0 / 3.0; 3];
        let sol = solve(&w, &w, &cost).unwrap();
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let best = perms
            .iter()
            .map(|p| (0..3).map(|i| cost[i][p[i]]).sum::<f64>() / 3.0)
            .fold(f64::INFINITY, f64::min);
        assert!((sol.cost - best).abs() < 1e-12);
        assert_eq!(sol.basis.len(), 5);
    }
}
