//! Maximum-weight perfect matching (Hungarian algorithm, O(n^3)).
//!
//! Infeasible cells (`-inf` log-likelihood) are excluded from the search
//! rather than priced with a large sentinel, so finite costs keep full
//! precision. Among optimal matchings the lexicographically smallest forward
//! array is returned: once the duals are optimal, an assignment is optimal iff
//! it only uses tight cells, so the tie-break is a greedy search for the
//! smallest perfect matching in the tight subgraph.

use crate::error::{Error, Result};

/// Returns `forward` with `forward[u]` the column assigned to row `u`,
/// maximizing `sum_u weights[u][forward[u]]`. `weights` is row-major `n x n`.
pub fn max_weight_assignment(weights: &[f64], n: usize) -> Result<Vec<usize>> {
    assert_eq!(weights.len(), n * n);
    if n == 0 {
        return Ok(Vec::new());
    }

    // cost = row_max - weight >= 0; None marks an infeasible cell.
    let mut cost = vec![None; n * n];
    let mut scale = 0.0f64;
    for u in 0..n {
        let row = &weights[u * n..(u + 1) * n];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Infeasible(format!("row {u} has no feasible column")));
        }
        for (k, &w) in row.iter().enumerate() {
            if w.is_finite() {
                let c = max - w;
                scale = scale.max(c);
                cost[u * n + k] = Some(c);
            }
        }
    }
    let tol = 1e-9 * scale.max(1.0);

    // 1-based potentials over rows (u) and columns (v); p[j] is the row matched to column j.
    let inf = f64::INFINITY;
    let mut pu = vec![0.0; n + 1];
    let mut pv = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = usize::MAX;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                if let Some(c) = cost[(i0 - 1) * n + (j - 1)] {
                    let cur = c - pu[i0] - pv[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            if j1 == usize::MAX {
                return Err(Error::Infeasible(
                    "no permutation has finite total log-likelihood".into(),
                ));
            }
            for j in 0..=n {
                if used[j] {
                    pu[p[j]] += delta;
                    pv[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }

    let tight: Vec<Vec<bool>> = (0..n)
        .map(|u| {
            (0..n)
                .map(|k| {
                    cost[u * n + k].is_some_and(|c| (c - pu[u + 1] - pv[k + 1]).abs() <= tol)
                })
                .collect()
        })
        .collect();
    debug_assert!((0..n).all(|u| tight[u][row_to_col[u]]));
    Ok(lexicographic_tight_matching(&tight, row_to_col))
}

/// Smallest (lexicographic on rows) perfect matching in the `tight` graph,
/// starting from any perfect matching `row_to_col` in it.
fn lexicographic_tight_matching(tight: &[Vec<bool>], mut row_to_col: Vec<usize>) -> Vec<usize> {
    let n = row_to_col.len();
    let mut col_to_row = vec![0usize; n];
    for (u, &k) in row_to_col.iter().enumerate() {
        col_to_row[k] = u;
    }
    let mut fixed_col = vec![false; n];
    for u in 0..n {
        for j in 0..n {
            if fixed_col[j] || !tight[u][j] {
                continue;
            }
            if row_to_col[u] == j {
                break;
            }
            // Move u onto j; the row displaced from j must reach u's old
            // column through an alternating path over unfixed rows/columns.
            let target = row_to_col[u];
            let displaced = col_to_row[j];
            let mut visited = vec![false; n];
            visited[j] = true;
            let mut path = Vec::new();
            if alternating_path(
                tight,
                &row_to_col,
                &col_to_row,
                &fixed_col,
                displaced,
                target,
                &mut visited,
                &mut path,
            ) {
                // path holds (row, new_col) reassignments.
                for &(row, col) in &path {
                    row_to_col[row] = col;
                    col_to_row[col] = row;
                }
                row_to_col[u] = j;
                col_to_row[j] = u;
                break;
            }
        }
        fixed_col[row_to_col[u]] = true;
    }
    row_to_col
}

#[allow(clippy::too_many_arguments)]
fn alternating_path(
    tight: &[Vec<bool>],
    row_to_col: &[usize],
    col_to_row: &[usize],
    fixed_col: &[bool],
    row: usize,
    target: usize,
    visited: &mut [bool],
    path: &mut Vec<(usize, usize)>,
) -> bool {
    let n = row_to_col.len();
    for c in 0..n {
        if visited[c] || fixed_col[c] || !tight[row][c] {
            continue;
        }
        visited[c] = true;
        if c == target {
            path.push((row, c));
            return true;
        }
        let next = col_to_row[c];
        if alternating_path(tight, row_to_col, col_to_row, fixed_col, next, target, visited, path) {
            path.push((row, c));
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(w: &[f64], n: usize, f: &[usize]) -> f64 {
        f.iter().enumerate().map(|(u, &k)| w[u * n + k]).sum()
    }

    #[test]
    fn trivial_sizes() {
        assert_eq!(max_weight_assignment(&[], 0).unwrap(), Vec::<usize>::new());
        assert_eq!(max_weight_assignment(&[-3.0], 1).unwrap(), vec![0]);
    }

    #[test]
    fn picks_the_optimum() {
        let w = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        let f = max_weight_assignment(&w, 3).unwrap();
        assert_eq!(total(&w, 3, &f), 11.0);
    }

    #[test]
    fn ties_resolve_to_smallest_forward() {
        let w = vec![0.0; 16];
        assert_eq!(max_weight_assignment(&w, 4).unwrap(), vec![0, 1, 2, 3]);
        // Four matchings reach the optimum of 2; [1, 0, 2] is the smallest.
        let w = [0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let f = max_weight_assignment(&w, 3).unwrap();
        assert_eq!(total(&w, 3, &f), 2.0);
        assert_eq!(f, vec![1, 0, 2]);
    }

    #[test]
    fn infeasible_cells_are_avoided() {
        let ninf = f64::NEG_INFINITY;
        let w = [ninf, 0.0, 0.0, -5.0];
        assert_eq!(max_weight_assignment(&w, 2).unwrap(), vec![1, 0]);
        let w = [ninf, 0.0, ninf, 0.0];
        assert!(max_weight_assignment(&w, 2).is_err());
        let w = [ninf, ninf, 0.0, 0.0];
        assert!(max_weight_assignment(&w, 2).is_err());
    }
}
