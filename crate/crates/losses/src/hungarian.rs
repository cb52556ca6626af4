//! Minimum-cost bipartite assignment (Kuhn–Munkres with potentials) on
//! rectangular matrices. Deterministic: augmenting rows are processed in
//! order and ties in reduced cost resolve toward the lowest column index.

use crate::error::{LossError, Result};

/// Injective query/ground-truth assignment with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(query index, gt index)` pairs, sorted by query index;
    /// `pairs.len() == min(num_query, n_gt)`.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Solve the assignment problem on a `[num_query x n_gt]` cost matrix.
pub fn hungarian_match(cost: &[Vec<f64>]) -> Result<MatchResult> {
    let nq = cost.len();
    let ngt = cost.first().map_or(0, Vec::len);
    for (i, row) in cost.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if !c.is_finite() {
                return Err(LossError::NonFiniteCost { row: i, col: j });
            }
        }
    }
    if nq == 0 || ngt == 0 {
        return Ok(MatchResult {
            pairs: vec![],
            total_cost: 0.0,
        });
    }

    // assign the smaller side into the larger
    let transposed = nq < ngt;
    let (n, m) = if transposed { (nq, ngt) } else { (ngt, nq) };
    let at = |i: usize, j: usize| -> f64 {
        if transposed {
            cost[i][j]
        } else {
            cost[j][i]
        }
    };

    // shortest augmenting paths with potentials (1-indexed)
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1]; // row matched to column j (0 = free)
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
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

    let mut pairs = Vec::with_capacity(n);
    let mut total = 0.0;
    for j in 1..=m {
        if p[j] != 0 {
            let (row, col) = (p[j] - 1, j - 1);
            let (q, g) = if transposed { (row, col) } else { (col, row) };
            total += cost[q][g];
            pairs.push((q, g));
        }
    }
    pairs.sort_unstable();
    Ok(MatchResult {
        pairs,
        total_cost: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_hand_case() {
        let cost = vec![vec![1.0, 2.0], vec![3.0, 1.0]];
        let m = hungarian_match(&cost).unwrap();
        assert_eq!(m.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(m.total_cost, 2.0);
    }

    #[test]
    fn one_by_one() {
        let m = hungarian_match(&[vec![7.5]]).unwrap();
        assert_eq!(m.pairs, vec![(0, 0)]);
        assert_eq!(m.total_cost, 7.5);
    }

    #[test]
    fn rectangular_wide_and_tall() {
        // more queries than gts
        let m = hungarian_match(&[vec![5.0], vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(m.pairs, vec![(1, 0)]);
        // more gts than queries
        let m = hungarian_match(&[vec![5.0, 1.0, 3.0]]).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
    }

    #[test]
    fn nan_cost_is_rejected() {
        let err = hungarian_match(&[vec![1.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, LossError::NonFiniteCost { row: 0, col: 1 }));
    }

    #[test]
    fn empty_gt_matches_nothing() {
        let m = hungarian_match(&[vec![], vec![]]).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.total_cost, 0.0);
    }
}
