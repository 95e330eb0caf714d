//! Minimum-cost rectangular assignment (shortest augmenting paths with
//! dual potentials, O(n^2 m)).

use crate::nnet::Tensor;

/// Cost used for pairs that must never be matched. Assignments that land on
/// a forbidden pair are dropped from the result.
pub const FORBIDDEN: f64 = 1e9;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unassigned_rows: Vec<usize>,
    pub unassigned_cols: Vec<usize>,
    pub total_cost: f64,
}

/// Solves the assignment problem for a `rows x cols` cost matrix; every row
/// or every column (whichever is fewer) gets matched. Pairs with cost
/// `>= FORBIDDEN` are reported as unassigned instead.
pub fn assign(cost: &Tensor) -> Assignment {
    let (n, m) = cost.shape();
    let raw = if n <= m {
        solve(n, m, |i, j| cost.get(i, j))
    } else {
        solve(m, n, |i, j| cost.get(j, i))
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect()
    };
    let mut pairs: Vec<(usize, usize)> = raw.into_iter().filter(|&(r, c)| cost.get(r, c) < FORBIDDEN).collect();
    pairs.sort_unstable();
    let mut row_used = vec![false; n];
    let mut col_used = vec![false; m];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        total_cost: pairs.iter().map(|&(r, c)| cost.get(r, c)).sum(),
        unassigned_rows: (0..n).filter(|&r| !row_used[r]).collect(),
        unassigned_cols: (0..m).filter(|&c| !col_used[c]).collect(),
        pairs,
    }
}

/// Requires `n <= m`. Returns one `(row, col)` per row.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays; column 0 is the virtual start.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
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
    (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect()
}
