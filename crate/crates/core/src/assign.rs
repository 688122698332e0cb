//! Linear assignment (Kuhn-Munkres) with distance gating.

use crate::types::dist3;

/// Minimum-cost assignment on a dense `rows x cols` cost matrix.
///
/// Every row is assigned when `rows <= cols`; otherwise every column is. The
/// returned vector holds, per row, its column.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    if rows == 0 {
        return Vec::new();
    }
    let cols = cost[0].len();
    if cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve(rows, cols, |i, j| cost[i][j])
    } else {
        let by_col = solve(cols, rows, |i, j| cost[j][i]);
        let mut out = vec![None; rows];
        for (c, r) in by_col.iter().enumerate() {
            if let Some(r) = r {
                out[*r] = Some(c);
            }
        }
        out
    }
}

/// Shortest-augmenting-path Hungarian method with row/column potentials,
/// `O(n^2 m)` for `n <= m`.
fn solve(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    debug_assert!(n <= m);
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    // p[j]: row (1-based) currently assigned to column j; 0 = free.
    let mut p = vec![0usize; m + 1];
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
    let mut out = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = Some(j - 1);
        }
    }
    out
}

/// Result of a gated assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    pub fn total_cost(&self, cost: &[Vec<f64>]) -> f64 {
        self.pairs.iter().map(|&(r, c)| cost[r][c]).sum()
    }

    pub fn col_of(&self, row: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == row).map(|p| p.1)
    }
}

/// One-to-one assignment that never pairs entries with `cost >= gate`.
///
/// Among all matchings that use only admissible pairs, the result has the
/// largest number of pairs and, among those, the smallest total cost. The
/// problem is split into connected components of the admissibility graph and
/// each component is solved independently.
/// `cols` is given explicitly so that a matrix without rows still reports
/// every column as unmatched.
pub fn gated_assignment(cost: &[Vec<f64>], cols: usize, gate: f64) -> Assignment {
    let rows = cost.len();
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    let admissible = |c: f64| c.is_finite() && c < gate;

    // Union-find over rows (0..rows) and columns (rows..rows+cols).
    let mut parent: Vec<usize> = (0..rows + cols).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (r, row) in cost.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if admissible(v) {
                let a = find(&mut parent, r);
                let b = find(&mut parent, rows + c);
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }

    let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> =
        Default::default();
    for r in 0..rows {
        let root = find(&mut parent, r);
        groups.entry(root).or_default().0.push(r);
    }
    for c in 0..cols {
        let root = find(&mut parent, rows + c);
        groups.entry(root).or_default().1.push(c);
    }

    let mut pairs = Vec::new();
    for (g_rows, g_cols) in groups.values() {
        if g_rows.is_empty() || g_cols.is_empty() {
            continue;
        }
        if g_rows.len() == 1 && g_cols.len() == 1 {
            let (r, c) = (g_rows[0], g_cols[0]);
            if admissible(cost[r][c]) {
                pairs.push((r, c));
            }
            continue;
        }
        let mut max_real: f64 = 0.0;
        for &r in g_rows {
            for &c in g_cols {
                if admissible(cost[r][c]) {
                    max_real = max_real.max(cost[r][c].abs());
                }
            }
        }
        // Any extra admissible pair must outweigh every possible change in
        // real cost, so the sentinel exceeds the largest achievable total.
        let k = g_rows.len().min(g_cols.len()) as f64;
        let big = (max_real + 1.0) * (2.0 * k + 1.0);
        let sub: Vec<Vec<f64>> = g_rows
            .iter()
            .map(|&r| {
                g_cols
                    .iter()
                    .map(|&c| if admissible(cost[r][c]) { cost[r][c] } else { big })
                    .collect()
            })
            .collect();
        for (i, col) in hungarian(&sub).into_iter().enumerate() {
            if let Some(j) = col {
                let (r, c) = (g_rows[i], g_cols[j]);
                if admissible(cost[r][c]) {
                    pairs.push((r, c));
                }
            }
        }
    }
    pairs.sort_unstable();

    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &pairs {
        row_used[r] = true;
        col_used[c] = true;
    }
    Assignment {
        unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
        unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        pairs,
    }
}

/// Pairwise Euclidean distances between two position sets.
pub fn distance_matrix(a: &[[f64; 3]], b: &[[f64; 3]]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|pa| b.iter().map(|pb| dist3(*pa, *pb)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_example() {
        let cost = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let a = gated_assignment(&cost, cost[0].len(), 15.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
        assert_eq!(a.total_cost(&cost), 4.0);
    }

    #[test]
    fn everything_gated() {
        let cost = vec![vec![16.0, 20.0], vec![30.0, 15.0]];
        let a = gated_assignment(&cost, cost[0].len(), 15.0);
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_rows, vec![0, 1]);
        assert_eq!(a.unmatched_cols, vec![0, 1]);
    }

    #[test]
    fn rectangular_both_ways() {
        let cost = vec![vec![5.0, 1.0, 3.0]];
        assert_eq!(hungarian(&cost), vec![Some(1)]);
        let cost_t = vec![vec![5.0], vec![1.0], vec![3.0]];
        assert_eq!(hungarian(&cost_t), vec![None, Some(0), None]);
    }

    #[test]
    fn gate_prefers_more_pairs() {
        // Matching (0,0) alone costs 1; (0,1)+(1,0) costs 18 but pairs both.
        let cost = vec![vec![1.0, 9.0], vec![9.0, 20.0]];
        let a = gated_assignment(&cost, cost[0].len(), 15.0);
        assert_eq!(a.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn empty_inputs() {
        assert!(gated_assignment(&[], 0, 1.0).pairs.is_empty());
        assert_eq!(gated_assignment(&[], 3, 1.0).unmatched_cols, vec![0, 1, 2]);
        let a = gated_assignment(&[vec![], vec![]], 0, 1.0);
        assert_eq!(a.unmatched_rows, vec![0, 1]);
    }
}
