//! Rectangular linear assignment with infeasible entries.
//!
//! Solved with the shortest-augmenting-path Hungarian method on a square
//! padding of the matrix. Infeasible cells and padding share one penalty
//! larger than the sum of all feasible costs, so the solver first maximises
//! the number of feasible matches and then minimises their total cost.

/// Returns `(row, col)` pairs sorted by row. `costs[r][c] == None` marks a
/// forbidden pairing; all rows must have the same length.
pub fn solve(costs: &[Vec<Option<f64>>]) -> Vec<(usize, usize)> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    let feasible_sum: f64 = costs
        .iter()
        .flatten()
        .flatten()
        .filter(|c| c.is_finite())
        .map(|c| c.abs())
        .sum();
    let penalty = 1.0 + 2.0 * feasible_sum;
    let n = rows.max(cols);
    let cost = |r: usize, c: usize| -> f64 {
        if r < rows && c < cols {
            match costs[r][c] {
                Some(v) if v.is_finite() => v,
                _ => penalty,
            }
        } else {
            penalty
        }
    };

    // Potentials u (rows) and v (columns), 1-based with a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for r in 1..=n {
        owner[0] = r;
        let mut col0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0usize;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let cur = cost(r0 - 1, c - 1) - u[r0] - v[c];
                if cur < minv[c] {
                    minv[c] = cur;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter_map(|c| {
            let r = owner[c];
            (r >= 1 && r - 1 < rows && c - 1 < cols)
                .then(|| (r - 1, c - 1))
                .filter(|&(r, c)| matches!(costs[r][c], Some(x) if x.is_finite()))
        })
        .collect();
    pairs.sort_unstable();
    pairs
}

pub fn total_cost(costs: &[Vec<Option<f64>>], pairs: &[(usize, usize)]) -> f64 {
    pairs
        .iter()
        .map(|&(r, c)| costs[r][c].unwrap_or(0.0))
        .sum()
}
