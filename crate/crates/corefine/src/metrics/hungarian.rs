//! Maximum-weight bipartite matching (Kuhn-Munkres with potentials).

use crate::mat::Mat;
use crate::Scalar;

/// Optimal one-to-one matching maximizing total weight. Weights must be
/// non-negative. Returns the matched column per row (`None` when a row is
/// left unmatched because columns ran out) and the total matched weight.
pub fn max_weight_assignment(weights: &Mat) -> (Vec<Option<usize>>, Scalar) {
    let (rows, cols) = weights.shape();
    if rows == 0 || cols == 0 {
        return (vec![None; rows], 0.0);
    }
    if rows <= cols {
        let assignment = solve_min_cost(rows, cols, |i, j| -weights.get(i, j));
        let total = assignment
            .iter()
            .enumerate()
            .filter_map(|(i, &j)| j.map(|j| weights.get(i, j)))
            .sum();
        (assignment, total)
    } else {
        // transpose so the row side is the smaller one
        let assignment = solve_min_cost(cols, rows, |i, j| -weights.get(j, i));
        let mut by_row = vec![None; rows];
        let mut total = 0.0;
        for (c, &r) in assignment.iter().enumerate() {
            if let Some(r) = r {
                by_row[r] = Some(c);
                total += weights.get(r, c);
            }
        }
        (by_row, total)
    }
}

/// Minimum-cost assignment of `n` rows to `m >= n` columns.
fn solve_min_cost(n: usize, m: usize, cost: impl Fn(usize, usize) -> Scalar) -> Vec<Option<usize>> {
    const INF: Scalar = Scalar::INFINITY;
    // 1-indexed potentials; p[j] is the row matched to column j (0 = none).
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![INF; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = INF;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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

    let mut assignment = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = Some(j - 1);
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Brute-force oracle: maximum total over all injective row-to-column maps.
    pub fn exhaustive_max(weights: &Mat) -> Scalar {
        fn recurse(weights: &Mat, row: usize, used: &mut Vec<bool>) -> Scalar {
            if row == weights.rows() {
                return 0.0;
            }
            // leaving the row unmatched is never better than matching it to a
            // free column with non-negative weight, but with more rows than
            // columns a row may have to stay unmatched
            let mut best: Option<Scalar> = None;
            for j in 0..weights.cols() {
                if !used[j] {
                    used[j] = true;
                    let total = weights.get(row, j) + recurse(weights, row + 1, used);
                    used[j] = false;
                    best = Some(best.map_or(total, |b: Scalar| b.max(total)));
                }
            }
            match best {
                Some(b) => b.max(recurse(weights, row + 1, used)),
                None => recurse(weights, row + 1, used),
            }
        }
        let mut used = vec![false; weights.cols()];
        recurse(weights, 0, &mut used)
    }

    #[test]
    fn hand_checked_square_instance() {
        let w = Mat::from_vec(3, 3, vec![7.0, 5.0, 9.0, 4.0, 2.0, 4.0, 7.0, 3.0, 8.0]);
        let (assignment, total) = max_weight_assignment(&w);
        assert_eq!(total, 18.0);
        assert_eq!(assignment.iter().filter(|a| a.is_some()).count(), 3);
    }

    #[test]
    fn rectangular_both_orientations() {
        let w = Mat::from_vec(2, 3, vec![1.0, 8.0, 2.0, 6.0, 7.0, 3.0]);
        let (_, total) = max_weight_assignment(&w);
        assert_eq!(total, 14.0);

        let wt = Mat::from_vec(3, 2, vec![1.0, 6.0, 8.0, 7.0, 2.0, 3.0]);
        let (assignment, total_t) = max_weight_assignment(&wt);
        assert_eq!(total_t, 14.0);
        assert_eq!(assignment.iter().filter(|a| a.is_none()).count(), 1);
    }

    #[test]
    fn matches_exhaustive_oracle_on_random_instances() {
        let mut rng = Rng::new(42);
        for _ in 0..300 {
            let rows = rng.range(1, 6);
            let cols = rng.range(1, 6);
            let w = Mat::from_fn(rows, cols, |_, _| rng.uniform());
            let (_, total) = max_weight_assignment(&w);
            let oracle = exhaustive_max(&w);
            assert!(
                (total - oracle).abs() < 1e-9,
                "hungarian {total} vs oracle {oracle} on {rows}x{cols}"
            );
        }
    }

    #[test]
    fn empty_sides() {
        let w = Mat::zeros(0, 3);
        assert_eq!(max_weight_assignment(&w).1, 0.0);
        let w = Mat::zeros(2, 0);
        let (assignment, total) = max_weight_assignment(&w);
        assert_eq!(assignment, vec![None, None]);
        assert_eq!(total, 0.0);
    }
}
