//! Truncated-cost 2-Wasserstein distance
//! `ρ₂(μ, ν) = (inf_couplings ∫ |x − y|² ∧ 1)^{1/2}` between empirical measures.
//!
//! The truncated cost is not convex in `|x − y|`, so the monotone (quantile)
//! coupling is only an upper bound. The exact value is obtained by solving
//! the assignment problem, which is restricted to small equal-size samples.

use serde::{Deserialize, Serialize};

use super::EmpiricalMeasure;
use crate::error::{invalid, Error, Result};

/// Largest sample size accepted by [`W2Method::ExactAssignment`].
pub const EXACT_ASSIGNMENT_MAX_N: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum W2Method {
    /// Quantile coupling of sorted 1-d samples; an upper bound on ρ₂.
    MonotoneUpperBound,
    /// Optimal matching of two equal-size samples.
    ExactAssignment,
}

fn truncated_cost(x: &[f64], y: &[f64]) -> f64 {
    let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    sq.min(1.0)
}

pub fn wasserstein2_truncated(
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    method: W2Method,
) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch {
            expected: mu.dim(),
            actual: nu.dim(),
        });
    }
    match method {
        W2Method::MonotoneUpperBound => {
            if mu.dim() != 1 {
                return Err(invalid("method", "monotone coupling is only defined in one dimension"));
            }
            Ok(monotone_cost(mu.raw(), nu.raw()).sqrt())
        }
        W2Method::ExactAssignment => {
            let n = mu.len();
            if n != nu.len() {
                return Err(invalid(
                    "method",
                    format!("exact assignment needs equal sizes, got {n} and {}", nu.len()),
                ));
            }
            if n > EXACT_ASSIGNMENT_MAX_N {
                return Err(invalid(
                    "method",
                    format!("exact assignment limited to N ≤ {EXACT_ASSIGNMENT_MAX_N}, got {n}"),
                ));
            }
            let cost: Vec<f64> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| truncated_cost(mu.point(i), nu.point(j)))
                .collect();
            let (total, _) = min_cost_assignment(n, &cost);
            Ok((total / n as f64).max(0.0).sqrt())
        }
    }
}

/// Expected truncated cost under the quantile coupling of two 1-d samples,
/// allowing different sample sizes.
fn monotone_cost(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    if n == m {
        return xs.iter().zip(&ys).map(|(x, y)| ((x - y) * (x - y)).min(1.0)).sum::<f64>() / n as f64;
    }
    // Walk the merged quantile breakpoints i/n and j/m using integer
    // arithmetic on the common denominator n*m.
    let (mut i, mut j) = (0usize, 0usize);
    let (mut pos, mut total) = (0usize, 0.0);
    let denom = n * m;
    while i < n && j < m {
        let next_x = (i + 1) * m;
        let next_y = (j + 1) * n;
        let next = next_x.min(next_y);
        let d = xs[i] - ys[j];
        total += (next - pos) as f64 * (d * d).min(1.0);
        pos = next;
        if next == next_x {
            i += 1;
        }
        if next == next_y {
            j += 1;
        }
    }
    total / denom as f64
}

/// Hungarian algorithm (shortest augmenting paths with potentials) on a
/// dense `n × n` row-major cost matrix. Returns the optimal total cost and
/// the column assigned to each row.
pub(crate) fn min_cost_assignment(n: usize, cost: &[f64]) -> (f64, Vec<usize>) {
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    let total = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i * n + j])
        .sum();
    (total, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(xs: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::from_scalars(xs.to_vec()).unwrap()
    }

    #[test]
    fn identity_and_truncation() {
        let a = e(&[0.0, 1.0, 2.5]);
        for m in [W2Method::MonotoneUpperBound, W2Method::ExactAssignment] {
            assert_eq!(wasserstein2_truncated(&a, &a, m).unwrap(), 0.0);
            assert_eq!(wasserstein2_truncated(&e(&[0.0]), &e(&[3.0]), m).unwrap(), 1.0);
            assert_eq!(wasserstein2_truncated(&e(&[0.0]), &e(&[0.5]), m).unwrap(), 0.5);
        }
    }

    #[test]
    fn rejected_inputs() {
        let big = e(&vec![0.0; EXACT_ASSIGNMENT_MAX_N + 1]);
        assert!(wasserstein2_truncated(&big, &big, W2Method::ExactAssignment).is_err());
        assert!(wasserstein2_truncated(&e(&[0.0]), &e(&[0.0, 1.0]), W2Method::ExactAssignment).is_err());
        let two_d = EmpiricalMeasure::new(2, vec![0.0, 0.0]).unwrap();
        assert!(wasserstein2_truncated(&two_d, &two_d, W2Method::MonotoneUpperBound).is_err());
        assert!(wasserstein2_truncated(&two_d, &two_d, W2Method::ExactAssignment).is_ok());
    }

    #[test]
    fn truncation_makes_sorted_coupling_suboptimal() {
        // sorted: (0,0.9) (1,10) → 0.81 + 1; crossed: (0,10) (1,0.9) → 1 + 0.01
        let a = e(&[0.0, 1.0]);
        let b = e(&[0.9, 10.0]);
        let mono = wasserstein2_truncated(&a, &b, W2Method::MonotoneUpperBound).unwrap();
        let exact = wasserstein2_truncated(&a, &b, W2Method::ExactAssignment).unwrap();
        assert!((mono * mono - 0.905).abs() < 1e-12);
        assert!((exact * exact - 0.505).abs() < 1e-12);
    }

    #[test]
    fn unequal_sizes_use_quantile_coupling() {
        // quantiles of {0,1} vs {0,0,1,1} coincide
        assert_eq!(monotone_cost(&[0.0, 1.0], &[0.0, 0.0, 1.0, 1.0]), 0.0);
        // {0} vs {0, 0.5}: half the mass moves 0.5
        assert!((monotone_cost(&[0.0], &[0.0, 0.5]) - 0.125).abs() < 1e-15);
    }

    fn brute_force(n: usize, cost: &[f64]) -> f64 {
        fn rec(row: usize, n: usize, used: &mut Vec<bool>, cost: &[f64]) -> f64 {
            if row == n {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row * n + j] + rec(row + 1, n, used, cost));
                    used[j] = false;
                }
            }
            best
        }
        rec(0, n, &mut vec![false; n], cost)
    }

    proptest! {
        #[test]
        fn hungarian_matches_enumeration(n in 1usize..7, seed in prop::collection::vec(0.0f64..1.0, 36)) {
            let cost: Vec<f64> = seed[..n * n].to_vec();
            let (best, assign) = min_cost_assignment(n, &cost);
            prop_assert!((best - brute_force(n, &cost)).abs() < 1e-12);
            let mut cols = assign.clone();
            cols.sort();
            prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn monotone_bounds_exact(n in 1usize..=64, xs in prop::collection::vec(-3.0f64..3.0, 128)) {
            let a = e(&xs[..n]);
            let b = e(&xs[64..64 + n]);
            let mono = wasserstein2_truncated(&a, &b, W2Method::MonotoneUpperBound).unwrap();
            let exact = wasserstein2_truncated(&a, &b, W2Method::ExactAssignment).unwrap();
            prop_assert!(mono + 1e-12 >= exact);
            prop_assert!((0.0..=1.0).contains(&exact));
        }
    }
}
