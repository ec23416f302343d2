//! Summary statistics for comparing batches of episodes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Median (mean of the middle pair for even lengths). `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        (v[mid - 1] + v[mid]) / 2.0
    } else {
        v[mid]
    })
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Mann-Whitney `U` of the first sample.
    pub u: f64,
    /// Standardized `U` (tie-corrected); negative when the first sample
    /// tends to be smaller.
    pub z: f64,
    /// Two-sided p-value from the normal approximation.
    pub p_two_sided: f64,
}

/// Wilcoxon rank-sum / Mann-Whitney test with the normal approximation and
/// tie correction. Both samples must be non-empty.
pub fn rank_sum_test(x: &[f64], y: &[f64]) -> RankSum {
    assert!(
        !x.is_empty() && !y.is_empty(),
        "rank-sum test needs two non-empty samples"
    );
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..x.len()].iter().sum();
    let u = r1 - n1 * (n1 + 1.0) / 2.0;

    let n = n1 + n2;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_term += t * t * t - t;
    }
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let mean = n1 * n2 / 2.0;
    if var <= 0.0 {
        return RankSum {
            u,
            z: 0.0,
            p_two_sided: 1.0,
        };
    }
    let z = (u - mean) / var.sqrt();
    let normal = Normal::standard();
    RankSum {
        u,
        z,
        p_two_sided: (2.0 * normal.cdf(-z.abs())).min(1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn medians() {
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn brute_force_u() {
        // U counts pairs with x < y as 0 and x > y as 1, ties as one half
        let x = [1.0, 3.0, 3.0, 7.0, 2.0];
        let y = [3.0, 4.0, 5.0, 1.0];
        let mut u = 0.0;
        for a in x {
            for b in y {
                u += if a > b {
                    1.0
                } else if a == b {
                    0.5
                } else {
                    0.0
                };
            }
        }
        assert_abs_diff_eq!(rank_sum_test(&x, &y).u, u, epsilon = 1e-12);
    }

    #[test]
    fn reference_values() {
        // no ties: U = 0, var = 5*5*11/12, z = -12.5 / sqrt(22.9167)
        let r = rank_sum_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(r.u, 0.0);
        assert_abs_diff_eq!(r.z, -12.5 / (275.0f64 / 12.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_two_sided, 0.00902, epsilon = 1e-4);
        let same = rank_sum_test(&[2.0, 2.0], &[2.0, 2.0]);
        assert_eq!(same.p_two_sided, 1.0);
    }
}
