//! Fisher-Jenks natural breaks by exact dynamic programming.
//!
//! The DP runs on distinct sorted values with multiplicity weights, so equal
//! values never straddle a class boundary and labels follow directly from
//! the break values.

use serde::{Deserialize, Serialize};

use super::SpatialError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JenksClassification {
    /// Upper bound of each class, ascending; the last equals the maximum.
    pub breaks: Vec<f64>,
    /// Class label per input value, `0..k-1` ascending.
    pub labels: Vec<usize>,
    /// Total within-class sum of squared deviations.
    pub objective: f64,
}

/// Optimal k-class 1-D classification minimizing within-class SSD.
pub fn fisher_jenks(values: &[f64], k: usize) -> Result<JenksClassification, SpatialError> {
    if k < 1 {
        return Err(SpatialError::ZeroClasses);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct: Vec<f64> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for &v in &sorted {
        if distinct.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            distinct.push(v);
            counts.push(1.0);
        }
    }
    let m = distinct.len();
    if m < k {
        return Err(SpatialError::TooFewDistinct { need: k, got: m, k });
    }

    // weighted prefix sums over distinct values
    let mut pw = vec![0.0; m + 1]; // sum of weights
    let mut ps = vec![0.0; m + 1]; // sum of w*v
    let mut pq = vec![0.0; m + 1]; // sum of w*v^2
    for i in 0..m {
        pw[i + 1] = pw[i] + counts[i];
        ps[i + 1] = ps[i] + counts[i] * distinct[i];
        pq[i + 1] = pq[i] + counts[i] * distinct[i] * distinct[i];
    }
    // SSD of distinct[i..j] inclusive (weighted)
    let cost = |i: usize, j: usize| -> f64 {
        let w = pw[j + 1] - pw[i];
        let s = ps[j + 1] - ps[i];
        let q = pq[j + 1] - pq[i];
        (q - s * s / w).max(0.0)
    };

    // dp[c][j]: min cost of classifying distinct[0..=j] into c+1 classes
    let mut dp = vec![vec![f64::INFINITY; m]; k];
    let mut back = vec![vec![0usize; m]; k];
    for j in 0..m {
        dp[0][j] = cost(0, j);
    }
    for c in 1..k {
        for j in c..m {
            // split s: last class is distinct[s..=j], scan ascending and keep
            // the first (smallest) split among ties
            for s in c..=j {
                let cand = dp[c - 1][s - 1] + cost(s, j);
                if cand < dp[c][j] {
                    dp[c][j] = cand;
                    back[c][j] = s;
                }
            }
        }
    }

    // reconstruct class upper-bound indices
    let mut bounds = vec![0usize; k];
    let mut j = m - 1;
    for c in (0..k).rev() {
        bounds[c] = j;
        if c > 0 {
            j = back[c][j] - 1;
        }
    }
    let breaks: Vec<f64> = bounds.iter().map(|&b| distinct[b]).collect();
    let labels = values
        .iter()
        .map(|&v| breaks.iter().position(|&b| v <= b).unwrap_or(k - 1))
        .collect();
    Ok(JenksClassification { breaks, labels, objective: dp[k - 1][m - 1] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_obvious_groups() {
        let v = [1.0, 2.0, 3.0, 11.0, 12.0, 13.0];
        let c = fisher_jenks(&v, 2).unwrap();
        assert_eq!(c.labels, vec![0, 0, 0, 1, 1, 1]);
        assert_eq!(c.breaks, vec![3.0, 13.0]);
        // objective: SSD{1,2,3} + SSD{11,12,13} = 2 + 2
        assert!((c.objective - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_class() {
        let v = [4.0, 1.0, 9.0];
        let c = fisher_jenks(&v, 1).unwrap();
        assert!(c.labels.iter().all(|&l| l == 0));
        assert_eq!(c.breaks, vec![9.0]);
    }

    #[test]
    fn one_class_per_distinct_value() {
        let v = [5.0, 1.0, 5.0, 3.0, 1.0];
        let c = fisher_jenks(&v, 3).unwrap();
        assert!(c.objective < 1e-12);
        assert_eq!(c.labels, vec![2, 0, 2, 1, 0]);
    }

    #[test]
    fn too_few_distinct() {
        let v = [1.0, 1.0, 2.0];
        assert!(matches!(
            fisher_jenks(&v, 3),
            Err(SpatialError::TooFewDistinct { .. })
        ));
    }

    /// Exhaustive contiguous-partition oracle over distinct values.
    pub(crate) fn exhaustive_best(values: &[f64], k: usize) -> (f64, Vec<f64>) {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct: Vec<f64> = Vec::new();
        let mut counts: Vec<f64> = Vec::new();
        for &v in &sorted {
            if distinct.last() == Some(&v) {
                *counts.last_mut().unwrap() += 1.0;
            } else {
                distinct.push(v);
                counts.push(1.0);
            }
        }
        let m = distinct.len();
        let ssd = |i: usize, j: usize| -> f64 {
            let mut w = 0.0;
            let mut s = 0.0;
            for t in i..=j {
                w += counts[t];
                s += counts[t] * distinct[t];
            }
            let mean = s / w;
            (i..=j).map(|t| counts[t] * (distinct[t] - mean).powi(2)).sum()
        };
        // choose k-1 split points among m-1 gaps, lexicographic order,
        // strict improvement keeps the first optimum
        let mut best = (f64::INFINITY, Vec::new());
        let mut splits: Vec<usize> = (1..k).collect();
        loop {
            let mut cost = 0.0;
            let mut lo = 0usize;
            for &s in &splits {
                cost += ssd(lo, s - 1);
                lo = s;
            }
            cost += ssd(lo, m - 1);
            if cost < best.0 {
                let mut breaks: Vec<f64> = splits.iter().map(|&s| distinct[s - 1]).collect();
                breaks.push(distinct[m - 1]);
                best = (cost, breaks);
            }
            // next combination
            let mut idx = splits.len();
            loop {
                if idx == 0 {
                    return best;
                }
                idx -= 1;
                if splits[idx] < m - (splits.len() - idx - 1) - 1 {
                    splits[idx] += 1;
                    for t in idx + 1..splits.len() {
                        splits[t] = splits[t - 1] + 1;
                    }
                    break;
                }
            }
            if splits.is_empty() {
                return best;
            }
        }
    }

    #[test]
    fn matches_exhaustive_oracle_small() {
        let v = [0.2, 5.1, 5.3, 9.9, 0.1, 4.8, 10.2, 0.4];
        for k in 1..=4 {
            let dp = fisher_jenks(&v, k).unwrap();
            let (cost, breaks) = exhaustive_best(&v, k);
            assert!((dp.objective - cost).abs() < 1e-9, "k={k}: {} vs {cost}", dp.objective);
            assert_eq!(dp.breaks, breaks, "k={k}");
        }
    }

    #[test]
    fn beats_equal_interval_and_quantile() {
        let v: Vec<f64> = (0..30).map(|i| ((i * i * 37) % 101) as f64).collect();
        let k = 5;
        let dp = fisher_jenks(&v, k).unwrap();
        let objective_of = |breaks: &[f64]| -> f64 {
            let label = |x: f64| breaks.iter().position(|&b| x <= b).unwrap_or(k - 1);
            let mut sums = vec![(0.0, 0.0, 0.0); k];
            for &x in &v {
                let l = label(x);
                sums[l].0 += 1.0;
                sums[l].1 += x;
                sums[l].2 += x * x;
            }
            sums.iter()
                .filter(|(w, _, _)| *w > 0.0)
                .map(|(w, s, q)| q - s * s / w)
                .sum()
        };
        let mut sorted = v.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
        let equal: Vec<f64> = (1..=k).map(|i| lo + (hi - lo) * i as f64 / k as f64).collect();
        let quant: Vec<f64> = (1..=k)
            .map(|i| crate::preprocess::quantile_sorted(&sorted, i as f64 / k as f64))
            .collect();
        assert!(dp.objective <= objective_of(&equal) + 1e-9);
        assert!(dp.objective <= objective_of(&quant) + 1e-9);
    }
}
