//! Ward agglomeration via the Lance-Williams recurrence.

use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterError, FeatureMatrix};

/// One merge step. Cluster ids follow the usual convention: leaves are
/// `0..n-1`, the i-th merge creates id `n + i`. `height` is the Ward
/// variance increase of the merge.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

/// Agglomerate all rows; returns `n - 1` merges with non-decreasing heights.
///
/// The recurrence runs on squared Euclidean distances (`d = 2 * delta`), so
/// the reported height is `d / 2`, the actual variance increase. Ties break
/// on the smallest (left, right) id pair.
pub fn ward_linkage(m: &FeatureMatrix) -> Vec<Merge> {
    let n = m.n_rows();
    let rows = m.rows();
    assert!(n >= 2, "need at least 2 rows");

    // active clusters: (id, size); dist[i][j] over active slot indices
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes: Vec<f64> = vec![1.0; n];
    let mut dist: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { f64::INFINITY } else { sq_dist(&rows[i], &rows[j]) }).collect())
        .collect();

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        // closest active pair; ties to the smallest id pair
        let mut best = (f64::INFINITY, 0usize, 1usize);
        let active = ids.len();
        for i in 0..active {
            for j in (i + 1)..active {
                let d = dist[i][j];
                let key = ordered_pair(ids[i], ids[j]);
                let best_key = ordered_pair(ids[best.1], ids[best.2]);
                if d < best.0 || (d == best.0 && key < best_key) {
                    best = (d, i, j);
                }
            }
        }
        let (d_min, i, j) = best;
        let (lo, hi) = ordered_pair(ids[i], ids[j]);
        let merged_size = sizes[i] + sizes[j];
        merges.push(Merge {
            left: lo,
            right: hi,
            height: d_min / 2.0,
            size: merged_size as usize,
        });

        // Lance-Williams update for Ward, writing the merged cluster into slot i
        for o in 0..active {
            if o == i || o == j {
                continue;
            }
            let nd = ((sizes[i] + sizes[o]) * dist[i][o] + (sizes[j] + sizes[o]) * dist[j][o]
                - sizes[o] * d_min)
                / (merged_size + sizes[o]);
            dist[i][o] = nd;
            dist[o][i] = nd;
        }
        ids[i] = n + step;
        sizes[i] = merged_size;
        // drop slot j
        ids.swap_remove(j);
        sizes.swap_remove(j);
        dist.swap_remove(j);
        for row in dist.iter_mut() {
            row.swap_remove(j);
        }
    }
    merges
}

/// Partition into `k` clusters by undoing the last `k - 1` merges.
///
/// Labels are assigned by order of first member appearance in row order.
pub fn cut_tree(merges: &[Merge], n: usize, k: usize) -> Result<Vec<usize>, ClusterError> {
    if k < 1 || k > n {
        return Err(ClusterError::KTooLarge { k, n });
    }
    // union-find over leaf + internal ids
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (step, merge) in merges.iter().take(n - k).enumerate() {
        let root = n + step;
        let a = find(&mut parent, merge.left);
        let b = find(&mut parent, merge.right);
        parent[a] = root;
        parent[b] = root;
    }
    let mut label_of_root = std::collections::HashMap::new();
    let mut labels = Vec::with_capacity(n);
    for leaf in 0..n {
        let root = find(&mut parent, leaf);
        let next = label_of_root.len();
        let label = *label_of_root.entry(root).or_insert(next);
        labels.push(label);
    }
    Ok(labels)
}

fn ordered_pair(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_matrix(values: &[f64]) -> FeatureMatrix {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let z: Vec<f64> = values.iter().map(|v| (v - mean) / sd).collect();
        FeatureMatrix::from_standardized(
            (0..values.len()).map(|i| format!("g{i}")).collect(),
            vec!["x".to_string()],
            vec![z],
        )
        .unwrap()
    }

    #[test]
    fn two_pairs_merge_first() {
        // {0, 1, 10, 11}: exhaustive Ward evaluation merges (0,1), then (10,11)
        let m = line_matrix(&[0.0, 1.0, 10.0, 11.0]);
        let merges = ward_linkage(&m);
        assert_eq!((merges[0].left, merges[0].right), (0, 1));
        assert_eq!((merges[1].left, merges[1].right), (2, 3));
        assert_eq!(merges.len(), 3);
        assert_eq!(merges[2].size, 4);
    }

    #[test]
    fn identical_points_merge_at_zero() {
        let m = line_matrix(&[5.0, 5.0, 9.0, 1.0]);
        let merges = ward_linkage(&m);
        assert_eq!(merges[0].height, 0.0);
        assert_eq!((merges[0].left, merges[0].right), (0, 1));
    }

    #[test]
    fn heights_non_decreasing() {
        let values = [3.1, 0.4, 9.9, 2.2, 7.7, 5.0, 5.1, 8.8, 0.0, 4.4, 6.2];
        let m = line_matrix(&values);
        let merges = ward_linkage(&m);
        for w in merges.windows(2) {
            assert!(w[1].height >= w[0].height - 1e-12, "{merges:?}");
        }
    }

    #[test]
    fn ward_matches_exhaustive_greedy_oracle() {
        // independent oracle: recompute the Ward criterion
        // delta(A,B) = |A||B|/(|A|+|B|) * ||mean(A)-mean(B)||^2 from scratch
        // at every step over explicit member sets.
        let values = [0.0, 0.9, 2.1, 7.0, 7.8, 13.0, 13.3, 20.0];
        let m = line_matrix(&values);
        let merges = ward_linkage(&m);

        let z: Vec<f64> = m.rows().iter().map(|r| r[0]).collect();
        let mut clusters: Vec<(usize, Vec<usize>)> = (0..z.len()).map(|i| (i, vec![i])).collect();
        let mut next_id = z.len();
        for merge in &merges {
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..clusters.len() {
                for j in (i + 1)..clusters.len() {
                    let (a, b) = (&clusters[i].1, &clusters[j].1);
                    let ma = a.iter().map(|&x| z[x]).sum::<f64>() / a.len() as f64;
                    let mb = b.iter().map(|&x| z[x]).sum::<f64>() / b.len() as f64;
                    let delta = (a.len() * b.len()) as f64 / (a.len() + b.len()) as f64
                        * (ma - mb).powi(2);
                    let key = (clusters[i].0.min(clusters[j].0), clusters[i].0.max(clusters[j].0));
                    let better = match best {
                        None => true,
                        Some((d, bi, bj)) => {
                            let bkey = (
                                clusters[bi].0.min(clusters[bj].0),
                                clusters[bi].0.max(clusters[bj].0),
                            );
                            delta < d - 1e-12 || ((delta - d).abs() <= 1e-12 && key < bkey)
                        }
                    };
                    if better {
                        best = Some((delta, i, j));
                    }
                }
            }
            let (delta, i, j) = best.unwrap();
            let pair = (
                clusters[i].0.min(clusters[j].0),
                clusters[i].0.max(clusters[j].0),
            );
            assert_eq!((merge.left, merge.right), pair, "merge order diverged");
            assert!((merge.height - delta).abs() < 1e-9, "height {} vs oracle {delta}", merge.height);
            let mut members = clusters[i].1.clone();
            members.extend(clusters[j].1.iter().copied());
            let (hi, lo) = (i.max(j), i.min(j));
            clusters.remove(hi);
            clusters.remove(lo);
            clusters.push((next_id, members));
            next_id += 1;
        }
    }

    #[test]
    fn cut_tree_extremes() {
        let m = line_matrix(&[0.0, 1.0, 10.0, 11.0]);
        let merges = ward_linkage(&m);
        assert_eq!(cut_tree(&merges, 4, 1).unwrap(), vec![0, 0, 0, 0]);
        assert_eq!(cut_tree(&merges, 4, 4).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(cut_tree(&merges, 4, 2).unwrap(), vec![0, 0, 1, 1]);
        assert!(matches!(cut_tree(&merges, 4, 5), Err(ClusterError::KTooLarge { .. })));
    }

    #[test]
    fn cuts_are_nested() {
        let values = [3.1, 0.4, 9.9, 2.2, 7.7, 5.0, 5.1, 8.8, 0.0, 4.4];
        let m = line_matrix(&values);
        let merges = ward_linkage(&m);
        for k in 1..values.len() {
            let coarse = cut_tree(&merges, values.len(), k).unwrap();
            let fine = cut_tree(&merges, values.len(), k + 1).unwrap();
            // refining k -> k+1 splits exactly one cluster: every fine label
            // maps to one coarse label, and the fine partition has k+1 labels
            let mut map = std::collections::HashMap::new();
            for (c, f) in coarse.iter().zip(&fine) {
                let entry = map.entry(*f).or_insert(*c);
                assert_eq!(entry, c, "fine cluster split across coarse clusters");
            }
            assert_eq!(map.len(), k + 1);
        }
    }
}
