//! Neighborhood typology discovery.
//!
//! K-means (k-means++ seeding, best of `n_init` restarts) with silhouette
//! model selection, Ward hierarchical validation via the Lance-Williams
//! recurrence, cluster profiles, and adjusted-Rand agreement between
//! methods. Every randomized piece derives its RNG stream from the master
//! seed, so results are identical for any worker count.

mod kmeans;
mod ward;

pub use kmeans::{kmeans_fit, silhouette, KmeansParams};
pub use ward::{cut_tree, ward_linkage, Merge};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preprocess::{self, PreprocessError};
use crate::seed::derive_seed;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("k = {k} out of range for {n} rows")]
    KTooLarge { k: usize, n: usize },
    #[error("feature column {name:?} is degenerate (zero variance)")]
    DegenerateFeatures { name: String },
    #[error("feature column {name:?} contains missing values")]
    MissingValues { name: String },
    #[error("feature column {name:?} is not standardized (mean {mean}, sd {sd})")]
    NotStandardized { name: String, mean: f64, sd: f64 },
    #[error("silhouette requires at least 2 clusters")]
    SingleCluster,
    #[error("assignment vectors cover different row sets")]
    RowMismatch,
    #[error("empty feature matrix")]
    Empty,
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
}

/// Z-scored feature matrix keyed by tract id.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeatureMatrix {
    geoids: Vec<String>,
    names: Vec<String>,
    /// row-major, `rows x features`
    rows: Vec<Vec<f64>>,
}

impl FeatureMatrix {
    /// Build from already z-scored columns; validates the standardization
    /// invariant (column mean ~ 0, population sd ~ 1, at 1e-9).
    pub fn from_standardized(
        geoids: Vec<String>,
        names: Vec<String>,
        columns: Vec<Vec<f64>>,
    ) -> Result<Self, ClusterError> {
        if geoids.is_empty() || names.is_empty() {
            return Err(ClusterError::Empty);
        }
        assert_eq!(names.len(), columns.len());
        let n = geoids.len();
        for (name, col) in names.iter().zip(&columns) {
            assert_eq!(col.len(), n, "column {name} length");
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            if sd == 0.0 {
                return Err(ClusterError::DegenerateFeatures { name: name.clone() });
            }
            if mean.abs() > 1e-9 || (sd - 1.0).abs() > 1e-9 {
                return Err(ClusterError::NotStandardized { name: name.clone(), mean, sd });
            }
        }
        let rows = (0..n)
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect();
        Ok(FeatureMatrix { geoids, names, rows })
    }

    /// Z-score raw columns, then build. Missing values are rejected.
    pub fn standardize(
        geoids: Vec<String>,
        named_columns: Vec<(String, Vec<Option<f64>>)>,
    ) -> Result<Self, ClusterError> {
        let mut names = Vec::with_capacity(named_columns.len());
        let mut columns = Vec::with_capacity(named_columns.len());
        for (name, raw) in named_columns {
            if raw.iter().any(|v| v.is_none()) {
                return Err(ClusterError::MissingValues { name });
            }
            let (z, _) = preprocess::zscore(&raw).map_err(|e| match e {
                PreprocessError::ZeroVariance => ClusterError::DegenerateFeatures { name: name.clone() },
                other => ClusterError::Preprocess(other),
            })?;
            columns.push(z.into_iter().map(|v| v.unwrap()).collect());
            names.push(name);
        }
        FeatureMatrix::from_standardized(geoids, names, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    pub fn geoids(&self) -> &[String] {
        &self.geoids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Kmeans,
    Ward,
}

/// A fitted typology.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterModel {
    pub method: Method,
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Option<Vec<Vec<f64>>>,
    pub merges: Option<Vec<Merge>>,
    pub wcss: f64,
    pub mean_silhouette: Option<f64>,
    pub seed: Option<u64>,
}

impl ClusterModel {
    /// Serializable dump with assignments keyed by geoid.
    pub fn dump(&self, geoids: &[String]) -> serde_json::Value {
        let assignments: BTreeMap<&str, usize> = geoids
            .iter()
            .map(|g| g.as_str())
            .zip(self.assignments.iter().copied())
            .collect();
        serde_json::json!({
            "method": self.method,
            "k": self.k,
            "seed": self.seed,
            "assignments": assignments,
            "centroids": self.centroids,
            "merges": self.merges,
            "diagnostics": { "wcss": self.wcss, "mean_silhouette": self.mean_silhouette },
        })
    }
}

/// Recompute the within-cluster sum of squares from assignments.
pub fn wcss_of(m: &FeatureMatrix, assignments: &[usize], k: usize) -> f64 {
    let d = m.n_features();
    let mut centroids = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (row, &a) in m.rows().iter().zip(assignments) {
        counts[a] += 1;
        for (c, v) in centroids[a].iter_mut().zip(row) {
            *c += v;
        }
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        if n > 0 {
            for v in c.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    m.rows()
        .iter()
        .zip(assignments)
        .map(|(row, &a)| sq_dist(row, &centroids[a]))
        .sum()
}

/// Fit k-means for every k in `k_range` with a shared seed policy.
///
/// Each k additionally warm-starts Lloyd from the previous k's solution plus
/// the point farthest from its centroid, which makes the WCSS curve
/// non-increasing up to restart noise.
fn fit_range(
    m: &FeatureMatrix,
    k_range: std::ops::RangeInclusive<usize>,
    seed: u64,
    params: &KmeansParams,
) -> Result<Vec<ClusterModel>, ClusterError> {
    let mut out: Vec<ClusterModel> = Vec::new();
    for k in k_range {
        let mut best = kmeans_fit(m, k, derive_seed(seed, k as u64), params)?;
        if let Some(prev) = out.last() {
            let warm = kmeans::warm_start_expand(m, prev, k);
            let candidate = kmeans::lloyd_from(m, warm, params);
            if candidate.0 < best.wcss {
                best.wcss = candidate.0;
                best.assignments = candidate.1;
                best.centroids = Some(candidate.2);
            }
        }
        out.push(best);
    }
    Ok(out)
}

/// WCSS per k (elbow curve).
pub fn wcss_curve(
    m: &FeatureMatrix,
    k_range: std::ops::RangeInclusive<usize>,
    seed: u64,
    params: &KmeansParams,
) -> Result<Vec<(usize, f64)>, ClusterError> {
    Ok(fit_range(m, k_range, seed, params)?
        .into_iter()
        .map(|model| (model.k, model.wcss))
        .collect())
}

/// One row of the k-selection diagnostics table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KDiagnostics {
    pub k: usize,
    pub mean_silhouette: f64,
    pub wcss: f64,
}

#[derive(Clone, Debug)]
pub struct KSelection {
    pub k_best: usize,
    pub table: Vec<KDiagnostics>,
    pub best_model: ClusterModel,
}

/// Choose k by silhouette argmax over `k_range`; ties go to the smaller k.
pub fn select_k(
    m: &FeatureMatrix,
    k_range: std::ops::RangeInclusive<usize>,
    seed: u64,
    params: &KmeansParams,
) -> Result<KSelection, ClusterError> {
    let mut table = Vec::new();
    let mut best: Option<(f64, usize, ClusterModel)> = None;
    for mut model in fit_range(m, k_range, seed, params)? {
        let (mean_sil, _) = silhouette(m, &model.assignments)?;
        model.mean_silhouette = Some(mean_sil);
        table.push(KDiagnostics { k: model.k, mean_silhouette: mean_sil, wcss: model.wcss });
        let better = match &best {
            None => true,
            Some((s, _, _)) => mean_sil > *s,
        };
        if better {
            best = Some((mean_sil, model.k, model));
        }
    }
    let (_, k_best, best_model) = best.expect("non-empty k range");
    Ok(KSelection { k_best, table, best_model })
}

/// Per-cluster means of unstandardized variables, plus sizes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub variables: Vec<String>,
    /// `means[cluster][variable]`
    pub means: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
}

pub fn cluster_profile(
    variables: &[(String, Vec<f64>)],
    assignments: &[usize],
    k: usize,
) -> ClusterProfile {
    let mut sizes = vec![0usize; k];
    for &a in assignments {
        sizes[a] += 1;
    }
    let mut means = vec![vec![0.0; variables.len()]; k];
    for (vi, (_, col)) in variables.iter().enumerate() {
        assert_eq!(col.len(), assignments.len());
        for (value, &a) in col.iter().zip(assignments) {
            means[a][vi] += value;
        }
        for (c, &n) in means.iter_mut().zip(&sizes) {
            if n > 0 {
                c[vi] /= n as f64;
            }
        }
    }
    ClusterProfile {
        variables: variables.iter().map(|(n, _)| n.clone()).collect(),
        means,
        sizes,
    }
}

/// Contingency table and adjusted Rand index between two labelings.
pub fn agreement(a: &[usize], b: &[usize]) -> Result<(Vec<Vec<usize>>, f64), ClusterError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(ClusterError::RowMismatch);
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |n: usize| (n * n.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&n| choose2(n)).sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(a.len());
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    let ari = if (max_index - expected).abs() < 1e-15 {
        1.0 // both labelings are single-cluster or otherwise degenerate
    } else {
        (sum_ij - expected) / (max_index - expected)
    };
    Ok((table, ari))
}

/// Renumber clusters by descending mean of `key` so label 0 carries the
/// highest mean (presentation order: cluster 1 = highest vulnerability).
pub fn renumber_by_descending(assignments: &[usize], k: usize, key: &[f64]) -> Vec<usize> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&a, &v) in assignments.iter().zip(key) {
        sums[a] += v;
        counts[a] += 1;
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| {
        let mx = if counts[x] > 0 { sums[x] / counts[x] as f64 } else { f64::NEG_INFINITY };
        let my = if counts[y] > 0 { sums[y] / counts[y] as f64 } else { f64::NEG_INFINITY };
        my.partial_cmp(&mx).unwrap().then(x.cmp(&y))
    });
    let mut relabel = vec![0usize; k];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    assignments.iter().map(|&a| relabel[a]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_matrix() -> FeatureMatrix {
        // two tight groups on a line: {0.0, 0.1} and {10.0, 10.1}
        let raw = vec![
            ("x".to_string(), vec![Some(0.0), Some(0.1), Some(10.0), Some(10.1)]),
            ("y".to_string(), vec![Some(1.0), Some(1.1), Some(-4.0), Some(-4.2)]),
        ];
        FeatureMatrix::standardize(
            (0..4).map(|i| format!("g{i}")).collect(),
            raw,
        )
        .unwrap()
    }

    #[test]
    fn standardize_validates_invariant() {
        let m = tiny_matrix();
        for j in 0..m.n_features() {
            let col: Vec<f64> = m.rows().iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_feature_rejected() {
        let raw = vec![("c".to_string(), vec![Some(1.0), Some(1.0), Some(1.0)])];
        let r = FeatureMatrix::standardize(vec!["a".into(), "b".into(), "c".into()], raw);
        assert!(matches!(r, Err(ClusterError::DegenerateFeatures { .. })));
    }

    #[test]
    fn missing_feature_rejected() {
        let raw = vec![("c".to_string(), vec![Some(1.0), None, Some(3.0)])];
        let r = FeatureMatrix::standardize(vec!["a".into(), "b".into(), "c".into()], raw);
        assert!(matches!(r, Err(ClusterError::MissingValues { .. })));
    }

    #[test]
    fn agreement_identical_labelings() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let (_, ari) = agreement(&a, &a).unwrap();
        assert_eq!(ari, 1.0);
    }

    #[test]
    fn agreement_permuted_labels() {
        let a = vec![0, 0, 1, 1, 2, 2];
        let b = vec![2, 2, 0, 0, 1, 1];
        let (_, ari) = agreement(&a, &b).unwrap();
        assert!((ari - 1.0).abs() < 1e-12);
    }

    #[test]
    fn agreement_known_contingency() {
        // a = [0,0,1,1,2,2], b = [0,0,0,1,1,1]:
        // sum_ij C(nij,2) = 2, sum_a = 3, sum_b = 6, C(6,2) = 15
        // ARI = (2 - 1.2) / (4.5 - 1.2) = 8/33
        let a = vec![0, 0, 1, 1, 2, 2];
        let b = vec![0, 0, 0, 1, 1, 1];
        let (table, ari) = agreement(&a, &b).unwrap();
        assert_eq!(table, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert!((ari - 8.0 / 33.0).abs() < 1e-12);
        assert!((ari - 0.242_424_242_424).abs() < 1e-10);
    }

    #[test]
    fn agreement_row_mismatch() {
        assert!(matches!(agreement(&[0, 1], &[0, 1, 2]), Err(ClusterError::RowMismatch)));
    }

    #[test]
    fn profile_recovers_global_means() {
        let vars = vec![
            ("a".to_string(), vec![1.0, 3.0, 5.0, 7.0]),
            ("b".to_string(), vec![10.0, 20.0, 30.0, 40.0]),
        ];
        let assignments = vec![0, 0, 1, 1];
        let p = cluster_profile(&vars, &assignments, 2);
        assert_eq!(p.sizes, vec![2, 2]);
        assert_eq!(p.means[0], vec![2.0, 15.0]);
        assert_eq!(p.means[1], vec![6.0, 35.0]);
        // size-weighted recombination reproduces the overall mean
        for (vi, (_, col)) in vars.iter().enumerate() {
            let global = col.iter().sum::<f64>() / col.len() as f64;
            let weighted: f64 = p
                .means
                .iter()
                .zip(&p.sizes)
                .map(|(m, &s)| m[vi] * s as f64)
                .sum::<f64>()
                / col.len() as f64;
            assert!((weighted - global).abs() < 1e-9);
        }
    }

    #[test]
    fn single_cluster_profile_is_column_means() {
        let vars = vec![("a".to_string(), vec![2.0, 4.0, 6.0])];
        let p = cluster_profile(&vars, &[0, 0, 0], 1);
        assert_eq!(p.means[0], vec![4.0]);
    }

    #[test]
    fn renumber_orders_by_key_descending() {
        let assignments = vec![0, 0, 1, 1, 2, 2];
        let key = vec![1.0, 1.0, 9.0, 9.0, 5.0, 5.0];
        let new = renumber_by_descending(&assignments, 3, &key);
        assert_eq!(new, vec![2, 2, 0, 0, 1, 1]);
    }

    #[test]
    fn select_k_finds_two_groups() {
        let m = tiny_matrix();
        let sel = select_k(&m, 2..=3, 7, &KmeansParams::default()).unwrap();
        assert_eq!(sel.k_best, 2);
        assert_eq!(sel.table.len(), 2);
        let a = &sel.best_model.assignments;
        assert_eq!(a[0], a[1]);
        assert_eq!(a[2], a[3]);
        assert_ne!(a[0], a[2]);
    }

    #[test]
    fn wcss_curve_monotone() {
        let m = tiny_matrix();
        let curve = wcss_curve(&m, 1..=4, 11, &KmeansParams::default()).unwrap();
        assert_eq!(curve[0].0, 1);
        // k=1 equals total sum of squares = n * d (z-scored columns)
        let tss = (m.n_rows() * m.n_features()) as f64;
        assert!((curve[0].1 - tss).abs() < 1e-9);
        for w in curve.windows(2) {
            assert!(w[1].1 <= w[0].1 + 1e-9, "curve must be non-increasing: {curve:?}");
        }
        // k = n drives WCSS to zero
        assert!(curve.last().unwrap().1 < 1e-12);
    }
}
