//! Descriptive and inferential statistics.
//!
//! Correlations use pairwise-complete deletion with per-cell pair counts so
//! the analyst can see data loss. Group comparisons contrast the flagged
//! high-vulnerability tracts with their complement (not with the full set,
//! which would overlap the flagged group).

mod lowess;

pub use lowess::lowess;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("zero variance in {side}")]
    ZeroVariance { side: &'static str },
    #[error("need at least {need} complete pairs, got {got}")]
    TooFewPairs { need: usize, got: usize },
    #[error("need at least {need} values, got {got}")]
    TooFewValues { need: usize, got: usize },
    #[error("contingency table has a zero expected count")]
    ZeroExpectedCount,
    #[error("need at least {need} predictors, got {got}")]
    TooFewPredictors { need: usize, got: usize },
    #[error("need more observations ({n}) than predictors ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("need at least {need} points, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("smoothing fraction must be in (0, 1], got {got}")]
    InvalidFraction { got: f64 },
    #[error("column lengths differ")]
    LengthMismatch,
}

fn complete_pairs(x: &[Option<f64>], y: &[Option<f64>]) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (a, b) in x.iter().zip(y.iter()) {
        if let (Some(a), Some(b)) = (a, b) {
            xs.push(*a);
            ys.push(*b);
        }
    }
    (xs, ys)
}

/// Pearson correlation over complete pairs.
pub fn pearson_r(x: &[Option<f64>], y: &[Option<f64>]) -> Result<f64, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch);
    }
    let (xs, ys) = complete_pairs(x, y);
    pearson_complete(&xs, &ys)
}

fn pearson_complete(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    let n = xs.len();
    if n < 3 {
        return Err(StatsError::TooFewPairs { need: 3, got: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in xs.iter().zip(ys.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance { side: "x" });
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance { side: "y" });
    }
    // exactly collinear pairs round to exactly +/-1
    if sxy * sxy == sxx * syy {
        return Ok(if sxy >= 0.0 { 1.0 } else { -1.0 });
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Symmetric correlation matrix with pairwise-complete counts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    /// `values[i][j]` is `None` when the cell could not be computed.
    pub values: Vec<Vec<Option<f64>>>,
    pub n_pairs: Vec<Vec<usize>>,
    /// Reason strings for failed cells, keyed `(i, j)` with `i < j`.
    pub failures: Vec<(usize, usize, String)>,
    /// Leaf order from average-linkage clustering on `1 - r`, when requested.
    pub order: Option<Vec<usize>>,
}

pub fn correlation_matrix(
    columns: &[(String, Vec<Option<f64>>)],
    cluster_order: bool,
) -> Result<CorrelationMatrix, StatsError> {
    let k = columns.len();
    if k < 2 {
        return Err(StatsError::TooFewValues { need: 2, got: k });
    }
    let labels: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
    let mut values = vec![vec![None; k]; k];
    let mut n_pairs = vec![vec![0usize; k]; k];
    let mut failures = Vec::new();
    for i in 0..k {
        values[i][i] = Some(1.0);
        n_pairs[i][i] = columns[i].1.iter().flatten().count();
        for j in (i + 1)..k {
            let (xs, ys) = complete_pairs(&columns[i].1, &columns[j].1);
            n_pairs[i][j] = xs.len();
            n_pairs[j][i] = xs.len();
            match pearson_complete(&xs, &ys) {
                Ok(r) => {
                    values[i][j] = Some(r);
                    values[j][i] = Some(r);
                }
                Err(e) => failures.push((i, j, e.to_string())),
            }
        }
    }
    let order = if cluster_order {
        Some(average_linkage_order(&values))
    } else {
        None
    };
    Ok(CorrelationMatrix { labels, values, n_pairs, failures, order })
}

/// Leaf ordering from average-linkage agglomeration on distance `1 - r`.
fn average_linkage_order(values: &[Vec<Option<f64>>]) -> Vec<usize> {
    let k = values.len();
    let dist = |i: usize, j: usize| 1.0 - values[i][j].unwrap_or(0.0);
    // members of each active cluster, in discovery order
    let mut clusters: Vec<Vec<usize>> = (0..k).map(|i| vec![i]).collect();
    let mut d: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { f64::INFINITY } else { dist(i, j) }).collect())
        .collect();
    let mut active: Vec<usize> = (0..k).collect();
    while active.len() > 1 {
        let mut best = (f64::INFINITY, 0usize, 1usize);
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                if d[i][j] < best.0 {
                    best = (d[i][j], i, j);
                }
            }
        }
        let (_, i, j) = best;
        let (ni, nj) = (clusters[i].len() as f64, clusters[j].len() as f64);
        let merged_members = {
            let mut m = clusters[i].clone();
            m.extend(clusters[j].iter().copied());
            m
        };
        for &o in &active {
            if o == i || o == j {
                continue;
            }
            let nd = (ni * d[i][o] + nj * d[j][o]) / (ni + nj);
            d[i][o] = nd;
            d[o][i] = nd;
        }
        clusters[i] = merged_members;
        active.retain(|&x| x != j);
    }
    clusters[active[0]].clone()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    WelchT,
    ChiSquare,
}

/// One group-vs-reference test result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupComparison {
    pub variable: String,
    pub group_mean: f64,
    pub reference_mean: f64,
    pub statistic: f64,
    pub df: f64,
    pub p: f64,
    pub kind: TestKind,
}

/// Welch two-sample t test (unequal variances), two-sided p.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<GroupComparison, StatsError> {
    if a.len() < 2 {
        return Err(StatsError::TooFewValues { need: 2, got: a.len() });
    }
    if b.len() < 2 {
        return Err(StatsError::TooFewValues { need: 2, got: b.len() });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let ma = a.iter().sum::<f64>() / na;
    let mb = b.iter().sum::<f64>() / nb;
    let va = a.iter().map(|v| (v - ma).powi(2)).sum::<f64>() / (na - 1.0);
    let vb = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (nb - 1.0);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return Err(StatsError::ZeroVariance { side: "both samples" });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(GroupComparison {
        variable: String::new(),
        group_mean: ma,
        reference_mean: mb,
        statistic: t,
        df,
        p,
        kind: TestKind::WelchT,
    })
}

/// Pearson chi-square test of independence on a contingency table of counts.
pub fn chi_square(observed: &[Vec<f64>]) -> Result<GroupComparison, StatsError> {
    let r = observed.len();
    if r < 2 || observed[0].len() < 2 {
        return Err(StatsError::TooFewValues { need: 2, got: r.min(observed.first().map_or(0, |x| x.len())) });
    }
    let c = observed[0].len();
    if observed.iter().any(|row| row.len() != c) {
        return Err(StatsError::LengthMismatch);
    }
    let row_sums: Vec<f64> = observed.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| observed.iter().map(|row| row[j]).sum()).collect();
    let total: f64 = row_sums.iter().sum();
    if row_sums.iter().any(|&s| s <= 0.0) || col_sums.iter().any(|&s| s <= 0.0) || total <= 0.0 {
        return Err(StatsError::ZeroExpectedCount);
    }
    let mut stat = 0.0;
    for i in 0..r {
        for j in 0..c {
            let e = row_sums[i] * col_sums[j] / total;
            stat += (observed[i][j] - e).powi(2) / e;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    let dist = ChiSquared::new(df).expect("df > 0");
    let p = dist.sf(stat).clamp(0.0, 1.0);
    Ok(GroupComparison {
        variable: String::new(),
        group_mean: f64::NAN,
        reference_mean: f64::NAN,
        statistic: stat,
        df,
        p,
        kind: TestKind::ChiSquare,
    })
}

/// Variance inflation factors; perfect collinearity reports `+inf`.
pub fn vif(predictors: &[(String, Vec<f64>)]) -> Result<Vec<(String, f64)>, StatsError> {
    let p = predictors.len();
    if p < 2 {
        return Err(StatsError::TooFewPredictors { need: 2, got: p });
    }
    let n = predictors[0].1.len();
    if predictors.iter().any(|(_, col)| col.len() != n) {
        return Err(StatsError::LengthMismatch);
    }
    if n <= p {
        return Err(StatsError::TooFewObservations { n, p });
    }
    let mut out = Vec::with_capacity(p);
    for j in 0..p {
        let y = &predictors[j].1;
        let mut design: Vec<Vec<f64>> = vec![vec![1.0; n]];
        for (i, (_, col)) in predictors.iter().enumerate() {
            if i != j {
                design.push(col.clone());
            }
        }
        let rss = householder_rss(&design, y);
        let my = y.iter().sum::<f64>() / n as f64;
        let tss: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
        if tss == 0.0 {
            out.push((predictors[j].0.clone(), f64::INFINITY));
            continue;
        }
        let r2 = 1.0 - rss / tss;
        let vif = if r2 >= 1.0 - 1e-12 { f64::INFINITY } else { 1.0 / (1.0 - r2) };
        out.push((predictors[j].0.clone(), vif.max(1.0)));
    }
    Ok(out)
}

/// Residual sum of squares of least-squares fit via Householder QR.
///
/// `columns` is the design matrix in column-major order.
fn householder_rss(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = y.len();
    let p = columns.len();
    // working copy: a[i][j], plus rhs
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    let mut b: Vec<f64> = y.to_vec();
    for k in 0..p.min(n) {
        let mut norm = 0.0;
        for i in k..n {
            norm += a[i][k] * a[i][k];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..p {
            let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * a[k + i][j]).sum();
            let f = 2.0 * dot / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                a[k + i][j] -= f * vi;
            }
        }
        let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * b[k + i]).sum();
        let f = 2.0 * dot / vnorm2;
        for (i, vi) in v.iter().enumerate() {
            b[k + i] -= f * vi;
        }
    }
    b[p.min(n)..].iter().map(|x| x * x).sum()
}

/// EJ comparison input: which variables to test and how.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EjVariable {
    pub name: String,
    pub kind: EjKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EjKind {
    Continuous,
    Categorical,
}

/// Per-variable outcome: a test result or a skip with its reason.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum EjOutcome {
    Tested(GroupComparison),
    Skipped { variable: String, reason: String },
}

/// Compare flagged (high-vulnerability) tracts against the complement.
///
/// Continuous variables get a Welch t test; categorical variables a
/// chi-square on the 2 x k table of category counts.
pub fn ej_compare(
    columns: &[(String, Vec<Option<f64>>, EjKind)],
    flags: &[bool],
) -> Result<Vec<EjOutcome>, StatsError> {
    let n_flagged = flags.iter().filter(|f| **f).count();
    if n_flagged < 2 || flags.len() - n_flagged < 2 {
        return Err(StatsError::TooFewValues { need: 2, got: n_flagged.min(flags.len() - n_flagged) });
    }
    let mut out = Vec::new();
    for (name, col, kind) in columns {
        if col.len() != flags.len() {
            return Err(StatsError::LengthMismatch);
        }
        match kind {
            EjKind::Continuous => {
                let group: Vec<f64> = col
                    .iter()
                    .zip(flags)
                    .filter(|(_, f)| **f)
                    .filter_map(|(v, _)| *v)
                    .collect();
                let rest: Vec<f64> = col
                    .iter()
                    .zip(flags)
                    .filter(|(_, f)| !**f)
                    .filter_map(|(v, _)| *v)
                    .collect();
                match welch_t(&group, &rest) {
                    Ok(mut cmp) => {
                        cmp.variable = name.clone();
                        out.push(EjOutcome::Tested(cmp));
                    }
                    Err(e) => out.push(EjOutcome::Skipped { variable: name.clone(), reason: e.to_string() }),
                }
            }
            EjKind::Categorical => {
                // category codes observed in the column, sorted
                let mut cats: Vec<i64> = col.iter().flatten().map(|v| v.round() as i64).collect();
                cats.sort_unstable();
                cats.dedup();
                if cats.len() < 2 {
                    out.push(EjOutcome::Skipped {
                        variable: name.clone(),
                        reason: "fewer than 2 categories observed".to_string(),
                    });
                    continue;
                }
                let mut table = vec![vec![0.0; cats.len()]; 2];
                for (v, f) in col.iter().zip(flags) {
                    if let Some(v) = v {
                        let idx = cats.iter().position(|c| *c == v.round() as i64).unwrap();
                        table[usize::from(!*f)][idx] += 1.0;
                    }
                }
                match chi_square(&table) {
                    Ok(mut cmp) => {
                        cmp.variable = name.clone();
                        out.push(EjOutcome::Tested(cmp));
                    }
                    Err(e) => out.push(EjOutcome::Skipped { variable: name.clone(), reason: e.to_string() }),
                }
            }
        }
    }
    Ok(out)
}
