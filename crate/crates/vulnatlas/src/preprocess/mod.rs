//! Column-wise cleaning and scaling.
//!
//! One quantile rule is used everywhere (linear interpolation at position
//! `p * (n - 1)` over the order statistics) so Tukey fences, Winsorization
//! cutoffs, and quartile bins stay mutually consistent. Missing values are
//! excluded from all statistics and passed through transforms as missing.

mod shapiro;

pub use shapiro::shapiro_wilk;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("need at least {need} non-missing values, got {got}")]
    TooFewValues { need: usize, got: usize },
    #[error("percentiles must satisfy 0 <= lower < upper <= 100")]
    InvalidPercentiles,
    #[error("column has zero variance")]
    ZeroVariance,
    #[error("column is degenerate: max equals min")]
    DegenerateColumn,
    #[error("Shapiro-Wilk requires 3 <= n <= 5000, got {got}")]
    SampleSizeOutOfRange { got: usize },
}

/// `Some` values participate in statistics; `None` passes through.
pub type ColumnData = Vec<Option<f64>>;

fn present(x: &[Option<f64>]) -> Vec<f64> {
    x.iter().filter_map(|v| *v).collect()
}

/// Quantile by linear interpolation at position `p * (n - 1)`.
///
/// `sorted` must be ascending and non-empty; `p` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

fn sorted_present(x: &[Option<f64>]) -> Vec<f64> {
    let mut v = present(x);
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Per-column summary statistics (population sd; optional normality test).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnStats {
    pub n: usize,
    pub mean: f64,
    pub sd_population: f64,
    pub min: f64,
    pub max: f64,
    pub q1: f64,
    pub q3: f64,
    pub skewness: Option<f64>,
    pub shapiro_w: Option<f64>,
    pub shapiro_p: Option<f64>,
}

pub fn column_stats(x: &[Option<f64>]) -> Result<ColumnStats, PreprocessError> {
    let vals = sorted_present(x);
    let n = vals.len();
    if n < 1 {
        return Err(PreprocessError::TooFewValues { need: 1, got: 0 });
    }
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let skew = skewness(x).ok();
    let (sw, sp) = if (3..=5000).contains(&n) && var > 0.0 {
        let unsorted = present(x);
        match shapiro_wilk(&unsorted) {
            Ok((w, p)) => (Some(w), Some(p)),
            Err(_) => (None, None),
        }
    } else {
        (None, None)
    };
    Ok(ColumnStats {
        n,
        mean,
        sd_population: var.sqrt(),
        min: vals[0],
        max: vals[n - 1],
        q1: quantile_sorted(&vals, 0.25),
        q3: quantile_sorted(&vals, 0.75),
        skewness: skew,
        shapiro_w: sw,
        shapiro_p: sp,
    })
}

/// Flag values outside `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`. Missing values are
/// never flagged.
pub fn tukey_fences(x: &[Option<f64>]) -> Result<Vec<bool>, PreprocessError> {
    let vals = sorted_present(x);
    if vals.len() < 4 {
        return Err(PreprocessError::TooFewValues { need: 4, got: vals.len() });
    }
    let q1 = quantile_sorted(&vals, 0.25);
    let q3 = quantile_sorted(&vals, 0.75);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    Ok(x.iter().map(|v| matches!(v, Some(v) if *v < lo || *v > hi)).collect())
}

/// Replace values beyond the percentile cutoffs by the cutoffs.
///
/// Each cutoff is the interpolated quantile snapped down to the largest
/// order statistic not exceeding it. When `p * (n - 1)` is integral the snap
/// is a no-op and the cutoff is the plain interpolated quantile; the snap is
/// what makes Winsorization idempotent (an interpolated cutoff sitting
/// strictly between order statistics would keep shrinking on re-application).
pub fn winsorize(
    x: &[Option<f64>],
    lower_pct: f64,
    upper_pct: f64,
) -> Result<(ColumnData, WinsorCuts), PreprocessError> {
    if !(0.0..=100.0).contains(&lower_pct) || !(0.0..=100.0).contains(&upper_pct) || lower_pct >= upper_pct {
        return Err(PreprocessError::InvalidPercentiles);
    }
    let vals = sorted_present(x);
    if vals.is_empty() {
        return Err(PreprocessError::TooFewValues { need: 1, got: 0 });
    }
    let snap_down = |q: f64| -> f64 {
        match vals.iter().rev().find(|v| **v <= q) {
            Some(v) => *v,
            None => vals[0],
        }
    };
    let cuts = WinsorCuts {
        lower_pct,
        upper_pct,
        lower_cut: snap_down(quantile_sorted(&vals, lower_pct / 100.0)),
        upper_cut: snap_down(quantile_sorted(&vals, upper_pct / 100.0)),
    };
    Ok((cuts.apply(x), cuts))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct WinsorCuts {
    pub lower_pct: f64,
    pub upper_pct: f64,
    pub lower_cut: f64,
    pub upper_cut: f64,
}

impl WinsorCuts {
    pub fn apply(&self, x: &[Option<f64>]) -> ColumnData {
        x.iter()
            .map(|v| v.map(|v| v.clamp(self.lower_cut, self.upper_cut)))
            .collect()
    }
}

/// Adjusted Fisher-Pearson sample skewness
/// `G1 = [n^2 / ((n-1)(n-2))] * m3 / s^3` with `s` the sample sd.
pub fn skewness(x: &[Option<f64>]) -> Result<f64, PreprocessError> {
    let vals = present(x);
    let n = vals.len();
    if n < 3 {
        return Err(PreprocessError::TooFewValues { need: 3, got: n });
    }
    let nf = n as f64;
    let mean = vals.iter().sum::<f64>() / nf;
    let m2 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let m3 = vals.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let s = (m2 * nf / (nf - 1.0)).sqrt();
    if s == 0.0 {
        return Err(PreprocessError::ZeroVariance);
    }
    Ok(nf * nf / ((nf - 1.0) * (nf - 2.0)) * m3 / s.powi(3))
}

/// Outcome of the conditional log transform.
#[derive(Clone, Debug, PartialEq)]
pub struct LogDecision {
    pub applied: bool,
    /// Set when the skew rule fired but negatives blocked the transform.
    pub skipped_negative: bool,
}

/// Apply `ln(x + 1)` when `|G1| > 1` and all values are non-negative.
pub fn log_transform_if_skewed(x: &[Option<f64>]) -> (ColumnData, LogDecision) {
    let skew = match skewness(x) {
        Ok(g1) => g1,
        Err(_) => {
            return (x.to_vec(), LogDecision { applied: false, skipped_negative: false });
        }
    };
    if skew.abs() <= 1.0 {
        return (x.to_vec(), LogDecision { applied: false, skipped_negative: false });
    }
    let has_negative = x.iter().flatten().any(|v| *v < 0.0);
    if has_negative {
        return (x.to_vec(), LogDecision { applied: false, skipped_negative: true });
    }
    let out = x.iter().map(|v| v.map(|v| (v + 1.0).ln())).collect();
    (out, LogDecision { applied: true, skipped_negative: false })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct MinMaxParams {
    pub min: f64,
    pub max: f64,
}

impl MinMaxParams {
    pub fn apply(&self, x: &[Option<f64>]) -> ColumnData {
        x.iter()
            .map(|v| v.map(|v| (v - self.min) / (self.max - self.min) * 100.0))
            .collect()
    }
}

/// Min-max normalization to the 0-100 scale.
pub fn minmax_normalize(x: &[Option<f64>]) -> Result<(ColumnData, MinMaxParams), PreprocessError> {
    let vals = present(x);
    if vals.is_empty() {
        return Err(PreprocessError::TooFewValues { need: 1, got: 0 });
    }
    let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(PreprocessError::DegenerateColumn);
    }
    let params = MinMaxParams { min, max };
    Ok((params.apply(x), params))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ZscoreParams {
    pub mean: f64,
    pub sd: f64,
}

impl ZscoreParams {
    pub fn apply(&self, x: &[Option<f64>]) -> ColumnData {
        x.iter().map(|v| v.map(|v| (v - self.mean) / self.sd)).collect()
    }
}

/// Standardize with population sd (divide by n).
pub fn zscore(x: &[Option<f64>]) -> Result<(ColumnData, ZscoreParams), PreprocessError> {
    let vals = present(x);
    if vals.is_empty() {
        return Err(PreprocessError::TooFewValues { need: 1, got: 0 });
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd == 0.0 {
        return Err(PreprocessError::ZeroVariance);
    }
    let params = ZscoreParams { mean, sd };
    Ok((params.apply(x), params))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quartile {
    Q1,
    Q2,
    Q3,
    Q4,
}

impl std::fmt::Display for Quartile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Quartile::Q1 => write!(f, "Q1"),
            Quartile::Q2 => write!(f, "Q2"),
            Quartile::Q3 => write!(f, "Q3"),
            Quartile::Q4 => write!(f, "Q4"),
        }
    }
}

/// Bin values by quartile cutoffs; ties at a cutoff go to the lower bin.
pub fn quartile_bins(x: &[Option<f64>]) -> Result<Vec<Option<Quartile>>, PreprocessError> {
    let vals = sorted_present(x);
    if vals.len() < 4 {
        return Err(PreprocessError::TooFewValues { need: 4, got: vals.len() });
    }
    let q1 = quantile_sorted(&vals, 0.25);
    let q2 = quantile_sorted(&vals, 0.50);
    let q3 = quantile_sorted(&vals, 0.75);
    Ok(x.iter()
        .map(|v| {
            v.map(|v| {
                if v <= q1 {
                    Quartile::Q1
                } else if v <= q2 {
                    Quartile::Q2
                } else if v <= q3 {
                    Quartile::Q3
                } else {
                    Quartile::Q4
                }
            })
        })
        .collect())
}

/// One replayable transform step with parameters frozen at fit time.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum TransformStep {
    Winsorize(WinsorCuts),
    Log1p,
    /// Reflect a 0-100 column: `100 - x` (protective-direction indicators).
    Reflect,
    MinMax(MinMaxParams),
    Zscore(ZscoreParams),
}

impl TransformStep {
    pub fn apply(&self, x: &[Option<f64>]) -> ColumnData {
        match self {
            TransformStep::Winsorize(cuts) => cuts.apply(x),
            TransformStep::Log1p => x.iter().map(|v| v.map(|v| (v + 1.0).ln())).collect(),
            TransformStep::Reflect => x.iter().map(|v| v.map(|v| 100.0 - v)).collect(),
            TransformStep::MinMax(p) => p.apply(x),
            TransformStep::Zscore(p) => p.apply(x),
        }
    }
}

/// Ordered, replayable record of the transforms applied to one column.
///
/// Applying the record to the original raw column reproduces the stored
/// transformed column exactly.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
pub struct TransformRecord {
    pub column: String,
    pub steps: Vec<TransformStep>,
}

impl TransformRecord {
    pub fn new(column: impl Into<String>) -> Self {
        TransformRecord { column: column.into(), steps: Vec::new() }
    }

    pub fn push(&mut self, step: TransformStep) {
        self.steps.push(step);
    }

    /// Replay every step in order on raw input.
    pub fn replay(&self, raw: &[Option<f64>]) -> ColumnData {
        let mut cur = raw.to_vec();
        for step in &self.steps {
            cur = step.apply(&cur);
        }
        cur
    }
}
