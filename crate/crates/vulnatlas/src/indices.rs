//! Flood-exposure overlay and composite vulnerability scores.
//!
//! The flood layer is buffered (1 m by default, a gap-closing device) and
//! unioned before intersection so overlapping flood polygons are never
//! double-counted. Domain scores are unweighted means of 0-100 normalized
//! indicators; the composite is their weighted average.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{buffer, intersection_area, polygon_area, GeomError, MultiPolygon};
use crate::preprocess::quantile_sorted;

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("tract has zero area")]
    ZeroAreaTract,
    #[error("column {column:?} has a value outside [0, 100] at row {row}: {value}")]
    UnnormalizedInput { column: String, row: usize, value: f64 },
    #[error("column {column:?} has a missing value at row {row}")]
    MissingValues { column: String, row: usize },
    #[error("weights must be strictly positive and sum to 1 (got {wh} + {ws})")]
    WeightSumInvalid { wh: f64, ws: f64 },
    #[error("need at least 10 tracts for a decile flag, got {got}")]
    TooFewTracts { got: usize },
    #[error("column lengths differ")]
    LengthMismatch,
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// Health/socio indicator lists and composite weights.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexConfig {
    pub health_indicators: Vec<String>,
    pub socio_indicators: Vec<String>,
    #[serde(default = "default_weight_health")]
    pub weight_health: f64,
    #[serde(default = "default_weight_socio")]
    pub weight_socio: f64,
}

fn default_weight_health() -> f64 {
    0.6
}

fn default_weight_socio() -> f64 {
    0.4
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            health_indicators: [
                "asthma_pct",
                "copd_pct",
                "chd_pct",
                "poor_fair_health_pct",
                "disability_pct",
            ]
            .map(String::from)
            .to_vec(),
            socio_indicators: [
                "poverty_rate",
                "renter_rate",
                "no_diploma_rate",
                "no_vehicle_rate",
            ]
            .map(String::from)
            .to_vec(),
            weight_health: 0.6,
            weight_socio: 0.4,
        }
    }
}

impl IndexConfig {
    pub fn validate_weights(&self) -> Result<(), IndexError> {
        let (wh, ws) = (self.weight_health, self.weight_socio);
        if !(wh > 0.0 && ws > 0.0 && (wh + ws - 1.0).abs() <= 1e-12) {
            return Err(IndexError::WeightSumInvalid { wh, ws });
        }
        Ok(())
    }
}

/// Per-tract derived scores.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VulnProfile {
    pub flood_exposure: Vec<f64>,
    pub health_score: Vec<f64>,
    pub socio_score: Vec<f64>,
    pub composite: Vec<f64>,
    pub top_decile: Vec<bool>,
}

/// Percent of tract area inside the buffered flood layer, clipped to
/// [0, 100].
pub fn flood_exposure(
    tract: &MultiPolygon,
    flood_layer: &MultiPolygon,
    buffer_m: f64,
) -> Result<f64, IndexError> {
    let total = polygon_area(tract)?;
    if total <= 0.0 {
        return Err(IndexError::ZeroAreaTract);
    }
    let buffered = buffer(flood_layer, buffer_m)?;
    let flooded = intersection_area(tract, &buffered)?;
    Ok((100.0 * flooded / total).clamp(0.0, 100.0))
}

/// Unweighted mean of k normalized indicator columns per tract.
///
/// Inputs must already be on the 0-100 scale with higher = worse and no
/// missing values.
pub fn domain_score(columns: &[(String, Vec<Option<f64>>)]) -> Result<Vec<f64>, IndexError> {
    assert!(!columns.is_empty(), "need at least one indicator column");
    let n = columns[0].1.len();
    if columns.iter().any(|(_, c)| c.len() != n) {
        return Err(IndexError::LengthMismatch);
    }
    for (name, col) in columns {
        for (row, v) in col.iter().enumerate() {
            match v {
                None => return Err(IndexError::MissingValues { column: name.clone(), row }),
                Some(v) if !(-1e-9..=100.0 + 1e-9).contains(v) => {
                    return Err(IndexError::UnnormalizedInput { column: name.clone(), row, value: *v })
                }
                _ => {}
            }
        }
    }
    let k = columns.len() as f64;
    Ok((0..n)
        .map(|i| columns.iter().map(|(_, c)| c[i].unwrap()).sum::<f64>() / k)
        .collect())
}

/// `V = w_H * H + w_S * S` per tract.
pub fn composite_index(
    health: &[f64],
    socio: &[f64],
    weight_health: f64,
    weight_socio: f64,
) -> Result<Vec<f64>, IndexError> {
    if health.len() != socio.len() {
        return Err(IndexError::LengthMismatch);
    }
    if !(weight_health > 0.0 && weight_socio > 0.0 && (weight_health + weight_socio - 1.0).abs() <= 1e-12)
    {
        return Err(IndexError::WeightSumInvalid { wh: weight_health, ws: weight_socio });
    }
    Ok(health
        .iter()
        .zip(socio)
        .map(|(h, s)| weight_health * h + weight_socio * s)
        .collect())
}

/// Flag tracts at or above the 90th percentile of the composite.
///
/// Ties at the cutoff are all included: an equity-targeting list errs
/// toward inclusion.
pub fn top_decile(composite: &[f64]) -> Result<Vec<bool>, IndexError> {
    if composite.len() < 10 {
        return Err(IndexError::TooFewTracts { got: composite.len() });
    }
    let mut sorted = composite.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let cutoff = quantile_sorted(&sorted, 0.9);
    Ok(composite.iter().map(|&v| v >= cutoff).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Crs;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> MultiPolygon {
        MultiPolygon::rect(x0, y0, x1, y1, Crs::WebMercator)
    }

    #[test]
    fn flood_full_coverage_is_100() {
        let tract = rect(0.0, 0.0, 1000.0, 1000.0);
        let flood = rect(-10.0, -10.0, 1010.0, 1010.0);
        let pct = flood_exposure(&tract, &flood, 1.0).unwrap();
        assert_eq!(pct, 100.0);
    }

    #[test]
    fn flood_disjoint_is_0() {
        let tract = rect(0.0, 0.0, 1000.0, 1000.0);
        let flood = rect(5000.0, 5000.0, 6000.0, 6000.0);
        assert_eq!(flood_exposure(&tract, &flood, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn flood_half_coverage_with_buffer_inflation() {
        // 1000 m tract, flood covers the left half; the 1 m buffer inflates
        // the shared edge by ~0.1 percentage points
        let tract = rect(0.0, 0.0, 1000.0, 1000.0);
        let flood = rect(-50.0, -50.0, 500.0, 1050.0);
        let pct = flood_exposure(&tract, &flood, 1.0).unwrap();
        assert!((pct - 50.0).abs() < 0.2, "pct = {pct}");
        let exact = flood_exposure(&tract, &flood, 0.0).unwrap();
        assert!((exact - 50.0).abs() < 1e-9 * 50.0, "exact = {exact}");
    }

    #[test]
    fn flood_zero_area_tract_rejected() {
        let sliver = MultiPolygon::from_polygon(
            crate::geom::GeoPolygon::new(
                vec![
                    crate::geom::Pt::new(0.0, 0.0),
                    crate::geom::Pt::new(1.0, 0.0),
                    crate::geom::Pt::new(2.0, 0.0),
                    crate::geom::Pt::new(1.0, 0.0),
                ],
                vec![],
                Crs::WebMercator,
            )
            .unwrap(),
        );
        let flood = rect(0.0, 0.0, 1.0, 1.0);
        assert_eq!(flood_exposure(&sliver, &flood, 1.0).unwrap_err(), IndexError::ZeroAreaTract);
    }

    #[test]
    fn overlapping_flood_parts_not_double_counted() {
        let tract = rect(0.0, 0.0, 100.0, 100.0);
        // two identical flood rectangles covering the same left half
        let a = crate::geom::GeoPolygon::rect(0.0, 0.0, 50.0, 100.0, Crs::WebMercator);
        let b = crate::geom::GeoPolygon::rect(0.0, 0.0, 50.0, 100.0, Crs::WebMercator);
        let flood = MultiPolygon::new(vec![a, b]).unwrap();
        let pct = flood_exposure(&tract, &flood, 1.0).unwrap();
        assert!(pct < 52.5, "duplicated flood polygons double-counted: {pct}");
    }

    #[test]
    fn domain_score_equal_weights() {
        let cols: Vec<(String, Vec<Option<f64>>)> = (0..5)
            .map(|i| (format!("c{i}"), vec![Some(40.0), Some(if i == 4 { 100.0 } else { 0.0 })]))
            .collect();
        let scores = domain_score(&cols).unwrap();
        assert_eq!(scores[0], 40.0);
        assert_eq!(scores[1], 20.0);
    }

    #[test]
    fn domain_score_rejects_unnormalized() {
        let cols = vec![("c".to_string(), vec![Some(250.0)])];
        assert!(matches!(
            domain_score(&cols),
            Err(IndexError::UnnormalizedInput { .. })
        ));
    }

    #[test]
    fn domain_score_rejects_missing() {
        let cols = vec![("c".to_string(), vec![Some(10.0), None])];
        assert!(matches!(domain_score(&cols), Err(IndexError::MissingValues { row: 1, .. })));
    }

    #[test]
    fn composite_examples() {
        assert_eq!(composite_index(&[100.0], &[100.0], 0.6, 0.4).unwrap(), vec![100.0]);
        let v = composite_index(&[50.0], &[0.0], 0.6, 0.4).unwrap();
        assert!((v[0] - 30.0).abs() < 1e-12);
        assert!(matches!(
            composite_index(&[1.0], &[1.0], 0.5, 0.6),
            Err(IndexError::WeightSumInvalid { .. })
        ));
    }

    #[test]
    fn composite_is_convex_and_swap_symmetric() {
        let h = [10.0, 80.0, 45.0];
        let s = [90.0, 20.0, 45.0];
        let v = composite_index(&h, &s, 0.6, 0.4).unwrap();
        for i in 0..3 {
            assert!(v[i] >= h[i].min(s[i]) - 1e-12 && v[i] <= h[i].max(s[i]) + 1e-12);
        }
        let swapped = composite_index(&s, &h, 0.4, 0.6).unwrap();
        for (a, b) in v.iter().zip(&swapped) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn top_decile_distinct_hundred() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let flags = top_decile(&v).unwrap();
        assert_eq!(flags.iter().filter(|f| **f).count(), 10);
        assert!(flags[99] && flags[90] && !flags[89]);
    }

    #[test]
    fn top_decile_all_equal_marks_all() {
        let v = vec![7.0; 20];
        let flags = top_decile(&v).unwrap();
        assert!(flags.iter().all(|f| *f));
    }

    #[test]
    fn top_decile_too_few() {
        assert!(matches!(
            top_decile(&[1.0, 2.0, 3.0, 4.0, 5.0]),
            Err(IndexError::TooFewTracts { got: 5 })
        ));
    }
}
