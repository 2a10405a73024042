//! Source reading, identifier standardization, and table joining.
//!
//! Everything is keyed by the 11-digit GEOID (2-digit state + 3-digit
//! county + 6-digit tract). The join is inner: the analysis covers only
//! fully integrated tracts, and unmatched keys are logged in the join
//! report, never silently dropped.

mod geojson;
mod table;

pub use geojson::{
    geometry_to_multipolygon, multipolygon_to_geojson, read_city_boundary,
    read_feature_collection_geometry, read_tract_boundaries,
};
pub use table::read_attribute_table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{intersection_area, GeomError, MultiPolygon};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed GEOID component {component:?}: {reason}")]
    MalformedComponent { component: String, reason: String },
    #[error("parse error{}: {message}", feature.map(|i| format!(" at feature {i}")).unwrap_or_default())]
    ParseError { feature: Option<usize>, message: String },
    #[error("feature {index} is missing the GEOID property {property:?}")]
    MissingGeoidProperty { index: usize, property: String },
    #[error("duplicate GEOID {geoid:?}")]
    DuplicateGeoid { geoid: String },
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column {column:?}: {value:?}")]
    NonNumericCell { row: usize, column: String, value: String },
    #[error("join produced no rows: key sets are disjoint")]
    EmptyJoin,
    #[error("duplicate column name {0:?} within one source")]
    DuplicateColumn(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

/// Declared measurement kind of an attribute column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Count,
    RatePercent,
    CurrencyUsd,
    IndexScore,
    Categorical,
}

/// Risk direction of an indicator entering an index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    RiskIncreases,
    RiskDecreases,
}

/// Declarative description of one input variable.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub name: String,
    pub source_column: String,
    #[serde(default)]
    pub denominator_column: Option<String>,
    pub kind: ColumnKind,
    pub direction: Direction,
    #[serde(default)]
    pub winsorize: bool,
    #[serde(default)]
    pub log_if_skewed: bool,
}

/// One named attribute vector with provenance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub source: String,
    pub values: Vec<Option<f64>>,
}

/// Attribute rows keyed by GEOID, before geometry is attached.
#[derive(Clone, Debug)]
pub struct AttributeTable {
    pub source: String,
    pub geoids: Vec<String>,
    pub columns: Vec<Column>,
    /// Count of cells nulled during rate conversion (zero denominators or
    /// out-of-range rates).
    pub warnings: usize,
}

/// The joined analytical table: one row per tract, geometry plus typed
/// attribute columns. Immutable row set after the join; columns may be
/// appended by downstream stages.
#[derive(Clone, Debug)]
pub struct TractFrame {
    geoids: Vec<String>,
    geometry: Vec<MultiPolygon>,
    columns: Vec<Column>,
}

impl TractFrame {
    pub fn n_rows(&self) -> usize {
        self.geoids.len()
    }

    pub fn geoids(&self) -> &[String] {
        &self.geoids
    }

    pub fn geometry(&self) -> &[MultiPolygon] {
        &self.geometry
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Option<&[Option<f64>]> {
        self.column(name).map(|c| c.values.as_slice())
    }

    /// Add a column; the name must be unused and the length must match.
    pub fn add_column(&mut self, column: Column) -> Result<(), IngestError> {
        if self.column(&column.name).is_some() {
            return Err(IngestError::DuplicateColumn(column.name));
        }
        assert_eq!(column.values.len(), self.n_rows(), "column length mismatch");
        self.columns.push(column);
        Ok(())
    }

    /// Replace an existing column's values in place.
    pub fn replace_values(&mut self, name: &str, values: Vec<Option<f64>>) {
        assert_eq!(values.len(), self.geoids.len());
        let col = self
            .columns
            .iter_mut()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("unknown column {name}"));
        col.values = values;
    }

    /// Keep only rows whose geometry overlaps the city boundary with
    /// positive area. A tract touching only at a point or edge is dropped.
    pub fn subset_to_city(&self, city: &MultiPolygon) -> Result<TractFrame, IngestError> {
        let mut keep = Vec::with_capacity(self.n_rows());
        for geom in &self.geometry {
            keep.push(intersection_area(geom, city)? > 0.0);
        }
        Ok(self.filter_rows(&keep))
    }

    fn filter_rows(&self, keep: &[bool]) -> TractFrame {
        let pick = |i: usize| keep[i];
        TractFrame {
            geoids: self
                .geoids
                .iter()
                .enumerate()
                .filter(|(i, _)| pick(*i))
                .map(|(_, g)| g.clone())
                .collect(),
            geometry: self
                .geometry
                .iter()
                .enumerate()
                .filter(|(i, _)| pick(*i))
                .map(|(_, g)| g.clone())
                .collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    kind: c.kind,
                    source: c.source.clone(),
                    values: c
                        .values
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| pick(*i))
                        .map(|(_, v)| *v)
                        .collect(),
                })
                .collect(),
        }
    }

    /// Geometry map keyed by geoid (borrowed clones), for contiguity.
    pub fn geometry_map(&self) -> BTreeMap<String, MultiPolygon> {
        self.geoids
            .iter()
            .cloned()
            .zip(self.geometry.iter().cloned())
            .collect()
    }
}

/// Standardized 11-digit identifier from state/county/tract components.
///
/// Digit-only components narrower than their width are left-padded with
/// zeros (numeric sources drop leading zeros routinely).
pub fn make_geoid(state: &str, county: &str, tract: &str) -> Result<String, IngestError> {
    let pad = |raw: &str, width: usize, what: &str| -> Result<String, IngestError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() || !trimmed.chars().all(|c| c.is_ascii_digit()) {
            return Err(IngestError::MalformedComponent {
                component: raw.to_string(),
                reason: format!("{what} must be digits only"),
            });
        }
        if trimmed.len() > width {
            return Err(IngestError::MalformedComponent {
                component: raw.to_string(),
                reason: format!("{what} wider than {width} digits"),
            });
        }
        Ok(format!("{trimmed:0>width$}"))
    };
    Ok(format!(
        "{}{}{}",
        pad(state, 2, "state")?,
        pad(county, 3, "county")?,
        pad(tract, 6, "tract")?
    ))
}

/// Inverse of [`make_geoid`] on valid 11-digit identifiers.
pub fn split_geoid(geoid: &str) -> Result<(String, String, String), IngestError> {
    if geoid.len() != 11 || !geoid.chars().all(|c| c.is_ascii_digit()) {
        return Err(IngestError::MalformedComponent {
            component: geoid.to_string(),
            reason: "GEOID must be exactly 11 digits".to_string(),
        });
    }
    Ok((geoid[0..2].to_string(), geoid[2..5].to_string(), geoid[5..11].to_string()))
}

/// Join diagnostics: what failed to match and what was renamed.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct JoinReport {
    /// Keys present in a source but not in the joined result, per source.
    pub unmatched: BTreeMap<String, Vec<String>>,
    /// Columns renamed to resolve duplicates: (old, new).
    pub renamed: Vec<(String, String)>,
    pub rows_joined: usize,
}

/// Inner join of boundaries with attribute tables on GEOID.
///
/// Duplicate column names across sources are disambiguated with a
/// deterministic `__<source>` suffix (both occurrences are renamed).
pub fn join_sources(
    boundaries: &BTreeMap<String, MultiPolygon>,
    tables: &[AttributeTable],
) -> Result<(TractFrame, JoinReport), IngestError> {
    // intersection of key sets, in sorted order
    let mut keys: Vec<String> = boundaries.keys().cloned().collect();
    for t in tables {
        let set: std::collections::BTreeSet<&str> = t.geoids.iter().map(|s| s.as_str()).collect();
        keys.retain(|k| set.contains(k.as_str()));
    }
    if keys.is_empty() {
        return Err(IngestError::EmptyJoin);
    }

    let mut report = JoinReport { rows_joined: keys.len(), ..Default::default() };
    let keyset: std::collections::BTreeSet<&str> = keys.iter().map(|s| s.as_str()).collect();
    let boundary_unmatched: Vec<String> = boundaries
        .keys()
        .filter(|k| !keyset.contains(k.as_str()))
        .cloned()
        .collect();
    if !boundary_unmatched.is_empty() {
        report.unmatched.insert("boundaries".to_string(), boundary_unmatched);
    }
    for t in tables {
        let mut un: Vec<String> = t
            .geoids
            .iter()
            .filter(|k| !keyset.contains(k.as_str()))
            .cloned()
            .collect();
        un.sort();
        if !un.is_empty() {
            report.unmatched.insert(t.source.clone(), un);
        }
    }

    // column name collisions across sources get a deterministic suffix
    let mut name_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tables {
        for c in &t.columns {
            *name_counts.entry(c.name.as_str()).or_default() += 1;
        }
    }

    let mut columns = Vec::new();
    for t in tables {
        let index_of: BTreeMap<&str, usize> = t
            .geoids
            .iter()
            .enumerate()
            .map(|(i, g)| (g.as_str(), i))
            .collect();
        for c in &t.columns {
            let name = if name_counts[c.name.as_str()] > 1 {
                let renamed = format!("{}__{}", c.name, t.source);
                report.renamed.push((c.name.clone(), renamed.clone()));
                renamed
            } else {
                c.name.clone()
            };
            if columns.iter().any(|existing: &Column| existing.name == name) {
                return Err(IngestError::DuplicateColumn(name));
            }
            columns.push(Column {
                name,
                kind: c.kind,
                source: t.source.clone(),
                values: keys.iter().map(|k| c.values[index_of[k.as_str()]]).collect(),
            });
        }
    }

    let geometry = keys.iter().map(|k| boundaries[k].clone()).collect();
    Ok((TractFrame { geoids: keys, geometry, columns }, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Crs;

    #[test]
    fn geoid_paper_example() {
        assert_eq!(make_geoid("37", "081", "010600").unwrap(), "37081010600");
    }

    #[test]
    fn geoid_numeric_padding() {
        assert_eq!(make_geoid("37", "81", "10600").unwrap(), "37081010600");
    }

    #[test]
    fn geoid_rejects_non_digits() {
        assert!(matches!(
            make_geoid("37", "81A", "010600"),
            Err(IngestError::MalformedComponent { .. })
        ));
    }

    #[test]
    fn geoid_rejects_overwide() {
        assert!(matches!(
            make_geoid("371", "081", "010600"),
            Err(IngestError::MalformedComponent { .. })
        ));
    }

    #[test]
    fn split_then_make_is_identity() {
        for geoid in ["37081010600", "01001000100", "99999999999"] {
            let (s, c, t) = split_geoid(geoid).unwrap();
            assert_eq!(make_geoid(&s, &c, &t).unwrap(), geoid);
        }
    }

    fn table(source: &str, keys: &[&str], col: &str, base: f64) -> AttributeTable {
        AttributeTable {
            source: source.to_string(),
            geoids: keys.iter().map(|s| s.to_string()).collect(),
            columns: vec![Column {
                name: col.to_string(),
                kind: ColumnKind::RatePercent,
                source: source.to_string(),
                values: keys.iter().enumerate().map(|(i, _)| Some(base + i as f64)).collect(),
            }],
            warnings: 0,
        }
    }

    fn boundaries(keys: &[&str]) -> BTreeMap<String, MultiPolygon> {
        keys.iter()
            .enumerate()
            .map(|(i, k)| {
                (
                    k.to_string(),
                    MultiPolygon::rect(i as f64, 0.0, i as f64 + 1.0, 1.0, Crs::WebMercator),
                )
            })
            .collect()
    }

    #[test]
    fn inner_join_reports_unmatched() {
        let b = boundaries(&["11111111111", "22222222222", "33333333333"]);
        let t = table("acs", &["11111111111", "22222222222"], "poverty_rate", 10.0);
        let (frame, report) = join_sources(&b, &[t]).unwrap();
        assert_eq!(frame.n_rows(), 2);
        assert_eq!(report.unmatched["boundaries"], vec!["33333333333".to_string()]);
        assert_eq!(report.rows_joined, 2);
    }

    #[test]
    fn duplicate_columns_get_source_suffix() {
        let b = boundaries(&["11111111111", "22222222222"]);
        let t1 = table("src1", &["11111111111", "22222222222"], "poverty_rate", 10.0);
        let t2 = table("src2", &["11111111111", "22222222222"], "poverty_rate", 50.0);
        let (frame, report) = join_sources(&b, &[t1, t2]).unwrap();
        assert!(frame.column("poverty_rate__src1").is_some());
        assert!(frame.column("poverty_rate__src2").is_some());
        assert_eq!(report.renamed.len(), 2);
    }

    #[test]
    fn disjoint_keys_empty_join() {
        let b = boundaries(&["11111111111"]);
        let t = table("acs", &["22222222222"], "x", 0.0);
        assert!(matches!(join_sources(&b, &[t]), Err(IngestError::EmptyJoin)));
    }

    #[test]
    fn join_is_order_insensitive_in_content() {
        let b = boundaries(&["11111111111", "22222222222", "33333333333"]);
        let t1 = table("a", &["22222222222", "11111111111", "33333333333"], "x", 1.0);
        let t2 = table("b", &["33333333333", "22222222222", "11111111111"], "y", 9.0);
        let (f1, _) = join_sources(&b, &[t1.clone(), t2.clone()]).unwrap();
        let (f2, _) = join_sources(&b, &[t2, t1]).unwrap();
        assert_eq!(f1.geoids(), f2.geoids());
        assert_eq!(f1.values("x"), f2.values("x"));
        assert_eq!(f1.values("y"), f2.values("y"));
    }

    #[test]
    fn every_row_fully_joined() {
        let b = boundaries(&["11111111111", "22222222222"]);
        let t1 = table("a", &["11111111111", "22222222222"], "x", 1.0);
        let t2 = table("b", &["22222222222", "11111111111"], "y", 2.0);
        let (frame, _) = join_sources(&b, &[t1, t2]).unwrap();
        for c in frame.columns() {
            assert!(c.values.iter().all(|v| v.is_some()));
        }
        assert_eq!(frame.geometry().len(), frame.n_rows());
    }

    #[test]
    fn subset_keeps_positive_area_overlap_only() {
        let b = boundaries(&["11111111111", "22222222222", "33333333333"]);
        let t = table(
            "a",
            &["11111111111", "22222222222", "33333333333"],
            "x",
            1.0,
        );
        let (frame, _) = join_sources(&b, &[t]).unwrap();
        // city covers tract 0 fully and half of tract 1; touches tract 2 only
        // along the shared edge x = 2 (zero area, dropped)
        let city = MultiPolygon::rect(0.0, 0.0, 2.0, 1.0, Crs::WebMercator);
        let sub = frame.subset_to_city(&city).unwrap();
        assert_eq!(sub.geoids(), &["11111111111".to_string(), "22222222222".to_string()]);
    }
}
