//! Delimited attribute-table reading with count-to-rate conversion.

use std::path::Path;

use super::{AttributeTable, Column, ColumnKind, IndicatorSpec, IngestError};

/// Read a UTF-8 CSV with a header row into the spec'd indicator columns.
///
/// Count indicators with a denominator column are converted to percentage
/// rates. A zero denominator yields a missing value (counted as a warning),
/// never a division error; rates outside [0, 100] are treated the same way.
pub fn read_attribute_table(
    path: &Path,
    source: &str,
    specs: &[IndicatorSpec],
    geoid_column: &str,
) -> Result<AttributeTable, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| IngestError::ParseError { feature: None, message: e.to_string() })?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::ParseError { feature: None, message: e.to_string() })?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let col_index = |name: &str| -> Result<usize, IngestError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
    };

    let geoid_idx = col_index(geoid_column)?;
    let mut plan = Vec::with_capacity(specs.len());
    for spec in specs {
        let src = col_index(&spec.source_column)?;
        let den = match &spec.denominator_column {
            Some(d) => Some(col_index(d)?),
            None => None,
        };
        plan.push((spec, src, den));
    }

    let mut geoids: Vec<String> = Vec::new();
    let mut raw_rows: Vec<csv::StringRecord> = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| IngestError::ParseError { feature: Some(row_no), message: e.to_string() })?;
        geoids.push(record.get(geoid_idx).unwrap_or("").trim().to_string());
        raw_rows.push(record);
    }

    let parse_cell = |record: &csv::StringRecord,
                      row: usize,
                      idx: usize|
     -> Result<Option<f64>, IngestError> {
        let raw = record.get(idx).unwrap_or("").trim();
        if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("null") {
            return Ok(None);
        }
        raw.parse::<f64>().map(Some).map_err(|_| IngestError::NonNumericCell {
            row,
            column: headers[idx].clone(),
            value: raw.to_string(),
        })
    };

    let mut warnings = 0usize;
    let mut columns = Vec::with_capacity(plan.len());
    for (spec, src_idx, den_idx) in plan {
        let mut values = Vec::with_capacity(raw_rows.len());
        for (row, record) in raw_rows.iter().enumerate() {
            let numerator = parse_cell(record, row, src_idx)?;
            let value = match (den_idx, numerator) {
                (Some(di), Some(num)) => match parse_cell(record, row, di)? {
                    Some(den) if den > 0.0 => {
                        let rate = num / den * 100.0;
                        if (0.0..=100.0 + 1e-9).contains(&rate) {
                            Some(rate.min(100.0))
                        } else {
                            warnings += 1;
                            None
                        }
                    }
                    Some(_) => {
                        warnings += 1;
                        None
                    }
                    None => None,
                },
                (None, v) => v,
                (Some(_), None) => None,
            };
            values.push(value);
        }
        let kind = if spec.denominator_column.is_some() { ColumnKind::RatePercent } else { spec.kind };
        columns.push(Column {
            name: spec.name.clone(),
            kind,
            source: source.to_string(),
            values,
        });
    }

    Ok(AttributeTable { source: source.to_string(), geoids, columns, warnings })
}
