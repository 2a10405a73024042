//! Census ACS API client.
//!
//! The API returns a JSON array of arrays: a header row of the requested
//! variable codes plus `state`/`county`/`tract`, then one row per tract.
//! Output is a CSV with a reconstructed 11-digit GEOID column, rows sorted
//! by GEOID so re-runs write identical bytes for identical queries.

use serde_json::Value;

use super::{classify_status, get_with_retry, io_err, AcquireError, FetchJob, Transport};
use crate::ingest::make_geoid;

/// Environment variable holding the census API key.
pub const CENSUS_API_KEY_VAR: &str = "CENSUS_API_KEY";

pub fn acs_url(job: &FetchJob, api_key: Option<&str>) -> String {
    let q = &job.query;
    let base = if q.base_url.is_empty() {
        format!("https://api.census.gov/data/{}/acs/acs5", q.year)
    } else {
        q.base_url.clone()
    };
    let mut url = format!(
        "{base}?get={vars}&for=tract:*&in=state:{state}%20county:{county}",
        vars = q.variables.join(","),
        state = q.state,
        county = q.county,
    );
    if let Some(key) = api_key {
        url.push_str("&key=");
        url.push_str(key);
    }
    url
}

/// Fetch ACS variables for every tract of one county and write a CSV.
pub fn fetch_acs(transport: &dyn Transport, job: &FetchJob) -> Result<(), AcquireError> {
    assert!(!job.query.variables.is_empty(), "ACS variable list must be non-empty");
    let key = std::env::var(CENSUS_API_KEY_VAR).ok();
    let url = acs_url(job, key.as_deref());
    let resp = get_with_retry(transport, &url, &job.retry)?;
    let body = classify_status(resp, &url)?;

    let rows: Vec<Vec<String>> = serde_json::from_str::<Value>(&body)
        .map_err(|e| AcquireError::MalformedResponse { url: url.clone(), message: e.to_string() })
        .and_then(|v| {
            v.as_array()
                .map(|rows| {
                    rows.iter()
                        .map(|row| {
                            row.as_array()
                                .map(|cells| {
                                    cells
                                        .iter()
                                        .map(|c| match c {
                                            Value::String(s) => s.clone(),
                                            other => other.to_string(),
                                        })
                                        .collect::<Vec<String>>()
                                })
                                .unwrap_or_default()
                        })
                        .collect::<Vec<_>>()
                })
                .ok_or_else(|| AcquireError::MalformedResponse {
                    url: url.clone(),
                    message: "response is not an array of rows".to_string(),
                })
        })?;

    let Some((header, data)) = rows.split_first() else {
        return Err(AcquireError::MalformedResponse {
            url,
            message: "empty response".to_string(),
        });
    };

    let mut expected: Vec<String> = job.query.variables.clone();
    expected.extend(["state", "county", "tract"].map(String::from));
    let mut expected_sorted = expected.clone();
    expected_sorted.sort();
    let mut got_sorted = header.to_vec();
    got_sorted.sort();
    if expected_sorted != got_sorted {
        return Err(AcquireError::SchemaDrift { expected, got: header.to_vec() });
    }

    let idx = |name: &str| header.iter().position(|h| h == name).unwrap();
    let state_i = idx("state");
    let county_i = idx("county");
    let tract_i = idx("tract");
    let var_is: Vec<usize> = job.query.variables.iter().map(|v| idx(v)).collect();

    let mut out_rows: Vec<(String, Vec<String>)> = Vec::with_capacity(data.len());
    for row in data {
        let geoid = make_geoid(&row[state_i], &row[county_i], &row[tract_i]).map_err(|e| {
            AcquireError::MalformedResponse { url: url.clone(), message: e.to_string() }
        })?;
        out_rows.push((geoid, var_is.iter().map(|&i| row[i].clone()).collect()));
    }
    out_rows.sort_by(|a, b| a.0.cmp(&b.0));

    let mut csv = String::new();
    csv.push_str("GEOID");
    for v in &job.query.variables {
        csv.push(',');
        csv.push_str(v);
    }
    csv.push('\n');
    for (geoid, cells) in out_rows {
        csv.push_str(&geoid);
        for cell in cells {
            csv.push(',');
            csv.push_str(&cell);
        }
        csv.push('\n');
    }
    if let Some(parent) = job.output.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(&job.output, csv).map_err(|e| io_err(&job.output, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::testutil::Scripted;
    use super::super::{QueryParams, RetryPolicy, SourceKind};
    use super::*;
    use std::time::Duration;

    fn job(dir: &std::path::Path, vars: &[&str]) -> FetchJob {
        FetchJob {
            source: SourceKind::CensusAcs,
            query: QueryParams {
                base_url: "http://census.test/data/2023/acs/acs5".to_string(),
                variables: vars.iter().map(|s| s.to_string()).collect(),
                state: "37".to_string(),
                county: "081".to_string(),
                year: 2023,
                bbox: None,
                page_size: 1000,
            },
            output: dir.join("acs.csv"),
            retry: RetryPolicy { max_attempts: 2, initial_backoff: Duration::from_millis(1) },
        }
    }

    #[test]
    fn two_variables_yield_csv_with_geoid() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"[["B01001_001E","B17001_002E","state","county","tract"],
            ["4500","600","37","081","010600"],
            ["2300","150","37","081","010500"]]"#;
        let t = Scripted::new(vec![Scripted::ok(body)]);
        let j = job(dir.path(), &["B01001_001E", "B17001_002E"]);
        fetch_acs(&t, &j).unwrap();
        let got = std::fs::read_to_string(&j.output).unwrap();
        // rows sorted by GEOID
        assert_eq!(
            got,
            "GEOID,B01001_001E,B17001_002E\n37081010500,2300,150\n37081010600,4500,600\n"
        );
    }

    #[test]
    fn server_error_message_propagates() {
        let dir = tempfile::tempdir().unwrap();
        let t = Scripted::new(vec![Scripted::status(400, "error: unknown variable 'B9'")]);
        let j = job(dir.path(), &["B9"]);
        match fetch_acs(&t, &j) {
            Err(AcquireError::HttpError { status: 400, body, .. }) => {
                assert!(body.contains("unknown variable"));
            }
            other => panic!("expected HttpError, got {other:?}"),
        }
    }

    #[test]
    fn schema_drift_detected() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"[["B01001_001E","state","county","tract"],["1","37","081","010600"]]"#;
        let t = Scripted::new(vec![Scripted::ok(body)]);
        let j = job(dir.path(), &["B01001_001E", "B17001_002E"]);
        assert!(matches!(fetch_acs(&t, &j), Err(AcquireError::SchemaDrift { .. })));
    }

    #[test]
    fn rerun_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let body = r#"[["B1","state","county","tract"],["7","37","081","010600"]]"#;
        let j = job(dir.path(), &["B1"]);
        let t = Scripted::new(vec![Scripted::ok(body)]);
        fetch_acs(&t, &j).unwrap();
        let first = std::fs::read(&j.output).unwrap();
        let t2 = Scripted::new(vec![Scripted::ok(body)]);
        fetch_acs(&t2, &j).unwrap();
        assert_eq!(first, std::fs::read(&j.output).unwrap());
    }
}
