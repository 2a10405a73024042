//! Flood-hazard layer client (ArcGIS REST style, GeoJSON output).
//!
//! Pages through the layer with `resultOffset`, concatenates features, and
//! keeps only Special Flood Hazard Area zones.

use serde_json::Value;

use super::{classify_status, get_with_retry, io_err, AcquireError, FetchJob, Transport};

/// SFHA zone designations per the published NFHL schema: the one percent
/// annual chance floodplain (A and V families). X/B/C/D areas are outside
/// the SFHA.
pub const SFHA_ZONES: [&str; 8] = ["A", "AE", "AH", "AO", "AR", "A99", "V", "VE"];

/// Property key carrying the zone designation.
pub const ZONE_PROPERTY: &str = "FLD_ZONE";

pub fn is_sfha_zone(zone: &str) -> bool {
    let z = zone.trim().to_ascii_uppercase();
    SFHA_ZONES.contains(&z.as_str())
}

fn page_url(job: &FetchJob, offset: usize) -> String {
    let q = &job.query;
    let bbox = q.bbox.map(|(x0, y0, x1, y1)| format!("{x0},{y0},{x1},{y1}")).unwrap_or_default();
    format!(
        "{base}/query?where=1%3D1&geometry={bbox}&geometryType=esriGeometryEnvelope&inSR=4326&f=geojson&resultOffset={offset}&resultRecordCount={count}",
        base = q.base_url,
        count = q.page_size,
    )
}

/// Fetch all pages, filter to SFHA zones, and write one FeatureCollection.
pub fn fetch_flood_layer(transport: &dyn Transport, job: &FetchJob) -> Result<(), AcquireError> {
    let mut features: Vec<Value> = Vec::new();
    let mut offset = 0usize;
    loop {
        let url = page_url(job, offset);
        let resp = match get_with_retry(transport, &url, &job.retry) {
            Ok(r) => r,
            Err(e) => {
                if offset > 0 {
                    // a page we were promised never arrived
                    return Err(AcquireError::PaginationIncomplete { got: features.len() })
                        .map_err(|pe| {
                            // keep the transport detail visible
                            eprintln!("flood pagination aborted: {e}");
                            pe
                        });
                }
                return Err(e);
            }
        };
        let body = classify_status(resp, &url)?;
        let page: Value = serde_json::from_str(&body)
            .map_err(|e| AcquireError::MalformedResponse { url: url.clone(), message: e.to_string() })?;
        let page_features = page
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| AcquireError::MalformedResponse {
                url: url.clone(),
                message: "no features array".to_string(),
            })?;
        let got = page_features.len();
        features.extend(page_features.iter().cloned());
        let more = page
            .get("exceededTransferLimit")
            .and_then(Value::as_bool)
            .unwrap_or(false)
            || got == job.query.page_size;
        if !more || got == 0 {
            break;
        }
        offset += got;
    }

    let kept: Vec<Value> = features
        .into_iter()
        .filter(|f| {
            f.get("properties")
                .and_then(|p| p.get(ZONE_PROPERTY))
                .and_then(Value::as_str)
                .map(is_sfha_zone)
                .unwrap_or(false)
        })
        .collect();

    let fc = serde_json::json!({ "type": "FeatureCollection", "features": kept });
    if let Some(parent) = job.output.parent() {
        std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    std::fs::write(&job.output, serde_json::to_string(&fc).expect("serializable"))
        .map_err(|e| io_err(&job.output, e))?;
    Ok(())
}
