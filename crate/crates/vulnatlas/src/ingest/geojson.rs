//! GeoJSON FeatureCollection reading (RFC 7946) and geometry conversion.
//!
//! Polygon and MultiPolygon geometries are accepted; coordinates are
//! expected in geographic WGS84 and are reprojected to Web Mercator on read.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::geom::project::project_multi_to_mercator;
use crate::geom::{Crs, GeoPolygon, MultiPolygon, Pt};

use super::IngestError;

fn io_err(path: &Path, source: std::io::Error) -> IngestError {
    IngestError::Io { path: path.display().to_string(), source }
}

fn parse_err(feature: Option<usize>, message: impl Into<String>) -> IngestError {
    IngestError::ParseError { feature, message: message.into() }
}

/// Read tract boundaries keyed by GEOID, reprojected to Web Mercator.
pub fn read_tract_boundaries(
    path: &Path,
    geoid_property: &str,
) -> Result<BTreeMap<String, MultiPolygon>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let root: Value =
        serde_json::from_str(&text).map_err(|e| parse_err(None, e.to_string()))?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(None, "not a FeatureCollection with a features array"))?;

    let mut out = BTreeMap::new();
    for (i, feature) in features.iter().enumerate() {
        let geoid = feature
            .get("properties")
            .and_then(|p| p.get(geoid_property))
            .and_then(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .ok_or_else(|| IngestError::MissingGeoidProperty {
                index: i,
                property: geoid_property.to_string(),
            })?;
        let geom = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| parse_err(Some(i), "feature missing geometry"))?;
        let mp = geometry_to_multipolygon(geom, Some(i))?;
        let projected = project_multi_to_mercator(&mp)?;
        if out.insert(geoid.clone(), projected).is_some() {
            return Err(IngestError::DuplicateGeoid { geoid });
        }
    }
    Ok(out)
}

/// Read every feature's polygons into one combined multipolygon (used for
/// flood layers, which carry no GEOID), reprojected to Web Mercator.
pub fn read_feature_collection_geometry(path: &Path) -> Result<MultiPolygon, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| parse_err(None, e.to_string()))?;
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(None, "not a FeatureCollection with a features array"))?;
    let mut parts = Vec::new();
    for (i, feature) in features.iter().enumerate() {
        let geom = feature
            .get("geometry")
            .filter(|g| !g.is_null())
            .ok_or_else(|| parse_err(Some(i), "feature missing geometry"))?;
        let mp = geometry_to_multipolygon(geom, Some(i))?;
        parts.extend(mp.parts().iter().cloned());
    }
    if parts.is_empty() {
        return Err(parse_err(None, "feature collection has no polygons"));
    }
    let combined = MultiPolygon::new(parts)?;
    Ok(project_multi_to_mercator(&combined)?)
}

/// Read a single boundary (the first feature, or a bare geometry),
/// reprojected to Web Mercator.
pub fn read_city_boundary(path: &Path) -> Result<MultiPolygon, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let root: Value = serde_json::from_str(&text).map_err(|e| parse_err(None, e.to_string()))?;
    let geom = if let Some(features) = root.get("features").and_then(Value::as_array) {
        features
            .first()
            .and_then(|f| f.get("geometry"))
            .ok_or_else(|| parse_err(None, "empty FeatureCollection"))?
    } else if root.get("type").is_some() {
        &root
    } else {
        return Err(parse_err(None, "neither FeatureCollection nor geometry"));
    };
    let mp = geometry_to_multipolygon(geom, None)?;
    Ok(project_multi_to_mercator(&mp)?)
}

/// Convert a GeoJSON geometry object into a geographic `MultiPolygon`.
pub fn geometry_to_multipolygon(
    geom: &Value,
    feature: Option<usize>,
) -> Result<MultiPolygon, IngestError> {
    let gtype = geom
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err(feature, "geometry missing type"))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| parse_err(feature, "geometry missing coordinates"))?;
    let polys: Vec<GeoPolygon> = match gtype {
        "Polygon" => vec![polygon_from_rings(coords, feature)?],
        "MultiPolygon" => {
            let parts = coords
                .as_array()
                .ok_or_else(|| parse_err(feature, "MultiPolygon coordinates not an array"))?;
            parts
                .iter()
                .map(|rings| polygon_from_rings(rings, feature))
                .collect::<Result<Vec<_>, _>>()?
        }
        other => return Err(parse_err(feature, format!("unsupported geometry type {other:?}"))),
    };
    MultiPolygon::new(polys).map_err(IngestError::from)
}

fn polygon_from_rings(rings: &Value, feature: Option<usize>) -> Result<GeoPolygon, IngestError> {
    let rings = rings
        .as_array()
        .ok_or_else(|| parse_err(feature, "polygon coordinates not an array"))?;
    if rings.is_empty() {
        return Err(parse_err(feature, "polygon has no rings"));
    }
    let mut parsed: Vec<Vec<Pt>> = Vec::with_capacity(rings.len());
    for ring in rings {
        let pts = ring
            .as_array()
            .ok_or_else(|| parse_err(feature, "ring is not an array"))?;
        let mut out = Vec::with_capacity(pts.len());
        for p in pts {
            let pair = p
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| parse_err(feature, "coordinate is not an [x, y] pair"))?;
            let x = pair[0]
                .as_f64()
                .ok_or_else(|| parse_err(feature, "x coordinate not a number"))?;
            let y = pair[1]
                .as_f64()
                .ok_or_else(|| parse_err(feature, "y coordinate not a number"))?;
            out.push(Pt::new(x, y));
        }
        parsed.push(out);
    }
    let exterior = parsed.remove(0);
    GeoPolygon::new(exterior, parsed, Crs::Wgs84).map_err(IngestError::from)
}

/// Serialize a multipolygon into GeoJSON geometry coordinates.
pub fn multipolygon_to_geojson(mp: &MultiPolygon) -> Value {
    let parts: Vec<Value> = mp
        .parts()
        .iter()
        .map(|p| {
            let rings: Vec<Value> = p
                .rings()
                .map(|ring| {
                    Value::Array(
                        ring.iter()
                            .map(|pt| Value::Array(vec![pt.x.into(), pt.y.into()]))
                            .collect(),
                    )
                })
                .collect();
            Value::Array(rings)
        })
        .collect();
    serde_json::json!({ "type": "MultiPolygon", "coordinates": parts })
}
