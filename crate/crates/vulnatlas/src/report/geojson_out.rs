//! Scored GeoJSON emission.
//!
//! Geometry is re-emitted in geographic coordinates for interoperability
//! with mapping tools; all analysis stays in projected space. Properties
//! are serialized with sorted keys and features in geoid order, so output
//! bytes are deterministic.

use serde_json::{Map, Value};

use crate::geom::{project_multi_to_geographic, MultiPolygon};
use crate::ingest::multipolygon_to_geojson;

use super::PipelineError;

/// One tract's scored properties; `None` values serialize as JSON null.
pub struct ScoredFeature<'a> {
    pub geoid: &'a str,
    pub geometry: &'a MultiPolygon,
    pub properties: Vec<(String, Value)>,
}

/// Build the FeatureCollection text for scored tracts.
pub fn scored_geojson(features: &[ScoredFeature<'_>]) -> Result<String, PipelineError> {
    let mut feats: Vec<Value> = Vec::with_capacity(features.len());
    for f in features {
        let geographic = project_multi_to_geographic(f.geometry)
            .map_err(|e| PipelineError::Config(format!("unprojectable geometry: {e}")))?;
        let mut props = Map::new();
        props.insert("geoid".to_string(), Value::String(f.geoid.to_string()));
        for (k, v) in &f.properties {
            props.insert(k.clone(), v.clone());
        }
        let mut feat = Map::new();
        feat.insert("type".to_string(), Value::String("Feature".to_string()));
        feat.insert("properties".to_string(), Value::Object(props));
        feat.insert("geometry".to_string(), multipolygon_to_geojson(&geographic));
        feats.push(Value::Object(feat));
    }
    let mut root = Map::new();
    root.insert("type".to_string(), Value::String("FeatureCollection".to_string()));
    root.insert("features".to_string(), Value::Array(feats));
    Ok(serde_json::to_string(&Value::Object(root)).expect("serializable"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Crs;

    #[test]
    fn roundtrip_preserves_values_and_vertex_counts() {
        let geom = MultiPolygon::rect(-8_884_000.0, 4_310_000.0, -8_883_000.0, 4_311_000.0, Crs::WebMercator);
        let features = vec![ScoredFeature {
            geoid: "37081010600",
            geometry: &geom,
            properties: vec![
                ("composite_v".to_string(), serde_json::json!(61.25)),
                ("lisa_p".to_string(), Value::Null),
            ],
        }];
        let text = scored_geojson(&features).unwrap();
        let parsed: Value = serde_json::from_str(&text).unwrap();
        let feat = &parsed["features"][0];
        assert_eq!(feat["properties"]["geoid"], "37081010600");
        assert!((feat["properties"]["composite_v"].as_f64().unwrap() - 61.25).abs() < 1e-9);
        assert!(feat["properties"]["lisa_p"].is_null());
        let rings = feat["geometry"]["coordinates"][0].as_array().unwrap();
        assert_eq!(rings[0].as_array().unwrap().len(), 5, "closed rectangle ring");
        // geographic coordinates, not meters
        let first = rings[0][0].as_array().unwrap();
        assert!(first[0].as_f64().unwrap().abs() <= 180.0);
        assert!(first[1].as_f64().unwrap().abs() <= 90.0);
    }

    #[test]
    fn bytes_are_deterministic() {
        let geom = MultiPolygon::rect(-8_884_000.0, 4_310_000.0, -8_883_000.0, 4_311_000.0, Crs::WebMercator);
        let make = || {
            let features = vec![ScoredFeature {
                geoid: "37081010600",
                geometry: &geom,
                properties: vec![("v".to_string(), serde_json::json!(1.5))],
            }];
            scored_geojson(&features).unwrap()
        };
        assert_eq!(make(), make());
    }
}
