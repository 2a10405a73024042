//! Shoelace areas in projected coordinates.

use super::{signed_ring_area, Crs, GeomError, MultiPolygon};

/// Area in square meters: exterior area minus holes, summed over parts.
///
/// Orientation-insensitive (rings are normalized on construction) and never
/// negative; degenerate slivers contribute 0.
pub fn polygon_area(mp: &MultiPolygon) -> Result<f64, GeomError> {
    if mp.crs() != Crs::WebMercator {
        return Err(GeomError::NotProjected);
    }
    let mut total = 0.0;
    for part in mp.parts() {
        let ext = signed_ring_area(part.exterior()).abs();
        let holes: f64 = part.holes().iter().map(|h| signed_ring_area(h).abs()).sum();
        total += (ext - holes).max(0.0);
    }
    Ok(total)
}
