//! Planar geometry kernel over tract polygons.
//!
//! Everything downstream of ingest works in projected Web Mercator meters;
//! geometries are immutable after construction and safe to share across
//! workers. Ring orientation is normalized on construction (exterior
//! counter-clockwise, holes clockwise), which removes a whole class of
//! clipping edge cases. Degenerate zero-area polygons are accepted and
//! contribute 0 to all areas.

mod area;
mod buffer;
mod clip;
mod contiguity;
pub mod project;

pub use area::polygon_area;
pub use buffer::buffer;
pub use clip::{intersection_area, point_in_multipolygon};
pub use contiguity::{build_contiguity, ContiguityRule, NeighborGraph};
pub use project::{
    project_multi_to_geographic, project_multi_to_mercator, project_to_geographic,
    project_to_mercator, MERCATOR_RADIUS_M,
};

use thiserror::Error;

/// Coordinate reference system tag carried by every geometry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crs {
    /// Geographic WGS84 longitude/latitude in degrees.
    Wgs84,
    /// Projected Web Mercator (EPSG:3857) in meters.
    WebMercator,
}

/// A planar point. `x`/`y` are degrees (lon/lat) or meters depending on CRS.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pt {
    pub x: f64,
    pub y: f64,
}

impl Pt {
    pub fn new(x: f64, y: f64) -> Self {
        Pt { x, y }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GeomError {
    #[error("coordinate is NaN or infinite")]
    NanCoordinate,
    #[error("ring has {got} points after closing; need at least 4")]
    TooFewPoints { got: usize },
    #[error("hole lies outside the exterior bounding box")]
    HoleOutsideExterior,
    #[error("multipolygon must have at least one part")]
    EmptyMultiPolygon,
    #[error("multipolygon parts carry mixed CRS tags")]
    MixedCrs,
    #[error("latitude {lat} out of range for Web Mercator (|lat| must be < 85.06)")]
    LatitudeOutOfRange { lat: f64 },
    #[error("geometry is already projected")]
    AlreadyProjected,
    #[error("operation requires projected coordinates")]
    NotProjected,
    #[error("operation requires geographic coordinates")]
    NotGeographic,
    #[error("CRS mismatch between operands")]
    CrsMismatch,
    #[error("buffer radius must be non-negative")]
    NegativeRadius,
    #[error("need at least 2 tracts to build contiguity")]
    TooFewTracts,
}

/// Simple polygon with optional holes.
///
/// Invariants enforced on construction: rings are closed (first point equals
/// last), the exterior has at least 4 points, holes lie inside the exterior
/// bounding box, no coordinate is NaN, exterior wound counter-clockwise and
/// holes clockwise.
#[derive(Clone, Debug, PartialEq)]
pub struct GeoPolygon {
    exterior: Vec<Pt>,
    holes: Vec<Vec<Pt>>,
    crs: Crs,
}

impl GeoPolygon {
    pub fn new(exterior: Vec<Pt>, holes: Vec<Vec<Pt>>, crs: Crs) -> Result<Self, GeomError> {
        let exterior = normalize_ring(exterior, true)?;
        let holes = holes
            .into_iter()
            .map(|h| normalize_ring(h, false))
            .collect::<Result<Vec<_>, _>>()?;
        let (lo, hi) = ring_bbox(&exterior);
        for h in &holes {
            let (hlo, hhi) = ring_bbox(h);
            if hlo.x < lo.x || hlo.y < lo.y || hhi.x > hi.x || hhi.y > hi.y {
                return Err(GeomError::HoleOutsideExterior);
            }
        }
        Ok(GeoPolygon { exterior, holes, crs })
    }

    /// Axis-aligned rectangle, handy for fixtures.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, crs: Crs) -> Self {
        let (xa, xb) = (x0.min(x1), x0.max(x1));
        let (ya, yb) = (y0.min(y1), y0.max(y1));
        GeoPolygon::new(
            vec![
                Pt::new(xa, ya),
                Pt::new(xb, ya),
                Pt::new(xb, yb),
                Pt::new(xa, yb),
                Pt::new(xa, ya),
            ],
            vec![],
            crs,
        )
        .expect("rectangle is a valid ring")
    }

    pub fn exterior(&self) -> &[Pt] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Pt>] {
        &self.holes
    }

    pub fn crs(&self) -> Crs {
        self.crs
    }

    /// All rings, exterior first.
    pub fn rings(&self) -> impl Iterator<Item = &[Pt]> {
        std::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn bbox(&self) -> (Pt, Pt) {
        ring_bbox(&self.exterior)
    }
}

/// One or more polygon parts sharing a CRS.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiPolygon {
    parts: Vec<GeoPolygon>,
}

impl MultiPolygon {
    pub fn new(parts: Vec<GeoPolygon>) -> Result<Self, GeomError> {
        if parts.is_empty() {
            return Err(GeomError::EmptyMultiPolygon);
        }
        let crs = parts[0].crs;
        if parts.iter().any(|p| p.crs != crs) {
            return Err(GeomError::MixedCrs);
        }
        Ok(MultiPolygon { parts })
    }

    pub fn from_polygon(p: GeoPolygon) -> Self {
        MultiPolygon { parts: vec![p] }
    }

    /// Single axis-aligned rectangle part.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64, crs: Crs) -> Self {
        MultiPolygon::from_polygon(GeoPolygon::rect(x0, y0, x1, y1, crs))
    }

    pub fn parts(&self) -> &[GeoPolygon] {
        &self.parts
    }

    pub fn crs(&self) -> Crs {
        self.parts[0].crs
    }

    pub fn bbox(&self) -> (Pt, Pt) {
        let mut lo = Pt::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Pt::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.parts {
            let (plo, phi) = p.bbox();
            lo.x = lo.x.min(plo.x);
            lo.y = lo.y.min(plo.y);
            hi.x = hi.x.max(phi.x);
            hi.y = hi.y.max(phi.y);
        }
        (lo, hi)
    }

    pub fn total_vertices(&self) -> usize {
        self.parts
            .iter()
            .map(|p| p.rings().map(|r| r.len()).sum::<usize>())
            .sum()
    }
}

/// Signed shoelace area of a closed ring (positive = counter-clockwise).
pub(crate) fn signed_ring_area(ring: &[Pt]) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        acc += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    acc / 2.0
}

fn ring_bbox(ring: &[Pt]) -> (Pt, Pt) {
    let mut lo = Pt::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Pt::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in ring {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    (lo, hi)
}

/// Close the ring if needed, validate, and fix winding.
fn normalize_ring(mut ring: Vec<Pt>, want_ccw: bool) -> Result<Vec<Pt>, GeomError> {
    if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(GeomError::NanCoordinate);
    }
    if let (Some(first), Some(last)) = (ring.first().copied(), ring.last().copied()) {
        if first != last {
            ring.push(first);
        }
    }
    if ring.len() < 4 {
        return Err(GeomError::TooFewPoints { got: ring.len() });
    }
    let area = signed_ring_area(&ring);
    // Zero-area slivers are kept as-is; orientation is meaningless for them.
    if (want_ccw && area < 0.0) || (!want_ccw && area > 0.0) {
        ring.reverse();
    }
    Ok(ring)
}
