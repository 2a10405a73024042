//! WGS84 <-> Web Mercator (EPSG:3857), spherical formulation.

use super::{Crs, GeoPolygon, GeomError, MultiPolygon, Pt};

/// Sphere radius used by EPSG:3857, meters.
pub const MERCATOR_RADIUS_M: f64 = 6_378_137.0;

/// Latitudes at or beyond this magnitude are rejected.
pub const MAX_LATITUDE_DEG: f64 = 85.06;

fn forward(p: Pt) -> Result<Pt, GeomError> {
    if p.y.abs() >= MAX_LATITUDE_DEG {
        return Err(GeomError::LatitudeOutOfRange { lat: p.y });
    }
    let lon = p.x.to_radians();
    let lat = p.y.to_radians();
    // ln(tan(pi/4 + lat/2)) written as atanh(sin(lat)); exact at the equator
    Ok(Pt::new(
        MERCATOR_RADIUS_M * lon,
        MERCATOR_RADIUS_M * lat.sin().atanh(),
    ))
}

fn inverse(p: Pt) -> Pt {
    let lon = p.x / MERCATOR_RADIUS_M;
    let lat = 2.0 * (p.y / MERCATOR_RADIUS_M).exp().atan() - std::f64::consts::FRAC_PI_2;
    Pt::new(lon.to_degrees(), lat.to_degrees())
}

/// Project a geographic polygon to Web Mercator.
pub fn project_to_mercator(p: &GeoPolygon) -> Result<GeoPolygon, GeomError> {
    if p.crs() == Crs::WebMercator {
        return Err(GeomError::AlreadyProjected);
    }
    let exterior = p.exterior().iter().map(|&q| forward(q)).collect::<Result<Vec<_>, _>>()?;
    let holes = p
        .holes()
        .iter()
        .map(|h| h.iter().map(|&q| forward(q)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    GeoPolygon::new(exterior, holes, Crs::WebMercator)
}

/// Unproject a Web Mercator polygon back to geographic coordinates.
pub fn project_to_geographic(p: &GeoPolygon) -> Result<GeoPolygon, GeomError> {
    if p.crs() == Crs::Wgs84 {
        return Err(GeomError::NotProjected);
    }
    let exterior = p.exterior().iter().map(|&q| inverse(q)).collect();
    let holes = p.holes().iter().map(|h| h.iter().map(|&q| inverse(q)).collect()).collect();
    GeoPolygon::new(exterior, holes, Crs::Wgs84)
}

/// Project every part of a multipolygon.
pub fn project_multi_to_mercator(mp: &MultiPolygon) -> Result<MultiPolygon, GeomError> {
    let parts = mp.parts().iter().map(project_to_mercator).collect::<Result<Vec<_>, _>>()?;
    MultiPolygon::new(parts)
}

/// Unproject every part of a multipolygon.
pub fn project_multi_to_geographic(mp: &MultiPolygon) -> Result<MultiPolygon, GeomError> {
    let parts = mp.parts().iter().map(project_to_geographic).collect::<Result<Vec<_>, _>>()?;
    MultiPolygon::new(parts)
}
