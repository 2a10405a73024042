//! Polygon intersection area via signed fan decomposition.
//!
//! Each part is decomposed into signed triangles fanned from a local origin;
//! the indicator function of the polygon equals the signed sum of triangle
//! indicators, so the intersection area of two parts is the signed sum of
//! pairwise triangle-triangle intersection areas. Triangle pairs are clipped
//! with Sutherland-Hodgman, which keeps axis-aligned rectangle overlays exact
//! to machine precision.

use super::{signed_ring_area, Crs, GeomError, MultiPolygon, Pt};

/// Triangle (origin, a, b) stored counter-clockwise with a separate sign.
struct FanTri {
    a: Pt,
    b: Pt,
    sign: f64,
    lo: Pt,
    hi: Pt,
}

fn fan_of_part(part: &super::GeoPolygon, origin: Pt) -> Vec<FanTri> {
    let mut tris = Vec::new();
    for ring in part.rings() {
        for w in ring.windows(2) {
            let (p, q) = (w[0], w[1]);
            let cross = (p.x - origin.x) * (q.y - origin.y) - (q.x - origin.x) * (p.y - origin.y);
            if cross == 0.0 {
                continue;
            }
            let (a, b, sign) = if cross > 0.0 { (p, q, 1.0) } else { (q, p, -1.0) };
            let lo = Pt::new(origin.x.min(a.x).min(b.x), origin.y.min(a.y).min(b.y));
            let hi = Pt::new(origin.x.max(a.x).max(b.x), origin.y.max(a.y).max(b.y));
            tris.push(FanTri { a, b, sign, lo, hi });
        }
    }
    tris
}

/// Area of the intersection of two CCW triangles (origin implied per side).
fn tri_clip_area(o1: Pt, t1: &FanTri, o2: Pt, t2: &FanTri) -> f64 {
    // Sutherland-Hodgman: clip subject triangle against the 3 half-planes of
    // the clip triangle. Both triangles are CCW so "inside" is the left side.
    let subject = [o1, t1.a, t1.b];
    let clip = [o2, t2.a, t2.b];
    let mut poly: Vec<Pt> = subject.to_vec();
    let mut next: Vec<Pt> = Vec::with_capacity(8);
    for e in 0..3 {
        let c0 = clip[e];
        let c1 = clip[(e + 1) % 3];
        let ex = c1.x - c0.x;
        let ey = c1.y - c0.y;
        next.clear();
        let side = |p: Pt| ex * (p.y - c0.y) - ey * (p.x - c0.x);
        for i in 0..poly.len() {
            let cur = poly[i];
            let nxt = poly[(i + 1) % poly.len()];
            let sc = side(cur);
            let sn = side(nxt);
            if sc >= 0.0 {
                next.push(cur);
                if sn < 0.0 {
                    next.push(edge_intersect(cur, nxt, sc, sn));
                }
            } else if sn >= 0.0 {
                next.push(edge_intersect(cur, nxt, sc, sn));
            }
        }
        std::mem::swap(&mut poly, &mut next);
        if poly.len() < 3 {
            return 0.0;
        }
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        acc += p.x * q.y - q.x * p.y;
    }
    (acc / 2.0).max(0.0)
}

fn edge_intersect(p: Pt, q: Pt, sp: f64, sq: f64) -> Pt {
    let t = sp / (sp - sq);
    Pt::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

fn part_pair_area(a: &super::GeoPolygon, b: &super::GeoPolygon) -> f64 {
    let (alo, ahi) = a.bbox();
    let (blo, bhi) = b.bbox();
    if alo.x > bhi.x || blo.x > ahi.x || alo.y > bhi.y || blo.y > ahi.y {
        return 0.0;
    }
    // Local fan origin keeps the triangles well conditioned for this pair.
    let origin = Pt::new(
        (alo.x.max(blo.x) + ahi.x.min(bhi.x)) / 2.0,
        (alo.y.max(blo.y) + ahi.y.min(bhi.y)) / 2.0,
    );
    let fa = fan_of_part(a, origin);
    let fb = fan_of_part(b, origin);
    let mut total = 0.0;
    for ta in &fa {
        for tb in &fb {
            if ta.lo.x > tb.hi.x || tb.lo.x > ta.hi.x || ta.lo.y > tb.hi.y || tb.lo.y > ta.hi.y {
                continue;
            }
            let area = tri_clip_area(origin, ta, origin, tb);
            if area > 0.0 {
                total += ta.sign * tb.sign * area;
            }
        }
    }
    total
}

/// Deterministic operand ordering so `intersection_area(a, b)` and
/// `intersection_area(b, a)` run the exact same arithmetic.
fn canonical_key(mp: &MultiPolygon) -> (usize, usize, [f64; 4]) {
    let (lo, hi) = mp.bbox();
    (mp.total_vertices(), mp.parts().len(), [lo.x, lo.y, hi.x, hi.y])
}

fn coord_stream_le(a: &MultiPolygon, b: &MultiPolygon) -> bool {
    let flat = |mp: &MultiPolygon| {
        mp.parts()
            .iter()
            .flat_map(|p| p.rings())
            .flat_map(|r| r.iter())
            .flat_map(|pt| [pt.x, pt.y])
            .collect::<Vec<_>>()
    };
    let (fa, fb) = (flat(a), flat(b));
    for (x, y) in fa.iter().zip(fb.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    fa.len() <= fb.len()
}

/// Area of `a` intersected with `b`, in square meters.
///
/// Symmetric by construction; the result is clamped into
/// `[0, min(area(a), area(b))]`.
pub fn intersection_area(a: &MultiPolygon, b: &MultiPolygon) -> Result<f64, GeomError> {
    if a.crs() != b.crs() {
        return Err(GeomError::CrsMismatch);
    }
    if a.crs() != Crs::WebMercator {
        return Err(GeomError::NotProjected);
    }
    let (first, second) = {
        let ka = canonical_key(a);
        let kb = canonical_key(b);
        if ka < kb || (ka == kb && coord_stream_le(a, b)) {
            (a, b)
        } else {
            (b, a)
        }
    };
    let mut total = 0.0;
    for pa in first.parts() {
        for pb in second.parts() {
            total += part_pair_area(pa, pb);
        }
    }
    let cap = super::polygon_area(a)?.min(super::polygon_area(b)?);
    Ok(total.clamp(0.0, cap))
}

/// Even-odd point-in-polygon test over all rings of all parts.
///
/// Points exactly on a boundary may land on either side.
pub fn point_in_multipolygon(p: Pt, mp: &MultiPolygon) -> bool {
    let mut inside = false;
    for part in mp.parts() {
        for ring in part.rings() {
            for w in ring.windows(2) {
                let (a, b) = (w[0], w[1]);
                if (a.y > p.y) != (b.y > p.y) {
                    let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                    if p.x < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
    }
    inside
}

#[allow(dead_code)]
fn ring_area_abs(ring: &[Pt]) -> f64 {
    signed_ring_area(ring).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{polygon_area, GeoPolygon};

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> MultiPolygon {
        MultiPolygon::rect(x0, y0, x1, y1, Crs::WebMercator)
    }

    #[test]
    fn offset_unit_squares() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        let b = rect(0.5, 0.5, 1.5, 1.5);
        assert!((intersection_area(&a, &b).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn disjoint_squares() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        let b = rect(5.0, 5.0, 6.0, 6.0);
        assert_eq!(intersection_area(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn identical_squares() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        assert!((intersection_area(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetry_is_exact() {
        let a = rect(0.3, -0.2, 2.7, 1.9);
        let b = rect(1.1, 0.4, 3.3, 3.1);
        assert_eq!(
            intersection_area(&a, &b).unwrap(),
            intersection_area(&b, &a).unwrap()
        );
    }

    #[test]
    fn crs_mismatch_rejected() {
        let a = rect(0.0, 0.0, 1.0, 1.0);
        let b = MultiPolygon::rect(0.0, 0.0, 1.0, 1.0, Crs::Wgs84);
        assert_eq!(intersection_area(&a, &b).unwrap_err(), GeomError::CrsMismatch);
    }

    #[test]
    fn hole_is_excluded() {
        let outer = GeoPolygon::new(
            vec![Pt::new(0.0, 0.0), Pt::new(4.0, 0.0), Pt::new(4.0, 4.0), Pt::new(0.0, 4.0)],
            vec![vec![Pt::new(1.0, 1.0), Pt::new(3.0, 1.0), Pt::new(3.0, 3.0), Pt::new(1.0, 3.0)]],
            Crs::WebMercator,
        )
        .unwrap();
        let a = MultiPolygon::from_polygon(outer);
        let probe = rect(1.5, 1.5, 2.5, 2.5); // entirely inside the hole
        assert!(intersection_area(&a, &probe).unwrap().abs() < 1e-12);
        let probe2 = rect(0.0, 0.0, 4.0, 1.0); // band crossing below the hole
        assert!((intersection_area(&a, &probe2).unwrap() - 4.0).abs() < 1e-10);
    }

    #[test]
    fn concave_polygon_intersection() {
        // L-shape: unit thickness arms of length 3
        let l = GeoPolygon::new(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(3.0, 0.0),
                Pt::new(3.0, 1.0),
                Pt::new(1.0, 1.0),
                Pt::new(1.0, 3.0),
                Pt::new(0.0, 3.0),
            ],
            vec![],
            Crs::WebMercator,
        )
        .unwrap();
        let l = MultiPolygon::from_polygon(l);
        assert!((polygon_area(&l).unwrap() - 5.0).abs() < 1e-12);
        let band = rect(0.0, 0.0, 3.0, 0.5); // bottom strip
        assert!((intersection_area(&l, &band).unwrap() - 1.5).abs() < 1e-12);
        let upper = rect(0.5, 2.0, 2.0, 3.0); // clips only the vertical arm
        assert!((intersection_area(&l, &upper).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn self_intersection_matches_area() {
        let l = GeoPolygon::new(
            vec![
                Pt::new(0.0, 0.0),
                Pt::new(3.0, 0.0),
                Pt::new(3.0, 1.0),
                Pt::new(1.0, 1.0),
                Pt::new(1.0, 3.0),
                Pt::new(0.0, 3.0),
            ],
            vec![],
            Crs::WebMercator,
        )
        .unwrap();
        let l = MultiPolygon::from_polygon(l);
        let area = polygon_area(&l).unwrap();
        let self_int = intersection_area(&l, &l).unwrap();
        assert!((self_int - area).abs() <= 1e-9 * area);
    }

    #[test]
    fn point_in_polygon_basics() {
        let a = rect(0.0, 0.0, 2.0, 2.0);
        assert!(point_in_multipolygon(Pt::new(1.0, 1.0), &a));
        assert!(!point_in_multipolygon(Pt::new(3.0, 1.0), &a));
    }
}
