//! Queen/rook contiguity over tract polygons.
//!
//! Coordinates are quantized to 1e-6 m before point-sharing tests; source
//! geometries from different files rarely share bit-identical vertices.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::{Crs, GeomError, MultiPolygon};

/// Snap tolerance for vertex matching, meters.
pub const SNAP_TOLERANCE_M: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContiguityRule {
    /// Neighbors share at least one boundary point.
    Queen,
    /// Neighbors share a boundary segment of positive length.
    Rook,
}

/// Symmetric neighbor structure over tracts, in sorted-id order.
#[derive(Clone, Debug)]
pub struct NeighborGraph {
    node_ids: Vec<String>,
    adjacency: Vec<Vec<usize>>,
    rule: ContiguityRule,
    islands: Vec<usize>,
}

impl NeighborGraph {
    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn rule(&self) -> ContiguityRule {
        self.rule
    }

    /// Indices of tracts with no neighbors.
    pub fn islands(&self) -> &[usize] {
        &self.islands
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }

    /// True when adjacency equals its transpose with no self-loops.
    pub fn is_symmetric(&self) -> bool {
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            for &j in nbrs {
                if j == i || !self.adjacency[j].contains(&i) {
                    return false;
                }
            }
        }
        true
    }
}

fn quantize(v: f64) -> i64 {
    (v / SNAP_TOLERANCE_M).round() as i64
}

/// Build a contiguity graph from projected tract geometries.
///
/// Islands are permitted and flagged in the result.
pub fn build_contiguity(
    tracts: &BTreeMap<String, MultiPolygon>,
    rule: ContiguityRule,
) -> Result<NeighborGraph, GeomError> {
    if tracts.len() < 2 {
        return Err(GeomError::TooFewTracts);
    }
    if tracts.values().any(|g| g.crs() != Crs::WebMercator) {
        return Err(GeomError::NotProjected);
    }

    let node_ids: Vec<String> = tracts.keys().cloned().collect();
    let mut pairs: BTreeSet<(usize, usize)> = BTreeSet::new();

    match rule {
        ContiguityRule::Queen => {
            let mut by_vertex: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
            for (idx, geom) in tracts.values().enumerate() {
                let mut seen: BTreeSet<(i64, i64)> = BTreeSet::new();
                for part in geom.parts() {
                    for ring in part.rings() {
                        for p in &ring[..ring.len() - 1] {
                            seen.insert((quantize(p.x), quantize(p.y)));
                        }
                    }
                }
                for key in seen {
                    by_vertex.entry(key).or_default().push(idx);
                }
            }
            collect_pairs(by_vertex.values(), &mut pairs);
        }
        ContiguityRule::Rook => {
            type EdgeKey = ((i64, i64), (i64, i64));
            let mut by_edge: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
            for (idx, geom) in tracts.values().enumerate() {
                let mut seen: BTreeSet<EdgeKey> = BTreeSet::new();
                for part in geom.parts() {
                    for ring in part.rings() {
                        for w in ring.windows(2) {
                            let a = (quantize(w[0].x), quantize(w[0].y));
                            let b = (quantize(w[1].x), quantize(w[1].y));
                            if a == b {
                                continue; // zero-length after snapping
                            }
                            seen.insert((a.min(b), a.max(b)));
                        }
                    }
                }
                for key in seen {
                    by_edge.entry(key).or_default().push(idx);
                }
            }
            collect_pairs(by_edge.values(), &mut pairs);
        }
    }

    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); node_ids.len()];
    for (i, j) in pairs {
        adjacency[i].insert(j);
        adjacency[j].insert(i);
    }
    let adjacency: Vec<Vec<usize>> = adjacency.into_iter().map(|s| s.into_iter().collect()).collect();
    let islands = adjacency
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_empty())
        .map(|(i, _)| i)
        .collect();

    Ok(NeighborGraph { node_ids, adjacency, rule, islands })
}

fn collect_pairs<'a, I: Iterator<Item = &'a Vec<usize>>>(
    buckets: I,
    pairs: &mut BTreeSet<(usize, usize)>,
) {
    for bucket in buckets {
        for (a, &i) in bucket.iter().enumerate() {
            for &j in &bucket[a + 1..] {
                if i != j {
                    pairs.insert((i.min(j), i.max(j)));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Crs;

    fn grid(cells: &[(f64, f64)]) -> BTreeMap<String, MultiPolygon> {
        cells
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                (
                    format!("t{i:03}"),
                    MultiPolygon::rect(x, y, x + 1.0, y + 1.0, Crs::WebMercator),
                )
            })
            .collect()
    }

    #[test]
    fn queen_2x2_grid() {
        let tracts = grid(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let g = build_contiguity(&tracts, ContiguityRule::Queen).unwrap();
        for i in 0..4 {
            assert_eq!(g.neighbors(i).len(), 3, "queen corner contact counts");
        }
        assert!(g.is_symmetric());
        assert!(g.islands().is_empty());
    }

    #[test]
    fn rook_2x2_grid_excludes_diagonal() {
        let tracts = grid(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let g = build_contiguity(&tracts, ContiguityRule::Rook).unwrap();
        for i in 0..4 {
            assert_eq!(g.neighbors(i).len(), 2);
        }
    }

    #[test]
    fn rook_strip() {
        let tracts = grid(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let g = build_contiguity(&tracts, ContiguityRule::Rook).unwrap();
        assert_eq!(g.neighbors(0).len(), 1);
        assert_eq!(g.neighbors(1).len(), 2);
        assert_eq!(g.neighbors(2).len(), 1);
    }

    #[test]
    fn distant_square_is_island() {
        let tracts = grid(&[(0.0, 0.0), (1.0, 0.0), (50.0, 50.0)]);
        let g = build_contiguity(&tracts, ContiguityRule::Queen).unwrap();
        assert_eq!(g.islands(), &[2]);
        assert!(g.neighbors(2).is_empty());
    }

    #[test]
    fn snap_tolerance_bridges_tiny_gaps() {
        let mut tracts = BTreeMap::new();
        tracts.insert(
            "a".to_string(),
            MultiPolygon::rect(0.0, 0.0, 1.0, 1.0, Crs::WebMercator),
        );
        // off by 1e-9 m, far below the 1e-6 snap tolerance
        tracts.insert(
            "b".to_string(),
            MultiPolygon::rect(1.0 + 1e-9, 0.0, 2.0, 1.0, Crs::WebMercator),
        );
        let g = build_contiguity(&tracts, ContiguityRule::Rook).unwrap();
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn too_few_tracts() {
        let tracts = grid(&[(0.0, 0.0)]);
        assert_eq!(
            build_contiguity(&tracts, ContiguityRule::Queen).unwrap_err(),
            GeomError::TooFewTracts
        );
    }
}
