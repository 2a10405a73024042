//! Spatial autocorrelation and map classification.

mod jenks;
mod moran;

pub use jenks::{fisher_jenks, JenksClassification};
pub use moran::{local_moran, morans_i, morans_i_test, LisaResult, MoranTest, Quadrant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::NeighborGraph;

#[derive(Debug, Error, PartialEq)]
pub enum SpatialError {
    #[error("values have zero variance")]
    ZeroVariance,
    #[error("every tract is an island")]
    AllIslands,
    #[error("values length {got} does not match weights size {want}")]
    LengthMismatch { got: usize, want: usize },
    #[error("operation requires row-standardized weights")]
    NotRowStandardized,
    #[error("need at least {need} distinct values for {k} classes, got {got}")]
    TooFewDistinct { need: usize, got: usize, k: usize },
    #[error("class count must be at least 1")]
    ZeroClasses,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    Binary,
    RowStandardized,
}

/// Sparse spatial weights derived from a contiguity graph.
#[derive(Clone, Debug)]
pub struct SpatialWeights {
    /// per-node neighbor list with weights
    neighbors: Vec<Vec<(usize, f64)>>,
    mode: WeightsMode,
    s0: f64,
    islands: Vec<usize>,
}

impl SpatialWeights {
    pub fn from_graph(graph: &NeighborGraph, mode: WeightsMode) -> SpatialWeights {
        let n = graph.len();
        let mut neighbors = Vec::with_capacity(n);
        let mut s0 = 0.0;
        for i in 0..n {
            let nbrs = graph.neighbors(i);
            let w = match mode {
                WeightsMode::Binary => 1.0,
                WeightsMode::RowStandardized => {
                    if nbrs.is_empty() {
                        0.0
                    } else {
                        1.0 / nbrs.len() as f64
                    }
                }
            };
            let row: Vec<(usize, f64)> = nbrs.iter().map(|&j| (j, w)).collect();
            s0 += w * row.len() as f64;
            neighbors.push(row);
        }
        SpatialWeights {
            neighbors,
            mode,
            s0,
            islands: graph.islands().to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn mode(&self) -> WeightsMode {
        self.mode
    }

    /// Sum of all weights.
    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn islands(&self) -> &[usize] {
        &self.islands
    }

    pub fn is_island(&self, i: usize) -> bool {
        self.neighbors[i].is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{build_contiguity, ContiguityRule, MultiPolygon};
    use std::collections::BTreeMap;

    fn grid_graph(nx: usize, ny: usize, rule: ContiguityRule) -> NeighborGraph {
        let mut tracts = BTreeMap::new();
        for y in 0..ny {
            for x in 0..nx {
                tracts.insert(
                    format!("c{y:02}{x:02}"),
                    MultiPolygon::rect(
                        x as f64,
                        y as f64,
                        x as f64 + 1.0,
                        y as f64 + 1.0,
                        crate::geom::Crs::WebMercator,
                    ),
                );
            }
        }
        build_contiguity(&tracts, rule).unwrap()
    }

    #[test]
    fn binary_weights_symmetric_s0() {
        let g = grid_graph(3, 3, ContiguityRule::Rook);
        let w = SpatialWeights::from_graph(&g, WeightsMode::Binary);
        // 3x3 rook: 12 undirected edges -> s0 = 24
        assert_eq!(w.s0(), 24.0);
    }

    #[test]
    fn row_standardized_rows_sum_to_one() {
        let g = grid_graph(3, 3, ContiguityRule::Queen);
        let w = SpatialWeights::from_graph(&g, WeightsMode::RowStandardized);
        for i in 0..w.len() {
            let sum: f64 = w.neighbors(i).iter().map(|(_, wt)| wt).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        assert!((w.s0() - 9.0).abs() < 1e-12);
    }
}
