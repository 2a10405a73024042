//! Tract-level climate-vulnerability assessment engine.
//!
//! The crate joins census-tract boundaries with health, socioeconomic, and
//! flood-hazard attributes, computes normalized composite vulnerability
//! indices, discovers neighborhood typologies by clustering, and quantifies
//! spatial clustering of risk. It is organized as a library with one thin
//! pipeline binary (`vulnatlas`); the `examples/` directory holds one
//! runnable example per major capability.
//!
//! Module map:
//!
//! * [`geom`] — planar geometry kernel: Web Mercator projection, shoelace
//!   areas, round-join buffering, polygon intersection area, contiguity.
//! * [`ingest`] — boundary/attribute readers, GEOID standardization, joins,
//!   city subsetting.
//! * [`acquire`] — optional fetch clients for census, flood-layer, and AQI
//!   endpoints, fully bypassable with local fixtures.
//! * [`preprocess`] — column cleaning and scaling: Tukey fences,
//!   Winsorization, skewness, Shapiro-Wilk, log/min-max/z-score transforms.
//! * [`indices`] — flood-exposure overlay and the composite vulnerability
//!   scores.
//! * [`stats`] — correlations, Welch t, chi-square, VIF, LOWESS, and the
//!   environmental-justice group comparison.
//! * [`cluster`] — k-means with model selection, Ward linkage, profiles,
//!   and cross-method agreement.
//! * [`spatial`] — spatial weights, Moran's I with permutation inference,
//!   LISA hot spots, Fisher-Jenks classification.
//! * [`report`] — pipeline orchestration, scored GeoJSON, SVG plots, CSV
//!   tables, and the run manifest.
//! * [`synth`] — seeded synthetic-city generator used by tests and examples.

pub mod acquire;
pub mod cluster;
pub mod geom;
pub mod indices;
pub mod ingest;
pub mod preprocess;
pub mod report;
pub mod seed;
pub mod spatial;
pub mod stats;
pub mod synth;





/// Library version string.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
