//! Pipeline configuration: TOML primary, JSON accepted.
//!
//! The master seed is mandatory — no run may depend on ambient entropy.
//! All defaults are echoed into the run manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geom::ContiguityRule;
use crate::indices::IndexConfig;
use crate::ingest::IndicatorSpec;
use crate::spatial::WeightsMode;

use super::PipelineError;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableInput {
    pub path: PathBuf,
    pub source: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InputPaths {
    pub boundaries: PathBuf,
    pub tables: Vec<TableInput>,
    pub flood_layer: PathBuf,
    pub city_boundary: PathBuf,
    /// Optional county AQI CSV (county,aqi) attached as a descriptive column.
    #[serde(default)]
    pub aqi: Option<PathBuf>,
    #[serde(default = "default_geoid_property")]
    pub geoid_property: String,
}

fn default_geoid_property() -> String {
    "GEOID".to_string()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contiguity {
    Queen,
    Rook,
}

impl From<Contiguity> for ContiguityRule {
    fn from(c: Contiguity) -> ContiguityRule {
        match c {
            Contiguity::Queen => ContiguityRule::Queen,
            Contiguity::Rook => ContiguityRule::Rook,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum KPolicy {
    /// Choose k by silhouette argmax over the range.
    Silhouette { min: usize, max: usize },
    /// Fixed k.
    Fixed { k: usize },
}

impl Default for KPolicy {
    fn default() -> Self {
        KPolicy::Silhouette { min: 2, max: 10 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Cleaned (unstandardized) columns entering the feature matrix.
    pub features: Vec<String>,
    #[serde(default)]
    pub k_policy: KPolicy,
    #[serde(default = "default_n_init")]
    pub n_init: usize,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Column whose descending cluster means define presentation order.
    #[serde(default = "default_rank_column")]
    pub rank_by: String,
}

fn default_n_init() -> usize {
    10
}

fn default_max_iter() -> usize {
    300
}

fn default_tol() -> f64 {
    1e-6
}

fn default_rank_column() -> String {
    "poverty_rate".to_string()
}

/// The 12-variable typology feature set.
pub fn default_cluster_features() -> Vec<String> {
    [
        "asthma_pct",
        "copd_pct",
        "flood_exposure_pct",
        "renter_rate",
        "pre1980_rate",
        "poverty_rate",
        "no_diploma_rate",
        "disability_pct",
        "age65_rate",
        "limited_english_rate",
        "no_vehicle_rate",
        "median_rent",
    ]
    .map(String::from)
    .to_vec()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpatialConfig {
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_contiguity")]
    pub contiguity: Contiguity,
    #[serde(default = "default_weights_mode")]
    pub weights_mode: WeightsMode,
    #[serde(default = "default_jenks_classes")]
    pub jenks_classes: usize,
}

fn default_permutations() -> usize {
    999
}

fn default_alpha() -> f64 {
    0.05
}

fn default_contiguity() -> Contiguity {
    Contiguity::Queen
}

fn default_weights_mode() -> WeightsMode {
    WeightsMode::RowStandardized
}

fn default_jenks_classes() -> usize {
    5
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            permutations: default_permutations(),
            alpha: default_alpha(),
            contiguity: default_contiguity(),
            weights_mode: default_weights_mode(),
            jenks_classes: default_jenks_classes(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StatsConfig {
    /// Columns entering the correlation matrix; empty means "all indicator
    /// columns plus the derived scores".
    #[serde(default)]
    pub correlation_columns: Vec<String>,
    /// Predictors for the VIF diagnostic; empty means the index indicators.
    #[serde(default)]
    pub vif_columns: Vec<String>,
    #[serde(default)]
    pub ej_continuous: Vec<String>,
    #[serde(default)]
    pub ej_categorical: Vec<String>,
    /// Scatter plot variable pair (x, y).
    #[serde(default)]
    pub scatter: Option<(String, String)>,
    #[serde(default = "default_lowess_frac")]
    pub lowess_frac: f64,
}

fn default_lowess_frac() -> f64 {
    0.3
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    /// Master seed; every randomized stage derives from it.
    pub master_seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub indicators: Vec<IndicatorSpec>,
    #[serde(default)]
    pub index: IndexConfig,
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub spatial: SpatialConfig,
    #[serde(default)]
    pub stats: StatsConfig,
    pub run: RunConfig,
}

impl PipelineConfig {
    /// Parse TOML (primary) or JSON (accepted) by extension, TOML otherwise.
    pub fn load(path: &Path) -> Result<PipelineConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let is_json = path.extension().map(|e| e == "json").unwrap_or(false);
        if is_json {
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))
        }
    }

    /// Dry-run checks: referenced paths exist, weights valid, referenced
    /// columns declared. Returns the list of problems.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut check_path = |label: &str, p: &Path| {
            if !p.exists() {
                problems.push(format!("{label} path does not exist: {}", p.display()));
            }
        };
        check_path("boundaries", &self.inputs.boundaries);
        check_path("flood_layer", &self.inputs.flood_layer);
        check_path("city_boundary", &self.inputs.city_boundary);
        for t in &self.inputs.tables {
            check_path(&format!("table {:?}", t.source), &t.path);
        }
        if let Some(aqi) = &self.inputs.aqi {
            check_path("aqi", aqi);
        }

        if let Err(e) = self.index.validate_weights() {
            problems.push(e.to_string());
        }

        let mut known: Vec<&str> = self.indicators.iter().map(|s| s.name.as_str()).collect();
        known.push("flood_exposure_pct");
        for list in [&self.index.health_indicators, &self.index.socio_indicators] {
            for name in list {
                if !known.contains(&name.as_str()) {
                    problems.push(format!("index references undeclared indicator {name:?}"));
                }
            }
        }
        for name in &self.cluster.features {
            if !known.contains(&name.as_str()) {
                problems.push(format!("cluster features reference undeclared column {name:?}"));
            }
        }
        match &self.cluster.k_policy {
            KPolicy::Silhouette { min, max } => {
                if *min < 2 || max < min {
                    problems.push(format!("invalid silhouette k range {min}..{max}"));
                }
            }
            KPolicy::Fixed { k } => {
                if *k < 1 {
                    problems.push("fixed k must be at least 1".to_string());
                }
            }
        }
        if self.spatial.jenks_classes < 1 {
            problems.push("jenks_classes must be at least 1".to_string());
        }
        if !(self.stats.lowess_frac > 0.0 && self.stats.lowess_frac <= 1.0) {
            problems.push(format!("lowess_frac out of (0, 1]: {}", self.stats.lowess_frac));
        }
        problems
    }

    /// Canonical serialized form used for the manifest digest.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is serializable")
    }
}
