//! Pipeline orchestration, configuration, and artifact emission.

pub mod config;
pub mod geojson_out;
pub mod manifest;
pub mod pipeline;
pub mod svg;
pub mod tables;

use thiserror::Error;

/// Pipeline stages in execution order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Preprocess,
    Indices,
    Stats,
    Cluster,
    Spatial,
    Emit,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Indices => "indices",
            Stage::Stats => "stats",
            Stage::Cluster => "cluster",
            Stage::Spatial => "spatial",
            Stage::Emit => "emit",
        }
    }

    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Preprocess,
        Stage::Indices,
        Stage::Stats,
        Stage::Cluster,
        Stage::Spatial,
        Stage::Emit,
    ];
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn stage(stage: Stage, err: impl std::fmt::Display) -> Self {
        PipelineError::Stage { stage: stage.name(), message: err.to_string() }
    }
}

pub(crate) fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| PipelineError::Io {
            path: parent.display().to_string(),
            source: e,
        })?;
    }
    std::fs::write(path, bytes).map_err(|e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    })
}
