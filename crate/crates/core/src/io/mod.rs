//! File ingestion and emission: point clouds, trajectories, configuration.

mod config;
mod geodetic;
mod ply;
mod trajectory;

use std::path::Path;

use thiserror::Error;

pub use config::{parse_config, read_config, ConfigWarning, PipelineConfig};
pub use geodetic::{
    ecef_to_enu, geodetic_to_ecef, parse_trajectory_geodetic, read_trajectory_geodetic, GeodeticPosition, WGS84_A,
    WGS84_F,
};
pub use ply::{encode_ply, parse_ply, read_ply, write_ply};
pub use trajectory::{
    encode_trajectory_csv, parse_trajectory_csv, read_trajectory, read_trajectory_csv, write_trajectory_csv,
    TRAJECTORY_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed PLY header at line {line}: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("truncated body at {location}: {reason}")]
    TruncatedBody { location: String, reason: String },
    #[error("malformed body at {location}: {reason}")]
    MalformedBody { location: String, reason: String },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate frame id {0}")]
    DuplicateFrame(u64),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("trajectory has no frames")]
    EmptyFrames,
    #[error("config key '{key}': {reason}")]
    TypeMismatch { key: String, reason: String },
    #[error("cannot write an empty point cloud")]
    EmptyCloud,
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IngestError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::IoFailure { path: path.display().to_string(), source }
    }

    /// True for failures of the file system rather than of file contents.
    pub fn is_io(&self) -> bool {
        matches!(self, IngestError::IoFailure { .. })
    }
}
