//! Stage functions shared by the monolithic run and the stage-wise commands.
//!
//! Every stage consumes exactly what the previous stage writes to disk, at
//! the precision it is stored in, so chaining stage files reproduces the
//! monolithic run bit for bit.

use std::fmt;

use thiserror::Error;

use crate::bev::{self, BevError, BevRaster, CanopyMask, NormalizedHeight};
use crate::geometry::{self, AlignmentReport, GeometryError, PointCloud, Rotation, Trajectory, Vec3};
use crate::inventory::{self, InventoryError, StandSummary, TreeRecord};
use crate::io::{IngestError, PipelineConfig};
use crate::par::Execution;
use crate::raster_io::RasterFileError;
use crate::segmentation::{self, LabelRaster, Segmentation, SegmentationError};
use crate::synth::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Align,
    Rasterize,
    Segment,
    Inventory,
    Synth,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Align => "align",
            Stage::Rasterize => "rasterize",
            Stage::Segment => "segment",
            Stage::Inventory => "inventory",
            Stage::Synth => "synth",
        })
    }
}

/// How a failure should be reported to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or invalid input files or parameters.
    Input,
    /// Inputs parse but the data cannot support the computation.
    Degenerate,
    /// File system failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Failure {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Bev(#[from] BevError),
    #[error(transparent)]
    Segmentation(#[from] SegmentationError),
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error(transparent)]
    RasterFile(#[from] RasterFileError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

impl Failure {
    pub fn class(&self) -> ErrorClass {
        use ErrorClass::*;
        match self {
            Failure::Ingest(IngestError::IoFailure { .. }) => Io,
            Failure::Ingest(_) => Input,
            Failure::Geometry(_) => Degenerate,
            Failure::Bev(BevError::EmptyCloud | BevError::NoData | BevError::DegenerateRange { .. }) => Degenerate,
            Failure::Bev(_) => Input,
            Failure::Segmentation(SegmentationError::GridMismatch(_)) => Input,
            Failure::Segmentation(_) => Degenerate,
            Failure::Inventory(InventoryError::IoFailure { .. }) => Io,
            Failure::Inventory(InventoryError::OutOfRange(_) | InventoryError::GridMismatch(_)) => Input,
            Failure::Inventory(_) => Degenerate,
            Failure::RasterFile(RasterFileError::Io { .. }) => Io,
            Failure::RasterFile(_) => Input,
            Failure::Synth(SynthError::PackingInfeasible { .. }) => Degenerate,
            Failure::Synth(SynthError::InvalidParameters(_)) => Input,
        }
    }
}

/// A stage failure, displayed with the stage name first.
#[derive(Debug, Error)]
#[error("{stage}: {failure}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub failure: Failure,
}

impl PipelineError {
    pub fn new(stage: Stage, failure: impl Into<Failure>) -> Self {
        Self { stage, failure: failure.into() }
    }

    pub fn class(&self) -> ErrorClass {
        self.failure.class()
    }
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<Failure>> AtStage<T> for Result<T, E> {
    fn at(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::new(stage, e))
    }
}

/// Rounds coordinates to the single precision used by the PLY writer.
pub fn quantize_cloud(cloud: &PointCloud) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| p.map(|v| v as f32 as f64)).collect(),
        colors: cloud.colors.clone(),
    }
}

/// Rounds cell values to the single precision used by raster files.
pub fn quantize_raster(raster: &BevRaster) -> BevRaster {
    BevRaster { spec: raster.spec, values: raster.values.iter().map(|&v| v as f32 as f64).collect() }
}

/// Estimates the similarity from reconstructed to reference camera centers
/// over shared frame ids and maps the cloud into the reference frame. The
/// returned cloud is already at file precision.
pub fn align_stage(
    recon: &Trajectory,
    reference: &Trajectory,
    cloud: &PointCloud,
    exec: Execution,
) -> Result<(PointCloud, AlignmentReport), PipelineError> {
    let (source, target) = recon.correspondences(reference);
    let report = geometry::umeyama_align(&source, &target).at(Stage::Align)?;
    let metric = geometry::apply_sim3_with(cloud, &report.transform, exec);
    Ok((quantize_cloud(&metric), report))
}

#[derive(Debug, Clone)]
pub struct RasterOutputs {
    pub leveling: Rotation,
    /// Per-cell maximum height at file precision.
    pub height: BevRaster,
    pub density: BevRaster,
    pub normalized: NormalizedHeight,
    pub canopy: CanopyMask,
}

/// Levels the metric cloud against the reference camera centroid, projects
/// it to height and density rasters and derives the canopy mask.
pub fn rasterize_stage(
    metric: &PointCloud,
    reference: &Trajectory,
    config: &PipelineConfig,
    exec: Execution,
) -> Result<RasterOutputs, PipelineError> {
    let camera_centroid: Vec3 = reference.centroid().ok_or(IngestError::EmptyFrames).at(Stage::Rasterize)?;
    let (leveled, leveling) = geometry::pca_level(metric, &camera_centroid).at(Stage::Rasterize)?;
    let (height, density) = bev::rasterize_with(&leveled, config.cell_size_m, exec).at(Stage::Rasterize)?;
    let height = quantize_raster(&height);
    let (normalized, canopy) = normalize_stage(&height, config).at(Stage::Rasterize)?;
    Ok(RasterOutputs { leveling, height, density, normalized, canopy })
}

/// Rasterization of an already level, metric cloud.
pub fn rasterize_level_cloud(
    cloud: &PointCloud,
    config: &PipelineConfig,
    exec: Execution,
) -> Result<RasterOutputs, PipelineError> {
    let (height, density) = bev::rasterize_with(cloud, config.cell_size_m, exec).at(Stage::Rasterize)?;
    let height = quantize_raster(&height);
    let (normalized, canopy) = normalize_stage(&height, config).at(Stage::Rasterize)?;
    Ok(RasterOutputs { leveling: Rotation::identity(), height, density, normalized, canopy })
}

pub fn normalize_stage(
    height: &BevRaster,
    config: &PipelineConfig,
) -> Result<(NormalizedHeight, CanopyMask), BevError> {
    let normalized = bev::normalize_height(height, config.ground_percentile, config.top_percentile)?;
    let canopy = bev::canopy_mask(&normalized.raster, config.h_min);
    Ok((normalized, canopy))
}

fn check_grid(a: &BevRaster, b: &CanopyMask) -> Result<(), SegmentationError> {
    if a.spec != b.spec {
        return Err(SegmentationError::GridMismatch("height raster and canopy mask describe different grids".into()));
    }
    Ok(())
}

/// Delineates crowns from the stored height raster and canopy mask.
pub fn segment_stage(
    height: &BevRaster,
    canopy: &CanopyMask,
    config: &PipelineConfig,
) -> Result<Segmentation, PipelineError> {
    check_grid(height, canopy).at(Stage::Segment)?;
    if canopy.count() == 0 {
        return Err(PipelineError::new(Stage::Segment, SegmentationError::EmptyMask));
    }
    let (normalized, _) = normalize_stage(height, config).at(Stage::Segment)?;
    segmentation::segment(&normalized.raster, canopy, config.core_alpha, config.min_peak_distance_m).at(Stage::Segment)
}

/// Per-tree records and stand totals from the stored rasters and labels.
pub fn inventory_stage(
    height: &BevRaster,
    canopy: &CanopyMask,
    labels: &LabelRaster,
    config: &PipelineConfig,
) -> Result<(Vec<TreeRecord>, StandSummary), PipelineError> {
    check_grid(height, canopy).at(Stage::Inventory)?;
    if labels.spec != canopy.spec {
        return Err(PipelineError::new(
            Stage::Inventory,
            InventoryError::GridMismatch("label raster and canopy mask describe different grids".into()),
        ));
    }
    let (normalized, _) = normalize_stage(height, config).at(Stage::Inventory)?;
    let footprint = bev::footprint_area(canopy);
    let corrections = segmentation::correct_areas(labels, footprint, canopy.spec.cell_size_m).at(Stage::Inventory)?;
    let trees = inventory::measure_trees(labels, &normalized, height, &corrections, config).at(Stage::Inventory)?;
    inventory::fuel_load(&trees, footprint, config.latitude_deg, config).at(Stage::Inventory)
}
