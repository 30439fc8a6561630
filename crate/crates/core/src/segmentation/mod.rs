//! Individual-tree delineation on the normalized height raster.
//!
//! Stages: canopy height statistics and the tree-core threshold, exact
//! distance transform of the cores, distance-map maxima as markers, and a
//! marker-controlled flood confined to the canopy mask. Per-tree areas are
//! finally rescaled so they sum to the canopy footprint.

mod edt;
mod markers;
mod watershed;

use serde::Serialize;
use thiserror::Error;

use crate::bev::{BevRaster, CanopyMask, GridSpec};

pub use edt::{edt, edt_with, squared_edt};
pub use markers::{find_markers, peak_distance_cells};
pub use watershed::watershed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentationError {
    #[error("no canopy: the canopy mask has no cells")]
    EmptyMask,
    #[error("no trees detected: the tree-core mask is empty")]
    NoMarkers,
    #[error("marker {label} at ({row}, {col}) lies outside the canopy")]
    MarkerOutsideCanopy { label: u32, row: usize, col: usize },
    #[error("two markers share cell ({row}, {col})")]
    DuplicateMarker { row: usize, col: usize },
    #[error("label raster has no labeled cells")]
    NoLabels,
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoreStats {
    pub mu_h: f64,
    /// Population standard deviation.
    pub sigma_h: f64,
    pub t_core: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelRaster {
    pub spec: GridSpec,
    /// Row-major labels; 0 is background.
    pub labels: Vec<u32>,
}

impl LabelRaster {
    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Cell count per label, indexed by label (entry 0 is background).
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.max_label() as usize + 1];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub row: usize,
    pub col: usize,
    pub label: u32,
    /// Distance-transform value at the marker, in cells.
    pub edt_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaCorrection {
    pub label: u32,
    pub raw_area_m2: f64,
    pub corrected_area_m2: f64,
}

fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<(), SegmentationError> {
    if a.width != b.width || a.height != b.height {
        return Err(SegmentationError::GridMismatch(format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    Ok(())
}

/// Mean and population standard deviation of normalized heights over canopy
/// cells, and the tree-core threshold `mean + alpha * std`.
pub fn core_stats(normalized: &BevRaster, mask: &CanopyMask, alpha: f64) -> Result<CoreStats, SegmentationError> {
    check_same_grid(&normalized.spec, &mask.spec)?;
    let values: Vec<f64> = normalized.values.iter().zip(&mask.mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    if values.is_empty() {
        return Err(SegmentationError::EmptyMask);
    }
    let n = values.len() as f64;
    let mu_h = values.iter().sum::<f64>() / n;
    let sigma_h = (values.iter().map(|v| (v - mu_h).powi(2)).sum::<f64>() / n).sqrt();
    Ok(CoreStats { mu_h, sigma_h, t_core: mu_h + alpha * sigma_h })
}

/// Canopy cells strictly above the tree-core threshold.
pub fn tree_core_mask(
    normalized: &BevRaster,
    mask: &CanopyMask,
    stats: &CoreStats,
) -> Result<CanopyMask, SegmentationError> {
    check_same_grid(&normalized.spec, &mask.spec)?;
    let core = normalized.values.iter().zip(&mask.mask).map(|(&v, &m)| m && v > stats.t_core).collect();
    Ok(CanopyMask { spec: mask.spec, mask: core })
}

/// Rescales per-label areas so their sum equals `footprint_m2`; labels are
/// returned in ascending order and only labels with cells are listed.
pub fn correct_areas(
    labels: &LabelRaster,
    footprint_m2: f64,
    cell_size_m: f64,
) -> Result<Vec<AreaCorrection>, SegmentationError> {
    let counts = labels.counts();
    let cell_area = cell_size_m * cell_size_m;
    let raw: Vec<(u32, f64)> = counts
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, &n)| n > 0)
        .map(|(l, &n)| (l as u32, n as f64 * cell_area))
        .collect();
    if raw.is_empty() {
        return Err(SegmentationError::NoLabels);
    }
    let total: f64 = raw.iter().map(|(_, a)| a).sum();
    let factor = footprint_m2 / total;
    Ok(raw
        .into_iter()
        .map(|(label, raw_area_m2)| AreaCorrection { label, raw_area_m2, corrected_area_m2: raw_area_m2 * factor })
        .collect())
}

/// Full delineation output, kept together so callers can report each stage.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub stats: CoreStats,
    pub core: CanopyMask,
    pub markers: Vec<Marker>,
    pub labels: LabelRaster,
}

/// Runs core extraction, distance transform, marker detection and the
/// constrained flood in sequence.
pub fn segment(
    normalized: &BevRaster,
    canopy: &CanopyMask,
    alpha: f64,
    min_peak_distance_m: f64,
) -> Result<Segmentation, SegmentationError> {
    let stats = core_stats(normalized, canopy, alpha)?;
    let core = tree_core_mask(normalized, canopy, &stats)?;
    let distance = edt(&core);
    let markers = find_markers(&distance, &core, peak_distance_cells(min_peak_distance_m, canopy.spec.cell_size_m))?;
    let labels = watershed(normalized, canopy, &markers)?;
    Ok(Segmentation { stats, core, markers, labels })
}
