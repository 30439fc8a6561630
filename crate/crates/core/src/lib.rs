//! Metric forest inventory from reconstructed point clouds.
//!
//! The pipeline aligns a reconstruction to a reference trajectory, levels it,
//! projects it to bird's-eye rasters, delineates individual crowns and turns
//! crown areas into a fuel-load estimate.

pub mod bev;
pub mod geometry;
pub mod inventory;
pub mod io;
pub mod par;
pub mod pipeline;
pub mod raster_io;
pub mod segmentation;
pub mod synth;

pub use par::Execution;
