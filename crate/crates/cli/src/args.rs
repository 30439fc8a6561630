use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "canopy", version, about = "Metric forest inventory from reconstructed point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recover metric scale and pose for a reconstructed cloud.
    Align(AlignArgs),
    /// Level a metric cloud and project it to height, density and canopy rasters.
    Rasterize(RasterizeArgs),
    /// Delineate individual crowns from stored rasters.
    Segment(SegmentArgs),
    /// Per-tree inventory and stand fuel load from stored rasters and labels.
    Inventory(InventoryArgs),
    /// Full pipeline from a reconstruction to inventory reports.
    Run(RunArgs),
    /// Generate a synthetic stand with known ground truth.
    Synth(SynthArgs),
}

/// Overrides for individual configuration keys; these win over the file.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// Flat TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "M")]
    pub cell_size: Option<f64>,
    #[arg(long)]
    pub h_min: Option<f64>,
    #[arg(long)]
    pub core_alpha: Option<f64>,
    #[arg(long, value_name = "M")]
    pub min_peak_distance: Option<f64>,
    #[arg(long)]
    pub sigma_threshold: Option<f64>,
    #[arg(long, value_name = "DEG", allow_negative_numbers = true)]
    pub latitude: Option<f64>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Vec<(&'static str, f64)> {
        [
            ("cell_size_m", self.cell_size),
            ("h_min", self.h_min),
            ("core_alpha", self.core_alpha),
            ("min_peak_distance_m", self.min_peak_distance),
            ("sigma_conifer_threshold", self.sigma_threshold),
            ("latitude_deg", self.latitude),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .collect()
    }
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Reconstructed camera trajectory (CSV).
    #[arg(long)]
    pub recon: PathBuf,
    /// Reference trajectory (CSV, or geodetic JSON).
    #[arg(long)]
    pub gt: PathBuf,
    /// Reconstructed point cloud (PLY).
    #[arg(long)]
    pub cloud: PathBuf,
    /// Metric point cloud to write (PLY).
    #[arg(long)]
    pub out: PathBuf,
    /// Alignment report to write (JSON).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Print the alignment report on standard output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RasterizeArgs {
    /// Metric point cloud (PLY).
    #[arg(long)]
    pub cloud: PathBuf,
    /// Reference trajectory; its camera centroid fixes the up direction.
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long, value_name = "BEVR1")]
    pub height: PathBuf,
    #[arg(long, value_name = "MASK1")]
    pub canopy: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct InventoryArgs {
    #[arg(long, value_name = "BEVR1")]
    pub height: PathBuf,
    #[arg(long, value_name = "MASK1")]
    pub canopy: PathBuf,
    #[arg(long, value_name = "LBLR1")]
    pub labels: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Print the stand summary on standard output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub recon: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Print the stand summary on standard output.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Shape {
    Cone,
    Hemisphere,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub trees: usize,
    #[arg(long, value_enum, default_value_t = Shape::Cone)]
    pub shape: Shape,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Stand width and depth.
    #[arg(long, num_args = 2, value_names = ["W", "D"], default_values_t = [40.0, 40.0])]
    pub extent: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [1.5, 2.5])]
    pub radius: Vec<f64>,
    #[arg(long = "tree-height", num_args = 2, value_names = ["MIN", "MAX"], default_values_t = [14.0, 16.0])]
    pub tree_height: Vec<f64>,
    /// Minimum center distance as a multiple of the summed crown radii.
    #[arg(long, default_value_t = 1.5)]
    pub spacing: f64,
    /// Surface samples per square meter.
    #[arg(long, default_value_t = 16.0)]
    pub density: f64,
    #[arg(long, value_name = "M", default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 36)]
    pub frames: usize,
    #[arg(long, value_name = "M", default_value_t = 50.0)]
    pub orbit_radius: f64,
    #[arg(long, value_name = "M", default_value_t = 60.0)]
    pub altitude: f64,
    /// Scale of the similarity applied to produce the reconstruction.
    #[arg(long, default_value_t = 0.37)]
    pub recon_scale: f64,
    /// Rotation about +Z of that similarity.
    #[arg(long, value_name = "DEG", default_value_t = 30.0, allow_negative_numbers = true)]
    pub recon_yaw: f64,
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], default_values_t = [5.0, -3.0, 2.0], allow_negative_numbers = true)]
    pub recon_translation: Vec<f64>,
    /// Print the truth summary on standard output.
    #[arg(long)]
    pub json: bool,
}
