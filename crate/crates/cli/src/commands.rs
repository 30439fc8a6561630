use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use canopy_core::bev::{BevRaster, CanopyMask};
use canopy_core::geometry::{AlignmentReport, PointCloud, Sim3Transform, Trajectory, Vec3};
use canopy_core::inventory::{inventory_csv, summary_json, StandSummary, TreeRecord};
use canopy_core::io::{self, PipelineConfig};
use canopy_core::pipeline::{self, ErrorClass, Failure, PipelineError, RasterOutputs, Stage};
use canopy_core::raster_io;
use canopy_core::segmentation::LabelRaster;
use canopy_core::synth;
use canopy_core::Execution;
use nalgebra::Rotation3;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::args::{AlignArgs, ConfigArgs, InventoryArgs, RasterizeArgs, RunArgs, SegmentArgs, Shape, SynthArgs};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match e.class() {
            ErrorClass::Input => EXIT_INPUT,
            ErrorClass::Degenerate => EXIT_DEGENERATE,
            ErrorClass::Io => EXIT_IO,
        };
        Self { code, message: e.to_string() }
    }
}

/// Prefixes the failing file to the message while keeping the error class.
fn with_file<T, E: Into<Failure>>(stage: Stage, path: &Path, r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| {
        let err = PipelineError::new(stage, e);
        let mut cli = CliError::from(err);
        let prefix = format!("{stage}: ");
        let rest = cli.message.strip_prefix(&prefix).unwrap_or(&cli.message).to_string();
        cli.message = format!("{prefix}{}: {rest}", path.display());
        cli
    })
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError { code: EXIT_IO, message: format!("{}: {e}", path.display()) }
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let (config, warnings) = with_file(Stage::Ingest, path, io::read_config(path))?;
            for w in warnings {
                log::warn!("{}: {w}", path.display());
            }
            config
        }
        None => PipelineConfig::default(),
    };
    for (key, value) in args.overrides() {
        config.set(key, value).map_err(|e| CliError { code: EXIT_INPUT, message: format!("--{}: {e}", key) })?;
    }
    if config.ground_percentile >= config.top_percentile {
        return Err(CliError { code: EXIT_INPUT, message: "ground_percentile must be below top_percentile".into() });
    }
    Ok(config)
}

/// Collects emitted files so the manifest can hash them.
struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        log::info!("wrote {}", path.display());
        self.written.push(name.to_string());
        Ok(())
    }
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        _ => Ok(()),
    }
}

fn read_cloud(path: &Path) -> Result<PointCloud, CliError> {
    with_file(Stage::Ingest, path, io::read_ply(path))
}

fn read_traj(path: &Path) -> Result<Trajectory, CliError> {
    with_file(Stage::Ingest, path, io::read_trajectory(path))
}

#[derive(Serialize)]
struct AlignmentJson {
    scale: f64,
    rotation_quaternion_wxyz: [f64; 4],
    translation: [f64; 3],
    rmse_m: f64,
    n_points: usize,
}

fn alignment_json(report: &AlignmentReport) -> String {
    let q = report.transform.quaternion();
    let t = report.transform.translation;
    let body = AlignmentJson {
        scale: report.transform.scale,
        rotation_quaternion_wxyz: [q.w, q.i, q.j, q.k],
        translation: [t.x, t.y, t.z],
        rmse_m: report.rmse_m,
        n_points: report.n_points,
    };
    serde_json::to_string_pretty(&body).expect("report serializes") + "\n"
}

pub fn align(args: &AlignArgs, exec: Execution) -> Result<(), CliError> {
    let recon = read_traj(&args.recon)?;
    let gt = read_traj(&args.gt)?;
    let cloud = read_cloud(&args.cloud)?;
    let (metric, report) = pipeline::align_stage(&recon, &gt, &cloud, exec)?;
    log::info!("scale {:.9}, rmse {:.6} m over {} frames", report.transform.scale, report.rmse_m, report.n_points);
    create_parent(&args.out)?;
    with_file(Stage::Align, &args.out, io::write_ply(&metric, &args.out))?;
    let json = alignment_json(&report);
    if let Some(path) = &args.report {
        create_parent(path)?;
        fs::write(path, &json).map_err(|e| io_error(path, e))?;
    }
    if args.json {
        print!("{json}");
    }
    Ok(())
}

fn write_rasters(out: &mut OutDir, r: &RasterOutputs) -> Result<(), CliError> {
    out.write("height.bevr1", &raster_io::encode_bevr(&r.height))?;
    out.write("density.bevr1", &raster_io::encode_bevr(&r.density))?;
    out.write("canopy.mask1", &raster_io::encode_mask(&r.canopy))?;
    out.write("height.pgm", &raster_io::height_preview_pgm(&r.normalized.raster))?;
    out.write("canopy.pgm", &raster_io::mask_preview_pgm(&r.canopy))
}

fn write_labels(out: &mut OutDir, labels: &LabelRaster) -> Result<(), CliError> {
    out.write("labels.lblr1", &raster_io::encode_labels(labels))?;
    out.write("labels.pgm", &raster_io::label_preview_pgm(labels))
}

fn write_inventory(out: &mut OutDir, records: &[TreeRecord], summary: &StandSummary) -> Result<String, CliError> {
    let json = summary_json(summary);
    out.write("inventory.csv", inventory_csv(records).as_bytes())?;
    out.write("summary.json", json.as_bytes())?;
    Ok(json)
}

pub fn rasterize(args: &RasterizeArgs, exec: Execution) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let cloud = read_cloud(&args.cloud)?;
    let gt = read_traj(&args.gt)?;
    let r = pipeline::rasterize_stage(&cloud, &gt, &config, exec)?;
    log_rasters(&r);
    let mut out = OutDir::create(&args.out_dir)?;
    write_rasters(&mut out, &r)
}

fn log_rasters(r: &RasterOutputs) {
    log::info!(
        "grid {}x{} at {} m, ground {:.3} m, top {:.3} m, {} canopy cells",
        r.height.spec.width,
        r.height.spec.height,
        r.height.spec.cell_size_m,
        r.normalized.z_ground,
        r.normalized.z_top,
        r.canopy.count()
    );
}

fn read_height(path: &Path) -> Result<BevRaster, CliError> {
    with_file(Stage::Ingest, path, raster_io::read_bevr(path))
}

fn read_canopy(path: &Path) -> Result<CanopyMask, CliError> {
    with_file(Stage::Ingest, path, raster_io::read_mask(path))
}

pub fn segment(args: &SegmentArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let height = read_height(&args.height)?;
    let canopy = read_canopy(&args.canopy)?;
    let seg = pipeline::segment_stage(&height, &canopy, &config)?;
    log::info!("{} markers, core threshold {:.4}", seg.markers.len(), seg.stats.t_core);
    let mut out = OutDir::create(&args.out_dir)?;
    write_labels(&mut out, &seg.labels)
}

pub fn inventory(args: &InventoryArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let height = read_height(&args.height)?;
    let canopy = read_canopy(&args.canopy)?;
    let labels = with_file(Stage::Ingest, &args.labels, raster_io::read_labels(&args.labels))?;
    let (records, summary) = pipeline::inventory_stage(&height, &canopy, &labels, &config)?;
    let mut out = OutDir::create(&args.out_dir)?;
    let json = write_inventory(&mut out, &records, &summary)?;
    if args.json {
        print!("{json}");
    }
    Ok(())
}

#[derive(Serialize)]
struct ManifestInputs<'a> {
    cloud: &'a Path,
    recon: &'a Path,
    gt: &'a Path,
    config: Option<&'a Path>,
}

#[derive(Serialize)]
struct ManifestOutput {
    file: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct StageTiming {
    stage: &'static str,
    ms: f64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    inputs: ManifestInputs<'a>,
    config: &'a PipelineConfig,
    timings_ms: Vec<StageTiming>,
    outputs: Vec<ManifestOutput>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Timer(Vec<StageTiming>, Instant);

impl Timer {
    fn new() -> Self {
        Self(Vec::new(), Instant::now())
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.0.push(StageTiming { stage, ms: (now - self.1).as_secs_f64() * 1e3 });
        self.1 = now;
    }
}

pub fn run(args: &RunArgs, exec: Execution) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let mut timer = Timer::new();
    let cloud = read_cloud(&args.cloud)?;
    let recon = read_traj(&args.recon)?;
    let gt = read_traj(&args.gt)?;
    timer.lap("ingest");

    let (metric, report) = pipeline::align_stage(&recon, &gt, &cloud, exec)?;
    log::info!("scale {:.9}, rmse {:.6} m over {} frames", report.transform.scale, report.rmse_m, report.n_points);
    timer.lap("align");
    let rasters = pipeline::rasterize_stage(&metric, &gt, &config, exec)?;
    log_rasters(&rasters);
    timer.lap("rasterize");
    let seg = pipeline::segment_stage(&rasters.height, &rasters.canopy, &config)?;
    log::info!("{} markers, core threshold {:.4}", seg.markers.len(), seg.stats.t_core);
    timer.lap("segment");
    let (records, summary) = pipeline::inventory_stage(&rasters.height, &rasters.canopy, &seg.labels, &config)?;
    log::info!("{} trees, {:.3} t fuel", summary.n_trees, summary.total_fuel_tons);
    timer.lap("inventory");

    let mut out = OutDir::create(&args.out_dir)?;
    let ply = with_file(Stage::Align, &args.out_dir, io::encode_ply(&metric))?;
    out.write("metric.ply", &ply)?;
    out.write("alignment.json", alignment_json(&report).as_bytes())?;
    write_rasters(&mut out, &rasters)?;
    write_labels(&mut out, &seg.labels)?;
    let json = write_inventory(&mut out, &records, &summary)?;
    timer.lap("write");

    let mut files = out.written.clone();
    files.sort();
    let outputs = files
        .into_iter()
        .map(|file| {
            let path = out.dir.join(&file);
            let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
            Ok(ManifestOutput { bytes: bytes.len() as u64, sha256: sha256_hex(&bytes), file })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = Manifest {
        tool: "canopy",
        version: env!("CARGO_PKG_VERSION"),
        inputs: ManifestInputs {
            cloud: &args.cloud,
            recon: &args.recon,
            gt: &args.gt,
            config: args.config.config.as_deref(),
        },
        config: &config,
        timings_ms: timer.0,
        outputs,
    };
    out.write(
        "manifest.json",
        (serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n").as_bytes(),
    )?;
    if args.json {
        print!("{json}");
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let params = synth::StandParams {
        n_trees: args.trees,
        extent_m: (args.extent[0], args.extent[1]),
        radius_range_m: (args.radius[0], args.radius[1]),
        height_range_m: (args.tree_height[0], args.tree_height[1]),
        shape: match args.shape {
            Shape::Cone => synth::TreeShape::Cone,
            Shape::Hemisphere => synth::TreeShape::Hemisphere,
        },
        min_spacing_factor: args.spacing,
        seed: args.seed,
    };
    if !(args.density > 0.0 && args.noise >= 0.0 && args.recon_scale > 0.0 && args.frames >= 3) {
        return Err(CliError::usage("density and scale must be positive, noise non-negative, frames at least 3"));
    }
    let stand = synth::generate_stand(&params).map_err(|e| CliError::from(PipelineError::new(Stage::Synth, e)))?;
    let cloud = synth::sample_cloud(&stand, args.density, args.noise, args.seed);
    let gt = synth::synth_trajectory(&stand, args.orbit_radius, args.altitude, args.frames);
    let yaw = Rotation3::from_axis_angle(&Vec3::z_axis(), args.recon_yaw.to_radians());
    let t = &args.recon_translation;
    let to_recon = Sim3Transform::new(args.recon_scale, *yaw.matrix(), Vec3::new(t[0], t[1], t[2]));
    let recon = synth::perturb_sim3(&gt, &to_recon);
    let recon_cloud = canopy_core::geometry::apply_sim3(&cloud, &to_recon);

    let mut out = OutDir::create(&args.out_dir)?;
    let ply = with_file(Stage::Synth, &args.out_dir, io::encode_ply(&recon_cloud))?;
    out.write("cloud.ply", &ply)?;
    out.write("recon.csv", io::encode_trajectory_csv(&recon).as_bytes())?;
    out.write("gt.csv", io::encode_trajectory_csv(&gt).as_bytes())?;
    let truth = stand.truth_json();
    out.write("truth.json", truth.as_bytes())?;
    if args.json {
        print!("{truth}");
    }
    Ok(())
}
