//! Bird's-eye-view rasters: height/density projection, robust height
//! normalization and the canopy footprint mask.
//!
//! Grids are row-major with row index growing along +Y. Cell `(row, col)`
//! has its center at `origin + (col, row) * cell_size`. Cell boundaries sit
//! on integer multiples of the cell size in world coordinates, so the same
//! point always lands in the same world cell regardless of the cloud extent.

use serde::Serialize;
use thiserror::Error;

use crate::geometry::PointCloud;
use crate::par::{self, Execution};

/// Largest grid accepted by [`rasterize`], in cells.
pub const MAX_CELLS: usize = 1 << 30;

/// Minimum spread between ground and top percentiles for normalization.
pub const MIN_HEIGHT_RANGE: f64 = 1e-6;

const POINT_CHUNK: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BevError {
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point cloud has non-finite coordinates")]
    NonFinite,
    #[error("grid of {width}x{height} cells exceeds the supported size")]
    GridTooLarge { width: usize, height: usize },
    #[error("cell size must be positive and finite, got {0}")]
    InvalidCellSize(f64),
    #[error("height raster has no data cells")]
    NoData,
    #[error("invalid percentiles ground={ground} top={top}")]
    InvalidPercentiles { ground: f64, top: f64 },
    #[error("flat scene: top height {top} is within 1e-6 of ground height {ground}")]
    DegenerateRange { ground: f64, top: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub cell_size_m: f64,
    /// World X of the center of cell (0, 0).
    pub origin_x_m: f64,
    /// World Y of the center of cell (0, 0).
    pub origin_y_m: f64,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn row_col(&self, idx: usize) -> (usize, usize) {
        (idx / self.width, idx % self.width)
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (self.origin_x_m + col as f64 * self.cell_size_m, self.origin_y_m + row as f64 * self.cell_size_m)
    }

    pub fn cell_area_m2(&self) -> f64 {
        self.cell_size_m * self.cell_size_m
    }

    /// 8-connected neighbors of a cell, in row-major order.
    pub fn neighbors8(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = self.row_col(idx);
        let (r, c) = (r as isize, c as isize);
        const OFFSETS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
        OFFSETS.iter().filter_map(move |&(dr, dc)| {
            let (nr, nc) = (r + dr, c + dc);
            (nr >= 0 && nc >= 0 && (nr as usize) < self.height && (nc as usize) < self.width)
                .then(|| nr as usize * self.width + nc as usize)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevRaster {
    pub spec: GridSpec,
    /// Row-major values; NaN marks a cell without data.
    pub values: Vec<f64>,
}

impl BevRaster {
    pub fn filled(spec: GridSpec, value: f64) -> Self {
        Self { spec, values: vec![value; spec.len()] }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.spec.index(row, col)]
    }

    pub fn finite_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(|v| !v.is_nan())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanopyMask {
    pub spec: GridSpec,
    pub mask: Vec<bool>,
}

impl CanopyMask {
    pub fn new(spec: GridSpec, mask: Vec<bool>) -> Self {
        assert_eq!(spec.len(), mask.len());
        Self { spec, mask }
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[self.spec.index(row, col)]
    }
}

/// Heights mapped onto `[0, 1]` plus the meter values that map to 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedHeight {
    pub raster: BevRaster,
    pub z_ground: f64,
    pub z_top: f64,
}

impl NormalizedHeight {
    pub fn to_meters(&self, normalized: f64) -> f64 {
        self.z_ground + normalized * (self.z_top - self.z_ground)
    }
}

fn world_cell(v: f64, cell: f64) -> i64 {
    (v / cell).floor() as i64
}

/// Grid covering the XY bounding box of `cloud`, padded by one cell.
pub fn grid_for_cloud(cloud: &PointCloud, cell_size_m: f64) -> Result<(GridSpec, i64, i64), BevError> {
    if !(cell_size_m > 0.0 && cell_size_m.is_finite()) {
        return Err(BevError::InvalidCellSize(cell_size_m));
    }
    if cloud.is_empty() {
        return Err(BevError::EmptyCloud);
    }
    let (mut min_x, mut max_x, mut min_y, mut max_y) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &cloud.points {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(BevError::NonFinite);
        }
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let (kx0, kx1) = (world_cell(min_x, cell_size_m), world_cell(max_x, cell_size_m));
    let (ky0, ky1) = (world_cell(min_y, cell_size_m), world_cell(max_y, cell_size_m));
    let width = (kx1 - kx0) as usize + 3;
    let height = (ky1 - ky0) as usize + 3;
    if width.checked_mul(height).is_none_or(|n| n > MAX_CELLS) {
        return Err(BevError::GridTooLarge { width, height });
    }
    // column 0 is the padding cell left of world cell kx0
    let spec = GridSpec {
        width,
        height,
        cell_size_m,
        origin_x_m: (kx0 - 1) as f64 * cell_size_m + 0.5 * cell_size_m,
        origin_y_m: (ky0 - 1) as f64 * cell_size_m + 0.5 * cell_size_m,
    };
    Ok((spec, kx0 - 1, ky0 - 1))
}

/// Projects the cloud onto a max-height raster and a point-count raster.
pub fn rasterize(cloud: &PointCloud, cell_size_m: f64) -> Result<(BevRaster, BevRaster), BevError> {
    rasterize_with(cloud, cell_size_m, Execution::default())
}

pub fn rasterize_with(
    cloud: &PointCloud,
    cell_size_m: f64,
    exec: Execution,
) -> Result<(BevRaster, BevRaster), BevError> {
    let (spec, kx_base, ky_base) = grid_for_cloud(cloud, cell_size_m)?;
    let cell_of = |p: &crate::geometry::Vec3| {
        let col = (world_cell(p.x, cell_size_m) - kx_base) as usize;
        let row = (world_cell(p.y, cell_size_m) - ky_base) as usize;
        spec.index(row, col)
    };

    // Max and count are exact and order-independent, so sharded grids merge
    // to the same bits as a single sequential pass.
    let (heights, counts) = par::chunked_fold(
        &cloud.points,
        POINT_CHUNK,
        exec,
        || (Vec::new(), Vec::new()),
        |(mut h, mut n): (Vec<f64>, Vec<u32>), p| {
            if h.is_empty() {
                h = vec![f64::NEG_INFINITY; spec.len()];
                n = vec![0u32; spec.len()];
            }
            let i = cell_of(p);
            if p.z > h[i] {
                h[i] = p.z;
            }
            n[i] += 1;
            (h, n)
        },
        |(mut h, mut n), (h2, n2)| {
            if h.is_empty() {
                return (h2, n2);
            }
            for (i, (z, c)) in h2.into_iter().zip(n2).enumerate() {
                if z > h[i] {
                    h[i] = z;
                }
                n[i] += c;
            }
            (h, n)
        },
    );

    let height = BevRaster {
        spec,
        values: heights.into_iter().zip(&counts).map(|(z, &c)| if c == 0 { f64::NAN } else { z }).collect(),
    };
    let density = BevRaster { spec, values: counts.into_iter().map(f64::from).collect() };
    Ok((height, density))
}

/// Linear-interpolation percentile of sorted data (`p` in `[0, 100]`).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

/// Maps heights to `[0, 1]` between two percentiles of the data cells,
/// clamping outside that band. NaN cells stay NaN.
pub fn normalize_height(
    height: &BevRaster,
    ground_percentile: f64,
    top_percentile: f64,
) -> Result<NormalizedHeight, BevError> {
    if !(0.0..=100.0).contains(&ground_percentile)
        || !(0.0..=100.0).contains(&top_percentile)
        || ground_percentile >= top_percentile
    {
        return Err(BevError::InvalidPercentiles { ground: ground_percentile, top: top_percentile });
    }
    let mut data: Vec<f64> = height.finite_values().collect();
    if data.is_empty() {
        return Err(BevError::NoData);
    }
    data.sort_by(f64::total_cmp);
    let z_ground = percentile_sorted(&data, ground_percentile);
    let z_top = percentile_sorted(&data, top_percentile);
    if z_top - z_ground < MIN_HEIGHT_RANGE {
        return Err(BevError::DegenerateRange { ground: z_ground, top: z_top });
    }
    let span = z_top - z_ground;
    let values =
        height.values.iter().map(|&z| if z.is_nan() { z } else { ((z - z_ground) / span).clamp(0.0, 1.0) }).collect();
    Ok(NormalizedHeight { raster: BevRaster { spec: height.spec, values }, z_ground, z_top })
}

/// Cells whose normalized height is strictly above `h_min`.
pub fn canopy_mask(normalized: &BevRaster, h_min: f64) -> CanopyMask {
    CanopyMask { spec: normalized.spec, mask: normalized.values.iter().map(|&v| v > h_min).collect() }
}

pub fn footprint_area(mask: &CanopyMask) -> f64 {
    mask.count() as f64 * mask.spec.cell_area_m2()
}
