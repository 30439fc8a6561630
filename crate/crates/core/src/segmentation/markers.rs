use std::collections::VecDeque;

use super::{Marker, SegmentationError};
use crate::bev::{BevRaster, CanopyMask};

/// Converts a separation in meters to whole cells, rounding up.
pub fn peak_distance_cells(min_peak_distance_m: f64, cell_size_m: f64) -> f64 {
    (min_peak_distance_m / cell_size_m).ceil()
}

/// Local maxima of the distance map inside `core`, thinned greedily so that
/// accepted markers are at least `min_peak_distance_cells` apart.
///
/// A maximum is a connected set of equal-valued core cells with no strictly
/// higher neighbor. It is represented by its member cell nearest the set's
/// centroid (first in row-major order on ties).
pub fn find_markers(
    edt_map: &BevRaster,
    core: &CanopyMask,
    min_peak_distance_cells: f64,
) -> Result<Vec<Marker>, SegmentationError> {
    let spec = core.spec;
    if edt_map.spec.width != spec.width || edt_map.spec.height != spec.height {
        return Err(SegmentationError::GridMismatch("distance map and core mask differ in size".into()));
    }
    if core.count() == 0 {
        return Err(SegmentationError::NoMarkers);
    }
    let value = &edt_map.values;

    let mut visited = vec![false; spec.len()];
    let mut candidates: Vec<(f64, usize)> = Vec::new();
    let mut queue = VecDeque::new();
    let mut plateau = Vec::new();
    for start in 0..spec.len() {
        if !core.mask[start] || visited[start] {
            continue;
        }
        let level = value[start];
        let mut is_max = true;
        plateau.clear();
        visited[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            plateau.push(i);
            for n in spec.neighbors8(i) {
                if value[n] > level {
                    is_max = false;
                } else if value[n] == level && core.mask[n] && !visited[n] {
                    visited[n] = true;
                    queue.push_back(n);
                }
            }
        }
        if !is_max {
            continue;
        }
        plateau.sort_unstable();
        let k = plateau.len() as f64;
        let (sr, sc) = plateau.iter().fold((0.0, 0.0), |(sr, sc), &i| {
            let (r, c) = spec.row_col(i);
            (sr + r as f64, sc + c as f64)
        });
        let (cr, cc) = (sr / k, sc / k);
        let mut best = plateau[0];
        let mut best_d = f64::INFINITY;
        for &i in plateau.iter() {
            let (r, c) = spec.row_col(i);
            let d = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        candidates.push((level, best));
    }

    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let min_sq = min_peak_distance_cells * min_peak_distance_cells;
    let mut markers: Vec<Marker> = Vec::new();
    for (level, idx) in candidates {
        let (r, c) = spec.row_col(idx);
        let clear = markers.iter().all(|m| {
            let (dr, dc) = (m.row as f64 - r as f64, m.col as f64 - c as f64);
            dr * dr + dc * dc >= min_sq
        });
        if clear {
            markers.push(Marker { row: r, col: c, label: markers.len() as u32 + 1, edt_value: level });
        }
    }
    Ok(markers)
}
