use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{LabelRaster, Marker, SegmentationError};
use crate::bev::{BevRaster, CanopyMask};

/// Frontier entry. The heap pops the tallest cell first and, among equal
/// heights, the one enqueued earliest.
#[derive(Debug)]
struct Entry {
    height: f64,
    seq: u64,
    idx: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.height.total_cmp(&other.height).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Marker-controlled priority flood over the negated height surface,
/// restricted to canopy cells.
///
/// Markers seed the queue in list order. A cell is labeled by the neighbor
/// that first reaches it; canopy cells not 8-connected to any marker keep
/// label 0.
pub fn watershed(
    normalized: &BevRaster,
    canopy: &CanopyMask,
    markers: &[Marker],
) -> Result<LabelRaster, SegmentationError> {
    let spec = canopy.spec;
    if normalized.spec.width != spec.width || normalized.spec.height != spec.height {
        return Err(SegmentationError::GridMismatch("height raster and canopy mask differ in size".into()));
    }
    if markers.is_empty() {
        return Err(SegmentationError::NoMarkers);
    }
    let mut labels = vec![0u32; spec.len()];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    for m in markers {
        if m.row >= spec.height || m.col >= spec.width || !canopy.get(m.row, m.col) {
            return Err(SegmentationError::MarkerOutsideCanopy { label: m.label, row: m.row, col: m.col });
        }
        let idx = spec.index(m.row, m.col);
        if labels[idx] != 0 {
            return Err(SegmentationError::DuplicateMarker { row: m.row, col: m.col });
        }
        labels[idx] = m.label;
        heap.push(Entry { height: normalized.values[idx], seq, idx });
        seq += 1;
    }

    while let Some(Entry { idx, .. }) = heap.pop() {
        let label = labels[idx];
        for n in spec.neighbors8(idx) {
            if canopy.mask[n] && labels[n] == 0 {
                labels[n] = label;
                heap.push(Entry { height: normalized.values[n], seq, idx: n });
                seq += 1;
            }
        }
    }
    Ok(LabelRaster { spec, labels })
}
