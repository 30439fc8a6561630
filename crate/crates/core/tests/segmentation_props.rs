use canopy_core::bev::{BevRaster, CanopyMask, GridSpec};
use canopy_core::segmentation::{correct_areas, edt_with, watershed, LabelRaster, Marker};
use canopy_core::Execution;
use proptest::prelude::*;

fn spec(w: usize, h: usize) -> GridSpec {
    GridSpec { width: w, height: h, cell_size_m: 1.0, origin_x_m: 0.0, origin_y_m: 0.0 }
}

/// Nearest background over the grid and the implicit background ring around it.
fn brute_edt(mask: &[bool], w: usize, h: usize) -> Vec<f64> {
    let (w, h) = (w as i64, h as i64);
    (0..w * h)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            if !mask[i as usize] {
                return 0.0;
            }
            let mut best = i64::MAX;
            for rr in -1..=h {
                for cc in -1..=w {
                    let outside = rr < 0 || cc < 0 || rr >= h || cc >= w;
                    if outside || !mask[(rr * w + cc) as usize] {
                        best = best.min((rr - r).pow(2) + (cc - c).pow(2));
                    }
                }
            }
            (best as f64).sqrt()
        })
        .collect()
}

fn grid() -> impl Strategy<Value = (usize, usize, Vec<bool>)> {
    (1usize..=32, 1usize..=32)
        .prop_flat_map(|(w, h)| (Just(w), Just(h), prop::collection::vec(prop::bool::weighted(0.7), w * h)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn edt_matches_brute_force((w, h, mask) in grid()) {
        let m = CanopyMask::new(spec(w, h), mask.clone());
        let oracle = brute_edt(&mask, w, h);
        for exec in [Execution::Sequential, Execution::Parallel] {
            prop_assert_eq!(&edt_with(&m, exec).values, &oracle);
        }
    }

    #[test]
    fn watershed_partitions_canopy(
        (w, h, mask) in grid(),
        heights in prop::collection::vec(0.0f64..1.0, 1024),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..6),
    ) {
        let s = spec(w, h);
        let canopy = CanopyMask::new(s, mask.clone());
        let cells: Vec<usize> = (0..s.len()).filter(|&i| mask[i]).collect();
        prop_assume!(!cells.is_empty());
        let mut chosen: Vec<usize> = picks.iter().map(|p| cells[p.index(cells.len())]).collect();
        chosen.sort_unstable();
        chosen.dedup();
        let markers: Vec<Marker> = chosen.iter().enumerate().map(|(k, &i)| {
            let (row, col) = s.row_col(i);
            Marker { row, col, label: k as u32 + 1, edt_value: 1.0 }
        }).collect();
        let raster = BevRaster { spec: s, values: heights[..s.len()].to_vec() };
        let out = watershed(&raster, &canopy, &markers).unwrap();
        for (i, &l) in out.labels.iter().enumerate() {
            if l != 0 { prop_assert!(mask[i]); }
        }
        for m in &markers {
            prop_assert_eq!(out.labels[s.index(m.row, m.col)], m.label);
        }
        prop_assert_eq!(out.max_label() as usize, markers.len());
        prop_assert_eq!(&watershed(&raster, &canopy, &markers).unwrap(), &out);

        // reversing the label ids permutes regions without moving them
        let k = markers.len() as u32;
        let flipped: Vec<Marker> = markers.iter().map(|m| Marker { label: k + 1 - m.label, ..*m }).collect();
        let other = watershed(&raster, &canopy, &flipped).unwrap();
        for (&a, &b) in out.labels.iter().zip(&other.labels) {
            prop_assert_eq!(if a == 0 { 0 } else { k + 1 - a }, b);
        }
    }

    #[test]
    fn corrected_areas_conserve_and_keep_ratios(
        labels in prop::collection::vec(0u32..8, 1..400),
        footprint in 1.0f64..1e6,
        cell in 0.1f64..2.0,
    ) {
        prop_assume!(labels.iter().any(|&l| l != 0));
        let raster = LabelRaster { spec: GridSpec { cell_size_m: cell, ..spec(labels.len(), 1) }, labels };
        let out = correct_areas(&raster, footprint, cell).unwrap();
        let sum: f64 = out.iter().map(|a| a.corrected_area_m2).sum();
        prop_assert!((sum - footprint).abs() <= 1e-6 * footprint);
        for a in &out {
            for b in &out {
                let lhs = a.corrected_area_m2 / b.corrected_area_m2;
                let rhs = a.raw_area_m2 / b.raw_area_m2;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1.0));
            }
        }
    }
}
