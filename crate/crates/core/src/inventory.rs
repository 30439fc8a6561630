//! Per-tree species, effective LAI and fuel load, plus stand totals and
//! report files.
//!
//! Fuel per tree is `corrected_area × LAI_species × alpha_geo × rho_species`
//! with `rho` in kilograms of fuel per square meter of leaf area.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::bev::{BevRaster, NormalizedHeight};
use crate::io::PipelineConfig;
use crate::segmentation::{AreaCorrection, LabelRaster};

/// Relative tolerance for the corrected-area sum against the footprint.
pub const MASS_CONSERVATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("latitude {0} outside [-90, 90]")]
    OutOfRange(f64),
    #[error("inventory is empty")]
    EmptyInventory,
    #[error("corrected areas sum to {sum} m2 but the footprint is {footprint} m2")]
    MassConservation { sum: f64, footprint: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("I/O failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Species {
    Broadleaf,
    Conifer,
}

impl Species {
    pub fn as_str(self) -> &'static str {
        match self {
            Species::Broadleaf => "broadleaf",
            Species::Conifer => "conifer",
        }
    }
}

impl std::fmt::Display for Species {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Latitude correction: 0.85 at |lat| ≥ 50°, 1.15 below 23.5°, else 1.
pub fn alpha_geo(latitude_deg: f64) -> Result<f64, InventoryError> {
    if !(-90.0..=90.0).contains(&latitude_deg) {
        return Err(InventoryError::OutOfRange(latitude_deg));
    }
    let lat = latitude_deg.abs();
    Ok(if lat >= 50.0 {
        0.85
    } else if lat < 23.5 {
        1.15
    } else {
        1.0
    })
}

pub fn classify_species(sigma_h_tree: f64, threshold: f64) -> Species {
    if sigma_h_tree > threshold {
        Species::Conifer
    } else {
        Species::Broadleaf
    }
}

pub fn effective_lai(species: Species, alpha_geo: f64, config: &PipelineConfig) -> f64 {
    let base = match species {
        Species::Broadleaf => config.lai_broadleaf,
        Species::Conifer => config.lai_conifer,
    };
    base * alpha_geo
}

pub fn fuel_coefficient(species: Species, config: &PipelineConfig) -> f64 {
    match species {
        Species::Broadleaf => config.rho_broadleaf,
        Species::Conifer => config.rho_conifer,
    }
}

/// Measurements of one delineated tree, before fuel is assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeInput {
    pub tree_id: u32,
    pub centroid_x_m: f64,
    pub centroid_y_m: f64,
    pub raw_area_m2: f64,
    pub corrected_area_m2: f64,
    pub max_height_m: f64,
    pub sigma_h_tree: f64,
    pub species: Species,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeRecord {
    pub tree_id: u32,
    pub centroid_x_m: f64,
    pub centroid_y_m: f64,
    pub raw_area_m2: f64,
    pub corrected_area_m2: f64,
    pub max_height_m: f64,
    pub sigma_h_tree: f64,
    pub species: Species,
    pub lai_effective: f64,
    pub fuel_kg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StandSummary {
    pub n_trees: usize,
    pub footprint_m2: f64,
    pub latitude_deg: f64,
    pub alpha_geo: f64,
    pub lai_by_species: Vec<(Species, f64)>,
    pub total_fuel_tons: f64,
}

/// Per-tree statistics from a label raster. `corrections` must come from
/// [`crate::segmentation::correct_areas`] on the same labels.
pub fn measure_trees(
    labels: &LabelRaster,
    normalized: &NormalizedHeight,
    height_m: &BevRaster,
    corrections: &[AreaCorrection],
    config: &PipelineConfig,
) -> Result<Vec<TreeInput>, InventoryError> {
    let spec = labels.spec;
    for (what, other) in [("normalized height", &normalized.raster.spec), ("height", &height_m.spec)] {
        if other.width != spec.width || other.height != spec.height {
            return Err(InventoryError::GridMismatch(format!("{what} raster differs from label raster")));
        }
    }
    #[derive(Default, Clone)]
    struct Acc {
        n: usize,
        sx: f64,
        sy: f64,
        max_z: f64,
        sum: f64,
    }
    let k = labels.max_label() as usize;
    let mut acc = vec![Acc { max_z: f64::NEG_INFINITY, ..Default::default() }; k + 1];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (r, c) = spec.row_col(i);
        let (x, y) = spec.cell_center(r, c);
        let a = &mut acc[l as usize];
        a.n += 1;
        a.sx += x;
        a.sy += y;
        let z = height_m.values[i];
        if z > a.max_z {
            a.max_z = z;
        }
        a.sum += normalized.raster.values[i];
    }
    let mut sq = vec![0.0; k + 1];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l != 0 {
            let a = &acc[l as usize];
            sq[l as usize] += (normalized.raster.values[i] - a.sum / a.n as f64).powi(2);
        }
    }

    Ok(corrections
        .iter()
        .map(|c| {
            let a = &acc[c.label as usize];
            let n = a.n as f64;
            let sigma = (sq[c.label as usize] / n).sqrt();
            TreeInput {
                tree_id: c.label,
                centroid_x_m: a.sx / n,
                centroid_y_m: a.sy / n,
                raw_area_m2: c.raw_area_m2,
                corrected_area_m2: c.corrected_area_m2,
                max_height_m: a.max_z - normalized.z_ground,
                sigma_h_tree: sigma,
                species: classify_species(sigma, config.sigma_conifer_threshold),
            }
        })
        .collect())
}

/// Applies the fuel equation to every tree and totals the stand. Sums run in
/// input order.
pub fn fuel_load(
    trees: &[TreeInput],
    footprint_m2: f64,
    latitude_deg: f64,
    config: &PipelineConfig,
) -> Result<(Vec<TreeRecord>, StandSummary), InventoryError> {
    if trees.is_empty() {
        return Err(InventoryError::EmptyInventory);
    }
    let alpha = alpha_geo(latitude_deg)?;
    let area_sum: f64 = trees.iter().map(|t| t.corrected_area_m2).sum();
    if (area_sum - footprint_m2).abs() > MASS_CONSERVATION_TOL * footprint_m2.abs().max(f64::MIN_POSITIVE) {
        return Err(InventoryError::MassConservation { sum: area_sum, footprint: footprint_m2 });
    }

    let records: Vec<TreeRecord> = trees
        .iter()
        .map(|t| {
            let lai = effective_lai(t.species, alpha, config);
            TreeRecord {
                tree_id: t.tree_id,
                centroid_x_m: t.centroid_x_m,
                centroid_y_m: t.centroid_y_m,
                raw_area_m2: t.raw_area_m2,
                corrected_area_m2: t.corrected_area_m2,
                max_height_m: t.max_height_m,
                sigma_h_tree: t.sigma_h_tree,
                species: t.species,
                lai_effective: lai,
                fuel_kg: t.corrected_area_m2 * lai * fuel_coefficient(t.species, config),
            }
        })
        .collect();
    let total_kg: f64 = records.iter().map(|r| r.fuel_kg).sum();
    let summary = StandSummary {
        n_trees: records.len(),
        footprint_m2,
        latitude_deg,
        alpha_geo: alpha,
        lai_by_species: vec![
            (Species::Broadleaf, effective_lai(Species::Broadleaf, alpha, config)),
            (Species::Conifer, effective_lai(Species::Conifer, alpha, config)),
        ],
        total_fuel_tons: total_kg / 1000.0,
    };
    Ok((records, summary))
}

pub const INVENTORY_CSV_HEADER: &str =
    "tree_id,centroid_x_m,centroid_y_m,raw_area_m2,corrected_area_m2,max_height_m,sigma_h,species,lai_effective,fuel_kg";

pub fn inventory_csv(records: &[TreeRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 120);
    out.push_str(INVENTORY_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6},{:.6}",
            r.tree_id,
            r.centroid_x_m,
            r.centroid_y_m,
            r.raw_area_m2,
            r.corrected_area_m2,
            r.max_height_m,
            r.sigma_h_tree,
            r.species,
            r.lai_effective,
            r.fuel_kg
        );
    }
    out
}

pub fn summary_json(summary: &StandSummary) -> String {
    let lai: Vec<String> = summary.lai_by_species.iter().map(|(s, v)| format!("\"{s}\": {v:.6}")).collect();
    format!(
        "{{\n  \"n_trees\": {},\n  \"footprint_m2\": {:.6},\n  \"latitude_deg\": {:.6},\n  \"alpha_geo\": {:.6},\n  \"lai_by_species\": {{{}}},\n  \"total_fuel_tons\": {:.6}\n}}\n",
        summary.n_trees,
        summary.footprint_m2,
        summary.latitude_deg,
        summary.alpha_geo,
        lai.join(", "),
        summary.total_fuel_tons
    )
}

/// Writes `inventory.csv` and `summary.json` into `out_dir`.
pub fn write_reports(
    records: &[TreeRecord],
    summary: &StandSummary,
    out_dir: impl AsRef<Path>,
) -> Result<(), InventoryError> {
    if records.is_empty() {
        return Err(InventoryError::EmptyInventory);
    }
    let dir = out_dir.as_ref();
    for (name, body) in [("inventory.csv", inventory_csv(records)), ("summary.json", summary_json(summary))] {
        let path = dir.join(name);
        fs::write(&path, body)
            .map_err(|source| InventoryError::IoFailure { path: path.display().to_string(), source })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree(area: f64, species: Species) -> TreeInput {
        TreeInput {
            tree_id: 1,
            centroid_x_m: 0.0,
            centroid_y_m: 0.0,
            raw_area_m2: area,
            corrected_area_m2: area,
            max_height_m: 10.0,
            sigma_h_tree: 0.1,
            species,
        }
    }

    #[test]
    fn latitude_bands() {
        assert_eq!(alpha_geo(55.0).unwrap(), 0.85);
        assert_eq!(alpha_geo(50.0).unwrap(), 0.85);
        assert_eq!(alpha_geo(10.0).unwrap(), 1.15);
        assert_eq!(alpha_geo(23.5).unwrap(), 1.0);
        assert_eq!(alpha_geo(40.0).unwrap(), 1.0);
        assert_eq!(alpha_geo(-60.0).unwrap(), 0.85);
        assert!(matches!(alpha_geo(91.0), Err(InventoryError::OutOfRange(_))));
        assert!(alpha_geo(f64::NAN).is_err());
    }

    #[test]
    fn species_threshold_is_strict() {
        assert_eq!(classify_species(0.25, 0.2), Species::Conifer);
        assert_eq!(classify_species(0.2, 0.2), Species::Broadleaf);
        assert_eq!(classify_species(0.05, 0.2), Species::Broadleaf);
    }

    #[test]
    fn lai_values() {
        let c = PipelineConfig::default();
        assert_eq!(effective_lai(Species::Conifer, 0.85, &c), 2.55);
        assert_eq!(effective_lai(Species::Broadleaf, 1.0, &c), 5.5);
        assert!((effective_lai(Species::Broadleaf, 1.15, &c) - 6.325).abs() < 1e-12);
    }

    #[test]
    fn table_stands() {
        let c = PipelineConfig::default();
        let (_, broad) = fuel_load(&[tree(40_965.3, Species::Broadleaf)], 40_965.3, 45.0, &c).unwrap();
        assert!((broad.total_fuel_tons - 856.17477).abs() < 1e-6);
        let (rec, conifer) = fuel_load(&[tree(10_305.6, Species::Conifer)], 10_305.6, 55.0, &c).unwrap();
        assert!((conifer.total_fuel_tons - 65.6982).abs() < 1e-6);
        assert_eq!(rec[0].lai_effective, 2.55);
    }

    #[test]
    fn zero_area_and_empty() {
        let c = PipelineConfig::default();
        let (rec, s) = fuel_load(&[tree(0.0, Species::Conifer)], 0.0, 45.0, &c).unwrap();
        assert_eq!(rec[0].fuel_kg, 0.0);
        assert_eq!(s.total_fuel_tons, 0.0);
        assert!(matches!(fuel_load(&[], 1.0, 45.0, &c), Err(InventoryError::EmptyInventory)));
    }

    #[test]
    fn mass_conservation_enforced() {
        let c = PipelineConfig::default();
        let err = fuel_load(&[tree(10.0, Species::Conifer)], 12.0, 45.0, &c).unwrap_err();
        assert!(matches!(err, InventoryError::MassConservation { .. }));
    }

    #[test]
    fn report_formats() {
        let c = PipelineConfig::default();
        let (rec, s) = fuel_load(&[tree(2.0, Species::Broadleaf)], 2.0, 45.0, &c).unwrap();
        let csv = inventory_csv(&rec);
        assert_eq!(
            csv,
            format!("{INVENTORY_CSV_HEADER}\n1,0.000000,0.000000,2.000000,2.000000,10.000000,0.100000,broadleaf,5.500000,41.800000\n")
        );
        let json: serde_json::Value = serde_json::from_str(&summary_json(&s)).unwrap();
        assert_eq!(json["n_trees"], 1);
        assert_eq!(json["lai_by_species"]["conifer"], 3.0);
        assert!((json["total_fuel_tons"].as_f64().unwrap() - 0.0418).abs() < 1e-12);
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        for k in ["n_trees", "footprint_m2", "latitude_deg", "alpha_geo", "lai_by_species", "total_fuel_tons"] {
            assert!(keys.contains(&k));
        }
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(write_reports(&[], &s, dir.path()), Err(InventoryError::EmptyInventory)));
        write_reports(&rec, &s, dir.path()).unwrap();
        let first = fs::read(dir.path().join("inventory.csv")).unwrap();
        write_reports(&rec, &s, dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("inventory.csv")).unwrap());
    }
}
