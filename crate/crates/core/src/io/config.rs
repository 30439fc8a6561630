//! Pipeline configuration: a flat TOML key/value file.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::IngestError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub cell_size_m: f64,
    /// Canopy threshold on the normalized height map.
    pub h_min: f64,
    /// Multiplier on the canopy height standard deviation for the tree-core threshold.
    pub core_alpha: f64,
    pub min_peak_distance_m: f64,
    pub sigma_conifer_threshold: f64,
    pub latitude_deg: f64,
    pub lai_broadleaf: f64,
    pub lai_conifer: f64,
    pub rho_broadleaf: f64,
    pub rho_conifer: f64,
    pub ground_percentile: f64,
    pub top_percentile: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            cell_size_m: 0.5,
            h_min: 0.15,
            core_alpha: 0.5,
            min_peak_distance_m: 2.0,
            sigma_conifer_threshold: 0.2,
            latitude_deg: 45.0,
            lai_broadleaf: 5.5,
            lai_conifer: 3.0,
            rho_broadleaf: 3.8,
            rho_conifer: 2.5,
            ground_percentile: 2.0,
            top_percentile: 98.0,
        }
    }
}

const KEYS: &[&str] = &[
    "cell_size_m",
    "h_min",
    "core_alpha",
    "min_peak_distance_m",
    "sigma_conifer_threshold",
    "latitude_deg",
    "lai_broadleaf",
    "lai_conifer",
    "rho_broadleaf",
    "rho_conifer",
    "ground_percentile",
    "top_percentile",
];

/// An unrecognized key; reported, not fatal.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigWarning {
    pub key: String,
}

impl std::fmt::Display for ConfigWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "unknown config key '{}' ignored", self.key)
    }
}

fn mismatch(key: &str, reason: impl Into<String>) -> IngestError {
    IngestError::TypeMismatch { key: key.to_string(), reason: reason.into() }
}

impl PipelineConfig {
    /// Sets a field by name, checking its range. Unknown names return `Ok(false)`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<bool, IngestError> {
        if !value.is_finite() {
            return Err(mismatch(key, "value must be finite"));
        }
        let check =
            |ok: bool, range: &str| if ok { Ok(()) } else { Err(mismatch(key, format!("{value} outside {range}"))) };
        let slot = match key {
            "cell_size_m" => {
                check(value > 0.0, "(0, inf)")?;
                &mut self.cell_size_m
            }
            "h_min" => {
                check(value > 0.0 && value < 1.0, "(0, 1)")?;
                &mut self.h_min
            }
            "core_alpha" => &mut self.core_alpha,
            "min_peak_distance_m" => {
                check(value > 0.0, "(0, inf)")?;
                &mut self.min_peak_distance_m
            }
            "sigma_conifer_threshold" => {
                check(value >= 0.0, "[0, inf)")?;
                &mut self.sigma_conifer_threshold
            }
            "latitude_deg" => {
                check((-90.0..=90.0).contains(&value), "[-90, 90]")?;
                &mut self.latitude_deg
            }
            "lai_broadleaf" | "lai_conifer" => {
                check(value > 0.0, "(0, inf)")?;
                if key == "lai_broadleaf" {
                    &mut self.lai_broadleaf
                } else {
                    &mut self.lai_conifer
                }
            }
            "rho_broadleaf" | "rho_conifer" => {
                check(value >= 0.0, "[0, inf)")?;
                if key == "rho_broadleaf" {
                    &mut self.rho_broadleaf
                } else {
                    &mut self.rho_conifer
                }
            }
            "ground_percentile" => {
                check(value > 0.0 && value < 50.0, "(0, 50)")?;
                &mut self.ground_percentile
            }
            "top_percentile" => {
                check(value > 50.0 && value < 100.0, "(50, 100)")?;
                &mut self.top_percentile
            }
            _ => return Ok(false),
        };
        *slot = value;
        Ok(true)
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<(PipelineConfig, Vec<ConfigWarning>), IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<(PipelineConfig, Vec<ConfigWarning>), IngestError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| IngestError::TypeMismatch {
        key: "<file>".into(),
        reason: e.message().to_string(),
    })?;
    let mut config = PipelineConfig::default();
    let mut warnings = Vec::new();
    for (key, value) in &table {
        let number = match value {
            toml::Value::Float(f) => Some(*f),
            toml::Value::Integer(i) => Some(*i as f64),
            _ => None,
        };
        let known = match number {
            Some(v) => config.set(key, v)?,
            None if KEYS.contains(&key.as_str()) => {
                return Err(mismatch(key, format!("expected a number, found {}", value.type_str())));
            }
            None => false,
        };
        if !known {
            log::warn!("unknown config key '{key}' ignored");
            warnings.push(ConfigWarning { key: key.clone() });
        }
    }
    if config.ground_percentile >= config.top_percentile {
        return Err(mismatch("ground_percentile", "must be below top_percentile"));
    }
    Ok((config, warnings))
}
