//! Raster file formats.
//!
//! All three share one ASCII header line,
//! `<MAGIC> <width> <height> <cell_size_m> <origin_x_m> <origin_y_m>\n`,
//! followed by a row-major body:
//!
//! | magic   | body                                  |
//! |---------|---------------------------------------|
//! | `BEVR1` | little-endian `f32` per cell, NaN = no data |
//! | `MASK1` | one byte per cell, 0 or 1             |
//! | `LBLR1` | little-endian `u32` per cell, 0 = unlabeled |
//!
//! Header reals use the shortest representation that parses back to the
//! same `f64`. PGM previews are written top row = largest Y.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::bev::{BevRaster, CanopyMask, GridSpec};
use crate::segmentation::LabelRaster;

#[derive(Debug, Error)]
pub enum RasterFileError {
    #[error("bad magic: expected {expected}, found '{found}'")]
    BadMagic { expected: &'static str, found: String },
    #[error("malformed raster header: {0}")]
    MalformedHeader(String),
    #[error("raster body has {found} bytes, expected {expected}")]
    BodySize { expected: usize, found: usize },
    #[error("invalid cell value at index {index}: {reason}")]
    InvalidValue { index: usize, reason: String },
    #[error("I/O failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub const BEVR_MAGIC: &str = "BEVR1";
pub const MASK_MAGIC: &str = "MASK1";
pub const LABEL_MAGIC: &str = "LBLR1";

fn header(magic: &str, spec: &GridSpec) -> String {
    format!("{magic} {} {} {} {} {}\n", spec.width, spec.height, spec.cell_size_m, spec.origin_x_m, spec.origin_y_m)
}

fn parse_header<'a>(bytes: &'a [u8], magic: &'static str) -> Result<(GridSpec, &'a [u8]), RasterFileError> {
    let nl = bytes
        .iter()
        .take(256)
        .position(|&b| b == b'\n')
        .ok_or_else(|| RasterFileError::MalformedHeader("no header line".into()))?;
    let line =
        std::str::from_utf8(&bytes[..nl]).map_err(|_| RasterFileError::MalformedHeader("header is not text".into()))?;
    let fields: Vec<&str> = line.split(' ').collect();
    if fields[0] != magic {
        return Err(RasterFileError::BadMagic { expected: magic, found: fields[0].chars().take(16).collect() });
    }
    if fields.len() != 6 {
        return Err(RasterFileError::MalformedHeader(format!("expected 6 fields, found {}", fields.len())));
    }
    let int = |s: &str, what| {
        s.parse::<usize>()
            .ok()
            .filter(|&v| v > 0)
            .ok_or_else(|| RasterFileError::MalformedHeader(format!("bad {what} '{s}'")))
    };
    let real = |s: &str, what| {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| RasterFileError::MalformedHeader(format!("bad {what} '{s}'")))
    };
    let spec = GridSpec {
        width: int(fields[1], "width")?,
        height: int(fields[2], "height")?,
        cell_size_m: real(fields[3], "cell size")?,
        origin_x_m: real(fields[4], "origin x")?,
        origin_y_m: real(fields[5], "origin y")?,
    };
    if spec.cell_size_m <= 0.0 {
        return Err(RasterFileError::MalformedHeader("cell size must be positive".into()));
    }
    if spec.width.checked_mul(spec.height).is_none_or(|n| n > crate::bev::MAX_CELLS) {
        return Err(RasterFileError::MalformedHeader("grid too large".into()));
    }
    Ok((spec, &bytes[nl + 1..]))
}

fn check_len(body: &[u8], expected: usize) -> Result<(), RasterFileError> {
    if body.len() != expected {
        return Err(RasterFileError::BodySize { expected, found: body.len() });
    }
    Ok(())
}

pub fn encode_bevr(raster: &BevRaster) -> Vec<u8> {
    let mut out = header(BEVR_MAGIC, &raster.spec).into_bytes();
    out.reserve(raster.values.len() * 4);
    for v in &raster.values {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_bevr(bytes: &[u8]) -> Result<BevRaster, RasterFileError> {
    let (spec, body) = parse_header(bytes, BEVR_MAGIC)?;
    check_len(body, spec.len() * 4)?;
    let values = body.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64).collect::<Vec<_>>();
    if let Some(index) = values.iter().position(|v| v.is_infinite()) {
        return Err(RasterFileError::InvalidValue { index, reason: "infinite value".into() });
    }
    Ok(BevRaster { spec, values })
}

pub fn encode_mask(mask: &CanopyMask) -> Vec<u8> {
    let mut out = header(MASK_MAGIC, &mask.spec).into_bytes();
    out.extend(mask.mask.iter().map(|&m| m as u8));
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<CanopyMask, RasterFileError> {
    let (spec, body) = parse_header(bytes, MASK_MAGIC)?;
    check_len(body, spec.len())?;
    let mask = body
        .iter()
        .enumerate()
        .map(|(index, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(RasterFileError::InvalidValue { index, reason: format!("mask byte {b}") }),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CanopyMask { spec, mask })
}

pub fn encode_labels(labels: &LabelRaster) -> Vec<u8> {
    let mut out = header(LABEL_MAGIC, &labels.spec).into_bytes();
    out.reserve(labels.labels.len() * 4);
    for l in &labels.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelRaster, RasterFileError> {
    let (spec, body) = parse_header(bytes, LABEL_MAGIC)?;
    check_len(body, spec.len() * 4)?;
    let labels = body.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(LabelRaster { spec, labels })
}

fn pgm(spec: &GridSpec, pixel: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", spec.width, spec.height).into_bytes();
    for row in (0..spec.height).rev() {
        out.extend((0..spec.width).map(|col| pixel(spec.index(row, col))));
    }
    out
}

/// Grayscale preview of a `[0, 1]` raster; no-data cells are black.
pub fn height_preview_pgm(normalized: &BevRaster) -> Vec<u8> {
    pgm(&normalized.spec, |i| {
        let v = normalized.values[i];
        if v.is_nan() {
            0
        } else {
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        }
    })
}

pub fn mask_preview_pgm(mask: &CanopyMask) -> Vec<u8> {
    pgm(&mask.spec, |i| if mask.mask[i] { 255 } else { 0 })
}

/// Label preview: background black, labels cycle through eight gray levels.
pub fn label_preview_pgm(labels: &LabelRaster) -> Vec<u8> {
    pgm(&labels.spec, |i| match labels.labels[i] {
        0 => 0,
        l => 64 + ((l - 1) % 8) as u8 * 27,
    })
}

fn read(path: &Path) -> Result<Vec<u8>, RasterFileError> {
    fs::read(path).map_err(|source| RasterFileError::Io { path: path.display().to_string(), source })
}

pub fn write_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), RasterFileError> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|source| RasterFileError::Io { path: path.display().to_string(), source })
}

pub fn read_bevr(path: impl AsRef<Path>) -> Result<BevRaster, RasterFileError> {
    decode_bevr(&read(path.as_ref())?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<CanopyMask, RasterFileError> {
    decode_mask(&read(path.as_ref())?)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelRaster, RasterFileError> {
    decode_labels(&read(path.as_ref())?)
}
