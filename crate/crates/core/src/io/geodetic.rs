//! Geodetic camera exports: WGS84 latitude/longitude/altitude converted to a
//! local East-North-Up frame anchored at the first frame.
//!
//! Expected JSON shape:
//!
//! ```json
//! { "cameraFrames": [
//!     { "position": { "latitude": 45.0, "longitude": -75.0, "altitude": 100.0 },
//!       "rotation": { "x": 0.0, "y": 0.0, "z": 90.0 } } ] }
//! ```
//!
//! `altitude` is height above the ellipsoid in meters. `rotation` is optional
//! and holds Euler angles in degrees, composed as `Rz * Ry * Rx`.

use std::fs;
use std::path::Path;

use nalgebra::UnitQuaternion;
use serde_json::Value;

use super::IngestError;
use crate::geometry::{Pose, Trajectory, Vec3};

pub const WGS84_A: f64 = 6_378_137.0;
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodeticPosition {
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_m: f64,
}

impl GeodeticPosition {
    pub fn new(latitude_deg: f64, longitude_deg: f64, altitude_m: f64) -> Option<Self> {
        let ok = latitude_deg.is_finite()
            && longitude_deg.is_finite()
            && altitude_m.is_finite()
            && (-90.0..=90.0).contains(&latitude_deg)
            && (-180.0..=180.0).contains(&longitude_deg);
        ok.then_some(Self { latitude_deg, longitude_deg, altitude_m })
    }
}

pub fn geodetic_to_ecef(g: &GeodeticPosition) -> Vec3 {
    let e2 = WGS84_F * (2.0 - WGS84_F);
    let (sin_lat, cos_lat) = g.latitude_deg.to_radians().sin_cos();
    let (sin_lon, cos_lon) = g.longitude_deg.to_radians().sin_cos();
    let n = WGS84_A / (1.0 - e2 * sin_lat * sin_lat).sqrt();
    Vec3::new(
        (n + g.altitude_m) * cos_lat * cos_lon,
        (n + g.altitude_m) * cos_lat * sin_lon,
        (n * (1.0 - e2) + g.altitude_m) * sin_lat,
    )
}

/// ECEF point expressed in the ENU frame tangent at `anchor`.
pub fn ecef_to_enu(ecef: &Vec3, anchor: &GeodeticPosition) -> Vec3 {
    let d = ecef - geodetic_to_ecef(anchor);
    let (sin_lat, cos_lat) = anchor.latitude_deg.to_radians().sin_cos();
    let (sin_lon, cos_lon) = anchor.longitude_deg.to_radians().sin_cos();
    Vec3::new(
        -sin_lon * d.x + cos_lon * d.y,
        -sin_lat * cos_lon * d.x - sin_lat * sin_lon * d.y + cos_lat * d.z,
        cos_lat * cos_lon * d.x + cos_lat * sin_lon * d.y + sin_lat * d.z,
    )
}

pub fn read_trajectory_geodetic(path: impl AsRef<Path>) -> Result<Trajectory, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_trajectory_geodetic(&text)
}

fn number(obj: &Value, key: &str, ctx: &str) -> Result<f64, IngestError> {
    match obj.get(key) {
        None => Err(IngestError::SchemaViolation(format!("{ctx}: missing field '{key}'"))),
        Some(v) => v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| IngestError::SchemaViolation(format!("{ctx}: field '{key}' is not a number"))),
    }
}

pub fn parse_trajectory_geodetic(text: &str) -> Result<Trajectory, IngestError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| IngestError::SchemaViolation(format!("invalid JSON: {e}")))?;
    let frames = root
        .get("cameraFrames")
        .ok_or_else(|| IngestError::SchemaViolation("missing field 'cameraFrames'".into()))?
        .as_array()
        .ok_or_else(|| IngestError::SchemaViolation("'cameraFrames' is not an array".into()))?;
    if frames.is_empty() {
        return Err(IngestError::EmptyFrames);
    }

    let mut anchor = None;
    let mut poses = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let ctx = format!("cameraFrames[{i}]");
        let pos = frame
            .get("position")
            .ok_or_else(|| IngestError::SchemaViolation(format!("{ctx}: missing field 'position'")))?;
        let lat = number(pos, "latitude", &ctx)?;
        let lon = number(pos, "longitude", &ctx)?;
        let alt = number(pos, "altitude", &ctx)?;
        let geo = GeodeticPosition::new(lat, lon, alt)
            .ok_or_else(|| IngestError::SchemaViolation(format!("{ctx}: latitude/longitude out of range")))?;
        let anchor = *anchor.get_or_insert(geo);

        let orientation = match frame.get("rotation") {
            None | Some(Value::Null) => UnitQuaternion::identity(),
            Some(rot) => {
                let rctx = format!("{ctx}.rotation");
                let (rx, ry, rz) = (number(rot, "x", &rctx)?, number(rot, "y", &rctx)?, number(rot, "z", &rctx)?);
                UnitQuaternion::from_euler_angles(rx.to_radians(), ry.to_radians(), rz.to_radians())
            }
        };
        poses.push(Pose { frame_id: i as u64, position: ecef_to_enu(&geodetic_to_ecef(&geo), &anchor), orientation });
    }
    Ok(Trajectory::new(poses).expect("array indices are unique"))
}
