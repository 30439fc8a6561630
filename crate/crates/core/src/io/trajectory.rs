use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use super::IngestError;
use crate::geometry::{Pose, Trajectory, Vec3};

pub const TRAJECTORY_CSV_HEADER: &str = "frame_id,x,y,z,qw,qx,qy,qz";

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Trajectory, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_trajectory_csv(&text)
}

/// Reads either format, picking geodetic JSON by the `.json` extension.
pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Trajectory, IngestError> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => super::read_trajectory_geodetic(path),
        _ => read_trajectory_csv(path),
    }
}

pub fn parse_trajectory_csv(text: &str) -> Result<Trajectory, IngestError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, h)) if h == TRAJECTORY_CSV_HEADER => {}
        Some((_, h)) => {
            return Err(IngestError::MalformedRow {
                line: 1,
                reason: format!("expected header '{TRAJECTORY_CSV_HEADER}', found '{h}'"),
            })
        }
        None => return Err(IngestError::EmptyFrames),
    }

    let mut poses = Vec::new();
    for (line, row) in lines {
        if row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(IngestError::MalformedRow {
                line,
                reason: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let frame_id = fields[0].parse::<u64>().map_err(|_| IngestError::MalformedRow {
            line,
            reason: format!("frame_id '{}' is not a non-negative integer", fields[0]),
        })?;
        let mut v = [0.0; 7];
        for (slot, f) in v.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| IngestError::MalformedRow { line, reason: format!("'{f}' is not a finite number") })?;
        }
        let q = Quaternion::new(v[3], v[4], v[5], v[6]);
        if q.norm() < 1e-12 {
            return Err(IngestError::MalformedRow { line, reason: "zero quaternion".into() });
        }
        poses.push(Pose {
            frame_id,
            position: Vec3::new(v[0], v[1], v[2]),
            orientation: UnitQuaternion::from_quaternion(q),
        });
    }
    if poses.is_empty() {
        return Err(IngestError::EmptyFrames);
    }
    Trajectory::new(poses).map_err(IngestError::DuplicateFrame)
}

pub fn encode_trajectory_csv(trajectory: &Trajectory) -> String {
    let mut out = String::from(TRAJECTORY_CSV_HEADER);
    out.push('\n');
    for p in trajectory.poses() {
        let q = p.orientation.quaternion();
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{:.12},{:.12},{:.12},{:.12}",
            p.frame_id, p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k
        );
    }
    out
}

pub fn write_trajectory_csv(trajectory: &Trajectory, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    fs::write(path, encode_trajectory_csv(trajectory)).map_err(|e| IngestError::io(path, e))
}
