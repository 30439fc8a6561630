//! Similarity-transform estimation, transform application and PCA ground
//! leveling.
//!
//! Everything here works in `f64`. Point clouds may come from single
//! precision files but are widened on ingest.

use nalgebra::{Matrix3, SymmetricEigen, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::par::Execution;

pub type Vec3 = Vector3<f64>;
pub type Rotation = Matrix3<f64>;

/// Singular values below this fraction of the largest one count as zero when
/// checking the rank of a covariance matrix.
const RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("length mismatch: source has {source_len} points, target has {target_len}")]
    LengthMismatch { source_len: usize, target_len: usize },
}

/// A camera pose. Orientation is world-from-camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub frame_id: u64,
    pub position: Vec3,
    pub orientation: UnitQuaternion<f64>,
}

/// Poses ordered by strictly increasing `frame_id`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    /// Builds a trajectory, sorting by frame id. Returns the duplicated id on
    /// failure.
    pub fn new(mut poses: Vec<Pose>) -> Result<Self, u64> {
        poses.sort_by_key(|p| p.frame_id);
        if let Some(w) = poses.windows(2).find(|w| w[0].frame_id == w[1].frame_id) {
            return Err(w[0].frame_id);
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.poses.iter().map(|p| p.position).collect()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        centroid(&self.positions())
    }

    /// Positions of the frames present in both trajectories, paired by frame id
    /// and returned as `(self, other)` lists in ascending frame order.
    pub fn correspondences(&self, other: &Trajectory) -> (Vec<Vec3>, Vec<Vec3>) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let (mut i, mut j) = (0, 0);
        while i < self.poses.len() && j < other.poses.len() {
            let (p, q) = (&self.poses[i], &other.poses[j]);
            match p.frame_id.cmp(&q.frame_id) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    a.push(p.position);
                    b.push(q.position);
                    i += 1;
                    j += 1;
                }
            }
        }
        (a, b)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points, colors: None }
    }

    pub fn with_colors(points: Vec<Vec3>, colors: Vec<[u8; 3]>) -> Self {
        assert_eq!(points.len(), colors.len(), "one color per point");
        Self { points, colors: Some(colors) }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Similarity transform `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sim3Transform {
    pub scale: f64,
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Sim3Transform {
    pub fn identity() -> Self {
        Self { scale: 1.0, rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    pub fn new(scale: f64, rotation: Rotation, translation: Vec3) -> Self {
        Self { scale, rotation, translation }
    }

    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p * self.scale + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        let inv_s = 1.0 / self.scale;
        Self { scale: inv_s, rotation: rt, translation: -(rt * self.translation) * inv_s }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Sim3Transform) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation * self.scale + self.translation,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub transform: Sim3Transform,
    /// Root-mean-square residual after alignment, in target units.
    pub rmse_m: f64,
    pub n_points: usize,
}

pub fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    Some(sum / points.len() as f64)
}

/// Closed-form least-squares similarity (Umeyama) with `target ≈ s·R·source + t`.
///
/// Reflections are excluded by flipping the sign of the last singular
/// direction whenever `det(U)·det(V) < 0`.
pub fn umeyama_align(source: &[Vec3], target: &[Vec3]) -> Result<AlignmentReport, GeometryError> {
    if source.len() != target.len() {
        return Err(GeometryError::LengthMismatch { source_len: source.len(), target_len: target.len() });
    }
    let n = source.len();
    if n < 3 {
        return Err(GeometryError::DegenerateGeometry(format!("fewer than 3 correspondences ({n})")));
    }
    let inv_n = 1.0 / n as f64;
    let mu_x = centroid(source).unwrap();
    let mu_y = centroid(target).unwrap();

    let mut cross = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    let mut var_x = 0.0;
    for (x, y) in source.iter().zip(target) {
        let dx = x - mu_x;
        let dy = y - mu_y;
        cross += dy * dx.transpose();
        src_cov += dx * dx.transpose();
        var_x += dx.norm_squared();
    }
    cross *= inv_n;
    src_cov *= inv_n;
    var_x *= inv_n;

    let mut src_sv = src_cov.symmetric_eigenvalues().map(f64::abs).as_slice().to_vec();
    src_sv.sort_by(|a, b| b.total_cmp(a));
    if src_sv[0].is_nan() || src_sv[0] <= 0.0 || src_sv[1] <= RANK_TOLERANCE * src_sv[0] {
        return Err(GeometryError::DegenerateGeometry(
            "source points are collinear or coincident (covariance rank < 2)".into(),
        ));
    }

    let svd = cross.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let d = svd.singular_values;

    let mut signs = Vec3::new(1.0, 1.0, 1.0);
    if u.determinant() * v_t.determinant() < 0.0 {
        // nalgebra does not sort singular values; flip the smallest one
        let (min_idx, _) = d.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        signs[min_idx] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&signs) * v_t;
    let scale = d.component_mul(&signs).sum() / var_x;
    let translation = mu_y - rotation * mu_x * scale;
    let transform = Sim3Transform { scale, rotation, translation };

    let sq: f64 = source.iter().zip(target).map(|(x, y)| (y - transform.apply(x)).norm_squared()).sum();
    Ok(AlignmentReport { transform, rmse_m: (sq * inv_n).sqrt(), n_points: n })
}

pub fn apply_sim3(cloud: &PointCloud, transform: &Sim3Transform) -> PointCloud {
    apply_sim3_with(cloud, transform, Execution::default())
}

pub fn apply_sim3_with(cloud: &PointCloud, transform: &Sim3Transform, exec: Execution) -> PointCloud {
    let points = crate::par::map_slice(&cloud.points, exec, |p| transform.apply(p));
    PointCloud { points, colors: cloud.colors.clone() }
}

pub fn rotate_cloud(cloud: &PointCloud, rotation: &Rotation, exec: Execution) -> PointCloud {
    let points = crate::par::map_slice(&cloud.points, exec, |p| rotation * p);
    PointCloud { points, colors: cloud.colors.clone() }
}

/// Rotates the cloud so its smallest principal axis points along +Z, with the
/// sign chosen so the cameras end up above the cloud centroid.
pub fn pca_level(cloud: &PointCloud, camera_centroid: &Vec3) -> Result<(PointCloud, Rotation), GeometryError> {
    let rotation = leveling_rotation(&cloud.points, camera_centroid)?;
    Ok((rotate_cloud(cloud, &rotation, Execution::default()), rotation))
}

pub fn leveling_rotation(points: &[Vec3], camera_centroid: &Vec3) -> Result<Rotation, GeometryError> {
    if points.len() < 3 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "leveling needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mu = centroid(points).unwrap();
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mu;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (largest, middle) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if largest.is_nan() || largest <= 0.0 || middle <= RANK_TOLERANCE * largest {
        return Err(GeometryError::DegenerateGeometry("cloud is collinear or coincident; no ground plane".into()));
    }
    let mut up: Vec3 = eig.eigenvectors.column(order[2]).normalize();
    if (camera_centroid - mu).dot(&up) < 0.0 {
        up = -up;
    }
    Ok(rotation_between(&up, &Vec3::z()))
}

/// Minimal rotation taking unit vector `from` onto unit vector `to`.
fn rotation_between(from: &Vec3, to: &Vec3) -> Rotation {
    let axis = from.cross(to);
    let c = from.dot(to);
    if c < -1.0 + 1e-12 {
        // antiparallel: half turn about any axis orthogonal to `from`
        let helper = if from.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let k = from.cross(&helper).normalize();
        return Rotation::identity() * -1.0 + k * k.transpose() * 2.0;
    }
    let skew = axis.cross_matrix();
    Rotation::identity() + skew + skew * skew * (1.0 / (1.0 + c))
}

/// Orthonormality and handedness check used by tests and report writers.
pub fn is_rotation(r: &Rotation, tol: f64) -> bool {
    (r * r.transpose() - Rotation::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
}
