//! Synthetic stands with known ground truth: tree placement, surface
//! sampling, orbital camera paths and similarity perturbations.
//!
//! Randomness comes from [`SplitMix64`] so outputs are reproducible from the
//! seed alone, in any language that implements the same generator.

use std::f64::consts::PI;

use nalgebra::{Matrix3, UnitQuaternion};
use serde::Serialize;
use thiserror::Error;

use crate::geometry::{PointCloud, Pose, Sim3Transform, Trajectory, Vec3};

/// Cone crowns start this fraction of the total height above the ground.
pub const CONE_CROWN_BASE_FRACTION: f64 = 0.2;

/// Center proposals tried per tree before giving up.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("could not place tree {placed} of {requested} after {attempts} attempts")]
    PackingInfeasible { placed: usize, requested: usize, attempts: usize },
    #[error("invalid stand parameters: {0}")]
    InvalidParameters(String),
}

/// SplitMix64: 64-bit state, increment
/// `0x9E3779B97F4A7C15`, output mix multipliers `0xBF58476D1CE4E5B9` and
/// `0x94D049BB133111EB` with shifts 30, 27, 31.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` from the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal via Box-Muller, one draw per two uniforms.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeShape {
    /// Conifer proxy.
    Cone,
    /// Broadleaf proxy.
    Hemisphere,
}

impl TreeShape {
    pub fn species(self) -> crate::inventory::Species {
        match self {
            TreeShape::Cone => crate::inventory::Species::Conifer,
            TreeShape::Hemisphere => crate::inventory::Species::Broadleaf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyntheticTree {
    pub center: (f64, f64),
    pub crown_radius_m: f64,
    pub height_m: f64,
    pub shape: TreeShape,
}

impl SyntheticTree {
    pub fn crown_area_m2(&self) -> f64 {
        PI * self.crown_radius_m * self.crown_radius_m
    }

    /// Crown surface height above `(x, y)`, or `None` outside the crown.
    pub fn surface_height(&self, x: f64, y: f64) -> Option<f64> {
        let d = ((x - self.center.0).powi(2) + (y - self.center.1).powi(2)).sqrt();
        let r = self.crown_radius_m;
        if d > r {
            return None;
        }
        let h = self.height_m;
        Some(match self.shape {
            TreeShape::Cone => {
                let base = CONE_CROWN_BASE_FRACTION * h;
                base + (h - base) * (1.0 - d / r)
            }
            TreeShape::Hemisphere => ((h - r) + (r * r - d * d).sqrt()).max(0.0),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticStand {
    pub trees: Vec<SyntheticTree>,
    pub extent_m: (f64, f64),
    pub ground_z: f64,
    pub seed: u64,
}

impl SyntheticStand {
    /// Sum of crown disc areas; the footprint when crowns are disjoint.
    pub fn analytic_footprint_m2(&self) -> f64 {
        self.trees.iter().map(SyntheticTree::crown_area_m2).sum()
    }

    pub fn center(&self) -> (f64, f64) {
        (self.extent_m.0 / 2.0, self.extent_m.1 / 2.0)
    }

    pub fn surface_height(&self, x: f64, y: f64) -> f64 {
        self.trees.iter().filter_map(|t| t.surface_height(x, y)).fold(self.ground_z, f64::max)
    }

    pub fn truth_json(&self) -> String {
        #[derive(Serialize)]
        struct TreeTruth {
            id: usize,
            x_m: f64,
            y_m: f64,
            crown_radius_m: f64,
            height_m: f64,
            shape: TreeShape,
            species: crate::inventory::Species,
            area_m2: f64,
        }
        #[derive(Serialize)]
        struct Truth {
            seed: u64,
            extent_m: (f64, f64),
            n_trees: usize,
            footprint_m2: f64,
            trees: Vec<TreeTruth>,
        }
        let truth = Truth {
            seed: self.seed,
            extent_m: self.extent_m,
            n_trees: self.trees.len(),
            footprint_m2: self.analytic_footprint_m2(),
            trees: self
                .trees
                .iter()
                .enumerate()
                .map(|(i, t)| TreeTruth {
                    id: i + 1,
                    x_m: t.center.0,
                    y_m: t.center.1,
                    crown_radius_m: t.crown_radius_m,
                    height_m: t.height_m,
                    shape: t.shape,
                    species: t.shape.species(),
                    area_m2: t.crown_area_m2(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandParams {
    pub n_trees: usize,
    pub extent_m: (f64, f64),
    pub radius_range_m: (f64, f64),
    pub height_range_m: (f64, f64),
    pub shape: TreeShape,
    /// Centers are at least `min_spacing_factor * (r_i + r_j)` apart.
    pub min_spacing_factor: f64,
    pub seed: u64,
}

impl Default for StandParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            extent_m: (40.0, 40.0),
            radius_range_m: (1.5, 2.5),
            height_range_m: (14.0, 16.0),
            shape: TreeShape::Cone,
            min_spacing_factor: 1.5,
            seed: 1,
        }
    }
}

/// Rejection-samples crown centers inside the extent, keeping every crown
/// fully inside and pairwise spacing above the configured bound. A single
/// tree is placed at the center of the extent.
pub fn generate_stand(params: &StandParams) -> Result<SyntheticStand, SynthError> {
    let (w, d) = params.extent_m;
    let (r_lo, r_hi) = params.radius_range_m;
    let (h_lo, h_hi) = params.height_range_m;
    if !(w > 0.0
        && d > 0.0
        && r_lo > 0.0
        && r_hi >= r_lo
        && h_lo > 0.0
        && h_hi >= h_lo
        && params.min_spacing_factor >= 0.0)
    {
        return Err(SynthError::InvalidParameters(format!("{params:?}")));
    }
    let mut rng = SplitMix64::new(params.seed);
    let mut trees: Vec<SyntheticTree> = Vec::with_capacity(params.n_trees);
    for placed in 0..params.n_trees {
        let r = rng.uniform(r_lo, r_hi);
        let h = rng.uniform(h_lo, h_hi);
        if 2.0 * r > w || 2.0 * r > d {
            return Err(SynthError::PackingInfeasible { placed, requested: params.n_trees, attempts: 0 });
        }
        let center = if params.n_trees == 1 {
            Some((w / 2.0, d / 2.0))
        } else {
            (0..MAX_PLACEMENT_ATTEMPTS).find_map(|_| {
                let c = (rng.uniform(r, w - r), rng.uniform(r, d - r));
                trees
                    .iter()
                    .all(|t| {
                        let min = params.min_spacing_factor * (r + t.crown_radius_m);
                        (c.0 - t.center.0).powi(2) + (c.1 - t.center.1).powi(2) >= min * min
                    })
                    .then_some(c)
            })
        };
        let Some(center) = center else {
            return Err(SynthError::PackingInfeasible {
                placed,
                requested: params.n_trees,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        };
        trees.push(SyntheticTree { center, crown_radius_m: r, height_m: h, shape: params.shape });
    }
    Ok(SyntheticStand { trees, extent_m: params.extent_m, ground_z: 0.0, seed: params.seed })
}

/// Samples the stand's top surface on a regular lattice of the given areal
/// density, plus one sample at each crown apex, then adds isotropic Gaussian
/// noise. Lattice points sit at `(i + 0.5, j + 0.5) * spacing`.
pub fn sample_cloud(stand: &SyntheticStand, points_per_m2: f64, noise_sigma_m: f64, seed: u64) -> PointCloud {
    assert!(points_per_m2 > 0.0 && noise_sigma_m >= 0.0);
    let spacing = 1.0 / points_per_m2.sqrt();
    let nx = (stand.extent_m.0 / spacing).round() as usize;
    let ny = (stand.extent_m.1 / spacing).round() as usize;
    let mut rng = SplitMix64::new(seed);
    let mut points = Vec::with_capacity(nx * ny + stand.trees.len());
    let mut colors = Vec::with_capacity(points.capacity());
    let mut push = |p: Vec3, crown: bool, rng: &mut SplitMix64| {
        let noisy = if noise_sigma_m > 0.0 {
            p + Vec3::new(rng.gaussian(), rng.gaussian(), rng.gaussian()) * noise_sigma_m
        } else {
            p
        };
        points.push(noisy);
        colors.push(if crown { [34, 110, 40] } else { [120, 96, 64] });
    };
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = ((i as f64 + 0.5) * spacing, (j as f64 + 0.5) * spacing);
            let crown = stand.trees.iter().filter_map(|t| t.surface_height(x, y)).reduce(f64::max);
            push(Vec3::new(x, y, crown.unwrap_or(stand.ground_z)), crown.is_some(), &mut rng);
        }
    }
    for t in &stand.trees {
        push(Vec3::new(t.center.0, t.center.1, t.height_m), true, &mut rng);
    }
    PointCloud::with_colors(points, colors)
}

/// Circular orbit at constant altitude around the stand center, cameras
/// looking at the center on the ground. Camera axes: +Z forward, +X right.
pub fn synth_trajectory(stand: &SyntheticStand, orbit_radius_m: f64, altitude_m: f64, n_frames: usize) -> Trajectory {
    let (cx, cy) = stand.center();
    let target = Vec3::new(cx, cy, stand.ground_z);
    let poses = (0..n_frames)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n_frames as f64;
            let (s, c) = quadrant_sin_cos(k, n_frames, theta);
            let position = Vec3::new(cx + orbit_radius_m * c, cy + orbit_radius_m * s, altitude_m);
            let forward = (target - position).normalize();
            let right = forward.cross(&Vec3::z()).normalize();
            let down = forward.cross(&right);
            let r = Matrix3::from_columns(&[right, down, forward]);
            Pose { frame_id: k as u64, position, orientation: UnitQuaternion::from_matrix(&r) }
        })
        .collect();
    Trajectory::new(poses).expect("frame ids are unique")
}

/// `sin_cos` that is exact at multiples of a quarter turn.
fn quadrant_sin_cos(k: usize, n: usize, theta: f64) -> (f64, f64) {
    if (4 * k).is_multiple_of(n) {
        match (4 * k / n) % 4 {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        theta.sin_cos()
    }
}

/// Applies a similarity to every pose: positions are mapped, orientations
/// are pre-multiplied by the rotation.
pub fn perturb_sim3(trajectory: &Trajectory, transform: &Sim3Transform) -> Trajectory {
    let q = transform.quaternion();
    let poses = trajectory
        .poses()
        .iter()
        .map(|p| Pose { frame_id: p.frame_id, position: transform.apply(&p.position), orientation: q * p.orientation })
        .collect();
    Trajectory::new(poses).expect("frame ids unchanged")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::umeyama_align;
    use nalgebra::Rotation3;

    #[test]
    fn splitmix_reference_values() {
        // first outputs for seed 0 of the reference generator
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn single_tree_is_centered() {
        let s = generate_stand(&StandParams { n_trees: 1, extent_m: (20.0, 30.0), ..Default::default() }).unwrap();
        assert_eq!(s.trees[0].center, (10.0, 15.0));
    }

    #[test]
    fn spacing_bound_holds() {
        let p = StandParams { n_trees: 25, extent_m: (60.0, 60.0), min_spacing_factor: 1.5, ..Default::default() };
        let s = generate_stand(&p).unwrap();
        assert_eq!(s.trees.len(), 25);
        for (i, a) in s.trees.iter().enumerate() {
            for b in &s.trees[i + 1..] {
                let d = ((a.center.0 - b.center.0).powi(2) + (a.center.1 - b.center.1).powi(2)).sqrt();
                assert!(d >= 1.5 * (a.crown_radius_m + b.crown_radius_m));
            }
            assert!(a.center.0 >= a.crown_radius_m && a.center.0 <= 60.0 - a.crown_radius_m);
        }
        assert_eq!(generate_stand(&p).unwrap(), s);
    }

    #[test]
    fn impossible_packing() {
        let p = StandParams { n_trees: 50, extent_m: (10.0, 10.0), ..Default::default() };
        assert!(matches!(generate_stand(&p), Err(SynthError::PackingInfeasible { .. })));
    }

    #[test]
    fn apex_sample_is_exact() {
        let s = generate_stand(&StandParams { n_trees: 1, ..Default::default() }).unwrap();
        let cloud = sample_cloud(&s, 4.0, 0.0, 3);
        let apex = cloud.points.last().unwrap();
        assert_eq!(apex.z, s.trees[0].height_m);
        assert!(cloud.points.iter().all(|p| p.z <= s.trees[0].height_m));
    }

    #[test]
    fn ground_only_count() {
        let s = SyntheticStand { trees: vec![], extent_m: (10.0, 10.0), ground_z: 0.0, seed: 0 };
        assert_eq!(sample_cloud(&s, 4.0, 0.1, 9).len(), 400);
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = generate_stand(&StandParams::default()).unwrap();
        let a = sample_cloud(&s, 4.0, 0.05, 11);
        let b = sample_cloud(&s, 4.0, 0.05, 11);
        assert_eq!(a, b);
        assert_ne!(a, sample_cloud(&s, 4.0, 0.05, 12));
    }

    #[test]
    fn orbit_geometry() {
        let s = SyntheticStand { trees: vec![], extent_m: (20.0, 20.0), ground_z: 0.0, seed: 0 };
        let t = synth_trajectory(&s, 5.0, 80.0, 4);
        let pos: Vec<Vec3> = t.positions();
        assert_eq!(pos[0], Vec3::new(15.0, 10.0, 80.0));
        assert_eq!(pos[1], Vec3::new(10.0, 15.0, 80.0));
        assert_eq!(pos[2], Vec3::new(5.0, 10.0, 80.0));
        assert_eq!(pos[3], Vec3::new(10.0, 5.0, 80.0));
        assert_eq!(t.poses().iter().map(|p| p.frame_id).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
        let t = synth_trajectory(&s, 30.0, 55.0, 37);
        assert!(t.poses().iter().all(|p| p.position.z == 55.0));
        for p in t.poses() {
            let look = p.orientation * Vec3::z();
            let to_center = (Vec3::new(10.0, 10.0, 0.0) - p.position).normalize();
            assert!((look - to_center).norm() < 1e-12);
        }
    }

    #[test]
    fn perturbation_inverse_problem() {
        let s = SyntheticStand { trees: vec![], extent_m: (20.0, 20.0), ground_z: 0.0, seed: 0 };
        let t = synth_trajectory(&s, 50.0, 80.0, 36);
        assert_eq!(perturb_sim3(&t, &Sim3Transform::identity()), t);
        let rot = *Rotation3::from_axis_angle(&Vec3::z_axis(), PI / 2.0).matrix();
        let planted = Sim3Transform::new(2.0, rot, Vec3::new(1.0, 2.0, 3.0));
        let moved = perturb_sim3(&t, &planted);
        let r = umeyama_align(&t.positions(), &moved.positions()).unwrap();
        assert!((r.transform.scale - 2.0).abs() < 1e-9);
        assert!((r.transform.rotation - rot).norm() < 1e-9);
        assert!((r.transform.translation - planted.translation).abs().max() < 1e-9);
    }

    #[test]
    fn perturbation_group_law() {
        let s = SyntheticStand { trees: vec![], extent_m: (20.0, 20.0), ground_z: 0.0, seed: 0 };
        let t = synth_trajectory(&s, 10.0, 30.0, 12);
        let a =
            Sim3Transform::new(1.5, *Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix(), Vec3::new(1.0, 0.0, -2.0));
        let b =
            Sim3Transform::new(0.7, *Rotation3::from_euler_angles(-0.4, 0.0, 1.1).matrix(), Vec3::new(0.0, 3.0, 1.0));
        let twice = perturb_sim3(&perturb_sim3(&t, &a), &b);
        let once = perturb_sim3(&t, &b.compose(&a));
        for (p, q) in twice.poses().iter().zip(once.poses()) {
            assert!((p.position - q.position).norm() < 1e-9);
            assert!(p.orientation.angle_to(&q.orientation) < 1e-9);
        }
    }
}
