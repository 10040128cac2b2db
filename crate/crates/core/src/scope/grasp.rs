use nalgebra::Point3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ScopeError;
use crate::geometry::SurfaceModel;
use crate::mechanics::RigidTransform;

/// Offset of an object frame inside the end-effector grasp plane: a rotation
/// by `theta` about the end-effector y axis and a translation `(x, 0, z)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanarGraspPose {
    pub x: f64,
    pub z: f64,
    pub theta: f64,
}

impl PlanarGraspPose {
    pub fn new(x: f64, z: f64, theta: f64) -> Self {
        Self { x, z, theta }
    }

    /// Object frame expressed in the end-effector frame.
    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::planar_xz(self.x, self.z, self.theta)
    }

    pub fn within(&self, caps: &GraspCaps) -> bool {
        self.x.abs() <= caps.t_max && self.z.abs() <= caps.t_max && self.theta.abs() <= caps.r_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperSpec {
    /// Finger centre in the end-effector frame (m).
    pub finger_center: Point3<f64>,
    /// Largest admissible distance from the finger centre to the object
    /// surface (m).
    pub tolerance: f64,
}

impl GripperSpec {
    pub fn new(finger_center: Point3<f64>) -> Self {
        Self { finger_center, tolerance: 0.001 }
    }
}

/// Bounds on sampled grasp offsets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspCaps {
    /// Translation cap on |x| and |z| (m).
    pub t_max: f64,
    /// Rotation cap on |θ| (rad).
    pub r_max: f64,
}

impl Default for GraspCaps {
    fn default() -> Self {
        Self { t_max: 0.03, r_max: 45f64.to_radians() }
    }
}

/// Standard deviations of the per-iteration pose perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseNoise {
    pub sigma_x: f64,
    pub sigma_z: f64,
    pub sigma_theta: f64,
}

impl Default for PoseNoise {
    fn default() -> Self {
        Self { sigma_x: 0.003, sigma_z: 0.003, sigma_theta: 3f64.to_radians() }
    }
}

/// Distance from the finger centre to the nearest surface point of the
/// object held at `pose`.
pub fn grasp_distance(pose: &PlanarGraspPose, surface: &SurfaceModel, gripper: &GripperSpec) -> f64 {
    let finger_in_object = pose.to_transform().inverse().transform_point(&gripper.finger_center);
    surface.nearest_distance(&finger_in_object)
}

/// A grasp is valid when some surface point lies within the gripper
/// tolerance of the finger centre (inclusive).
pub fn grasp_validity(pose: &PlanarGraspPose, surface: &SurfaceModel, gripper: &GripperSpec) -> bool {
    grasp_distance(pose, surface, gripper) <= gripper.tolerance
}

const MAX_PROPOSALS: u64 = 1_000_000;
const MIN_ACCEPTANCE: f64 = 1e-4;

/// Rejection-sample `n` valid poses uniformly from the capped box.
pub fn sample_grasp_poses<R: Rng + ?Sized>(
    surface: &SurfaceModel,
    gripper: &GripperSpec,
    n: usize,
    caps: &GraspCaps,
    rng: &mut R,
) -> Result<Vec<PlanarGraspPose>, ScopeError> {
    let mut out = Vec::with_capacity(n);
    let mut proposals: u64 = 0;
    while out.len() < n {
        let pose = PlanarGraspPose::new(
            rng.random_range(-caps.t_max..=caps.t_max),
            rng.random_range(-caps.t_max..=caps.t_max),
            rng.random_range(-caps.r_max..=caps.r_max),
        );
        proposals += 1;
        if grasp_validity(&pose, surface, gripper) {
            out.push(pose);
        }
        if proposals >= MAX_PROPOSALS && (out.len() as f64) < MIN_ACCEPTANCE * proposals as f64 {
            return Err(ScopeError::InfeasibleGrasp { proposals, accepted: out.len() });
        }
    }
    Ok(out)
}

const NOISE_REDRAWS: usize = 20;

/// Gaussian perturbation of one pose; draws that leave the caps or lose the
/// grasp are retried, and after 20 failures the pose is kept.
pub fn perturb_pose<R: Rng + ?Sized>(
    pose: &PlanarGraspPose,
    noise: &PoseNoise,
    caps: &GraspCaps,
    surface: &SurfaceModel,
    gripper: &GripperSpec,
    rng: &mut R,
) -> PlanarGraspPose {
    if noise.sigma_x == 0.0 && noise.sigma_z == 0.0 && noise.sigma_theta == 0.0 {
        return *pose;
    }
    for _ in 0..NOISE_REDRAWS {
        let mut g = || rng.sample::<f64, _>(StandardNormal);
        let cand = PlanarGraspPose::new(
            pose.x + noise.sigma_x * g(),
            pose.z + noise.sigma_z * g(),
            pose.theta + noise.sigma_theta * g(),
        );
        if cand.within(caps) && grasp_validity(&cand, surface, gripper) {
            return cand;
        }
    }
    *pose
}

pub fn pose_noise_model<R: Rng + ?Sized>(
    poses: &[PlanarGraspPose],
    noise: &PoseNoise,
    caps: &GraspCaps,
    surface: &SurfaceModel,
    gripper: &GripperSpec,
    rng: &mut R,
) -> Vec<PlanarGraspPose> {
    poses.iter().map(|p| perturb_pose(p, noise, caps, surface, gripper, rng)).collect()
}
