use nalgebra::{DMatrix, DVector, Point3, Rotation3, Vector3};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{SynthError, SyntheticWorld};
use crate::cpf::{contact_frame, contact_frame_cone};
use crate::geometry::{count_penetrating, ObjectModel};
use crate::mechanics::{ContactAdjoint, FrictionCone, Frame, RigidTransform, Wrench};
use crate::qp::{nnls, SensorNoise};
use crate::scope::{sample_grasp_poses, GraspCaps, GripperSpec, PlanarGraspPose};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub mu: f64,
    pub n_f: usize,
    /// Applied force magnitude range (N).
    pub force_min: f64,
    pub force_max: f64,
    /// Standard deviations of the added measurement noise.
    pub force_std: f64,
    pub moment_std: f64,
    pub caps: GraspCaps,
    /// Largest tilt of the poker from straight down (rad).
    pub tilt_max: f64,
    /// Push along the poker axis instead of sampling the cone.
    pub force_along_poker_axis: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            n_f: 8,
            force_min: 2.0,
            force_max: 15.0,
            force_std: 0.1,
            moment_std: 0.005,
            caps: GraspCaps::default(),
            tilt_max: 15f64.to_radians(),
            force_along_poker_axis: false,
        }
    }
}

impl ScenarioConfig {
    pub fn noise(&self) -> Result<SensorNoise, SynthError> {
        Ok(SensorNoise::from_std(self.force_std, self.moment_std)?)
    }
}

/// Ground-truth contact between a poker and a tool, with the wrenches both
/// end effectors would measure.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub poker_pose_gt: PlanarGraspPose,
    pub tool_pose_gt: PlanarGraspPose,
    pub poker_ee: RigidTransform,
    pub tool_ee: RigidTransform,
    /// World contact point: the first poker surface point to enter the tool.
    pub contact_point: Point3<f64>,
    /// Outward tool normal at the contact, world frame.
    pub contact_normal: Vector3<f64>,
    /// Force on the tool, world frame (N). The poker feels the opposite.
    pub applied_force: Vector3<f64>,
    /// Surface-point indices carrying each arm's contact.
    pub poker_contact_index: usize,
    pub tool_contact_index: usize,
    pub wrench_poker: Wrench,
    pub wrench_tool: Wrench,
    pub wrench_poker_clean: Wrench,
    pub wrench_tool_clean: Wrench,
    pub noise: SensorNoise,
}

impl Scenario {
    pub fn truth(&self) -> (PlanarGraspPose, PlanarGraspPose) {
        (self.poker_pose_gt, self.tool_pose_gt)
    }

    pub fn poker_in_world(&self) -> RigidTransform {
        self.poker_ee.compose(&self.poker_pose_gt.to_transform())
    }

    pub fn tool_in_world(&self) -> RigidTransform {
        self.tool_ee.compose(&self.tool_pose_gt.to_transform())
    }
}

/// End-effector wrench produced by `force_world` acting on surface point
/// `idx` of an object held at `object_in_ee` by an end effector at `ee`.
pub fn wrench_at_surface_point(
    model: &ObjectModel,
    idx: usize,
    object_in_ee: &RigidTransform,
    ee: &RigidTransform,
    force_world: &Vector3<f64>,
) -> Result<Wrench, SynthError> {
    let frame = contact_frame(object_in_ee, &model.surface.points[idx], &model.surface.normals[idx]);
    let f_contact = frame.rotation.transpose() * (ee.rotation.transpose() * force_world);
    let adj = ContactAdjoint::from_contact_frame(&frame)?;
    Ok(adj.apply(&Wrench::new(f_contact, Vector3::zeros(), Frame::Contact))?)
}

/// Whether `force` lies in the polyhedral cone (within roundoff).
pub fn in_polyhedral_cone(cone: &FrictionCone, force: &Vector3<f64>) -> bool {
    let m = DMatrix::from_fn(3, cone.edges.len(), |i, j| cone.edges[j][i]);
    let b = DVector::from_column_slice(force.as_slice());
    let a = nnls(&m, &b);
    (&m * a - b).norm() <= 1e-9 * force.norm().max(1e-12)
}

/// Uniform direction inside a polyhedral cone: a flat-Dirichlet mixture of
/// its edges.
pub fn sample_cone_direction<R: Rng + ?Sized>(cone: &FrictionCone, rng: &mut R) -> Vector3<f64> {
    let f: Vector3<f64> = cone.edges.iter().map(|e| e * rng.sample::<f64, _>(Exp1)).sum();
    f.normalize()
}

fn add_noise<R: Rng + ?Sized>(w: &Wrench, cfg: &ScenarioConfig, rng: &mut R) -> Wrench {
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    let force = w.force + Vector3::new(g(), g(), g()) * cfg.force_std;
    let moment = w.moment + Vector3::new(g(), g(), g()) * cfg.moment_std;
    Wrench::new(force, moment, w.frame)
}

const ATTEMPTS: usize = 50;
const TRAVEL: f64 = 0.2;
const COARSE_STEP: f64 = 0.001;
const FINE_TOL: f64 = 1e-4;
const STANDOFF: f64 = 0.03;

/// Sample poses, drive the poker into the tool from above and synthesise the
/// resulting wrench pair. Retries up to 50 times.
pub fn generate_scenario<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Scenario, SynthError> {
    let aim = Aim::new(world)?;
    for _ in 0..ATTEMPTS {
        if let Some(s) = try_scenario(world, cfg, &aim, rng)? {
            return Ok(s);
        }
    }
    Err(SynthError::NoContact { attempts: ATTEMPTS })
}

/// Poker tip (furthest surface point along the poker's +x axis) and the top
/// layer of upward-facing tool surface points the approach aims at.
struct Aim {
    tip: Point3<f64>,
    targets: Vec<usize>,
}

impl Aim {
    fn new(world: &SyntheticWorld) -> Result<Self, SynthError> {
        let tip = *world.poker.surface.points.iter().max_by(|a, b| a.x.total_cmp(&b.x)).expect("surface is non-empty");
        let surface = &world.tool.surface;
        let top = surface.points.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        let layer = top - 0.5 * world.tool.voxel_size();
        let targets: Vec<usize> =
            (0..surface.len()).filter(|&i| surface.normals[i].z > 0.5 && surface.points[i].z >= layer).collect();
        if targets.is_empty() {
            return Err(SynthError::Config("tool model has no upward-facing surface to approach".into()));
        }
        Ok(Self { tip, targets })
    }
}

fn try_scenario<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    cfg: &ScenarioConfig,
    aim: &Aim,
    rng: &mut R,
) -> Result<Option<Scenario>, SynthError> {
    let (poker, tool) = (&world.poker, &world.tool);
    let tool_pose = sample_grasp_poses(&tool.surface, &world.tool_gripper, 1, &cfg.caps, rng)?[0];
    let poker_pose = sample_grasp_poses(&poker.surface, &world.poker_gripper, 1, &cfg.caps, rng)?[0];
    let tool_ee = RigidTransform::identity();
    let tool_world = tool_ee.compose(&tool_pose.to_transform());

    // poker axis points down, tilted in the x–z plane
    let tilt = if cfg.tilt_max > 0.0 { rng.random_range(-cfg.tilt_max..=cfg.tilt_max) } else { 0.0 };
    let axis_angle = std::f64::consts::FRAC_PI_2 + tilt;
    let ee_rot = Rotation3::from_axis_angle(&Vector3::y_axis(), axis_angle - poker_pose.theta);
    let dir = Rotation3::from_axis_angle(&Vector3::y_axis(), axis_angle) * Vector3::x();

    let target = tool_world.transform_point(&tool.surface.points[aim.targets[rng.random_range(0..aim.targets.len())]]);
    let tip_in_ee = poker_pose.to_transform().transform_point(&aim.tip);
    let start = target.coords - dir * STANDOFF - ee_rot * tip_in_ee.coords;

    let ee_at = |s: f64| RigidTransform::from_rotation(ee_rot, start + dir * s);
    let object_at = |s: f64| ee_at(s).compose(&poker_pose.to_transform());
    let touching = |s: f64| count_penetrating(&tool.sdf, &tool_world, &poker.surface, &object_at(s)) > 0;

    if touching(0.0) {
        return Ok(None);
    }
    let mut lo = 0.0;
    let mut hi = None;
    let mut s = COARSE_STEP;
    while s <= TRAVEL {
        if touching(s) {
            hi = Some(s);
            break;
        }
        lo = s;
        s += COARSE_STEP;
    }
    let Some(mut hi) = hi else { return Ok(None) };
    while hi - lo > FINE_TOL {
        let mid = 0.5 * (lo + hi);
        if touching(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    let poker_world = object_at(hi);
    let poker_ee = ee_at(hi);
    let poker_in_tool = tool_world.inverse().compose(&poker_world);
    let (poker_idx, _) = poker
        .surface
        .points
        .iter()
        .enumerate()
        .filter_map(|(i, p)| tool.sdf.try_sample(&poker_in_tool.transform_point(p)).map(|v| (i, v)))
        .filter(|(_, v)| *v <= 0.0)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("bisection ends in contact");
    let contact_point = poker_world.transform_point(&poker.surface.points[poker_idx]);
    let contact_in_tool = tool_world.inverse().transform_point(&contact_point);
    let tool_idx = tool.surface.nearest(&contact_in_tool);
    let contact_normal = tool_world.rotation * tool.surface.normals[tool_idx];

    // both arms' own cones must hold the force so each wrench is exactly
    // explainable by its own contact model
    let tool_cone_world = FrictionCone::new(contact_point, &contact_normal, cfg.mu, cfg.n_f)?;
    let poker_normal_world = poker_world.rotation * poker.surface.normals[poker_idx];
    let poker_cone_world = FrictionCone::new(contact_point, &poker_normal_world, cfg.mu, cfg.n_f)?;
    let direction = if cfg.force_along_poker_axis {
        Some(dir).filter(|d| in_polyhedral_cone(&tool_cone_world, d) && in_polyhedral_cone(&poker_cone_world, &-d))
    } else {
        (0..100)
            .map(|_| sample_cone_direction(&tool_cone_world, rng))
            .find(|d| in_polyhedral_cone(&poker_cone_world, &-d))
    };
    let Some(direction) = direction else { return Ok(None) };
    let applied_force = direction * rng.random_range(cfg.force_min..=cfg.force_max);

    let wrench_tool_clean =
        wrench_at_surface_point(tool, tool_idx, &tool_pose.to_transform(), &tool_ee, &applied_force)?;
    let wrench_poker_clean =
        wrench_at_surface_point(poker, poker_idx, &poker_pose.to_transform(), &poker_ee, &-applied_force)?;
    let wrench_tool = add_noise(&wrench_tool_clean, cfg, rng);
    let wrench_poker = add_noise(&wrench_poker_clean, cfg, rng);
    Ok(Some(Scenario {
        poker_pose_gt: poker_pose,
        tool_pose_gt: tool_pose,
        poker_ee,
        tool_ee,
        contact_point,
        contact_normal,
        applied_force,
        poker_contact_index: poker_idx,
        tool_contact_index: tool_idx,
        wrench_poker,
        wrench_tool,
        wrench_poker_clean,
        wrench_tool_clean,
        noise: cfg.noise()?,
    }))
}

/// Single-arm contact on a held object, for the standalone contact filter.
#[derive(Clone, Debug, PartialEq)]
pub struct CpfScenario {
    pub pose_gt: PlanarGraspPose,
    pub contact_index: usize,
    /// Contact location in the object frame.
    pub contact_point: Point3<f64>,
    /// Force on the object in the end-effector frame (N).
    pub applied_force: Vector3<f64>,
    pub wrench: Wrench,
    pub wrench_clean: Wrench,
    pub noise: SensorNoise,
}

/// Random valid grasp, random surface contact, force drawn from that
/// point's cone.
pub fn generate_cpf_scenario<R: Rng + ?Sized>(
    model: &ObjectModel,
    gripper: &GripperSpec,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<CpfScenario, SynthError> {
    let pose_gt = sample_grasp_poses(&model.surface, gripper, 1, &cfg.caps, rng)?[0];
    let held = pose_gt.to_transform();
    let contact_index = rng.random_range(0..model.surface.len());
    let cone = contact_frame_cone(cfg.mu, cfg.n_f)?;
    let frame = contact_frame(&held, &model.surface.points[contact_index], &model.surface.normals[contact_index]);
    let f_contact = sample_cone_direction(&cone, rng) * rng.random_range(cfg.force_min..=cfg.force_max);
    let applied_force = frame.rotation * f_contact;
    let wrench_clean =
        wrench_at_surface_point(model, contact_index, &held, &RigidTransform::identity(), &applied_force)?;
    let wrench = add_noise(&wrench_clean, cfg, rng);
    Ok(CpfScenario {
        pose_gt,
        contact_index,
        contact_point: model.surface.points[contact_index],
        applied_force,
        wrench,
        wrench_clean,
        noise: cfg.noise()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpf::contact_frame_cone;
    use crate::geometry::default_eps_s;
    use crate::qp::solve_contact_qp;
    use crate::synth::models::hex_key_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn world() -> SyntheticWorld {
        SyntheticWorld::standard(0.002).unwrap()
    }

    fn residual_at(model: &ObjectModel, idx: usize, held: &RigidTransform, w: &Wrench, noise: &SensorNoise) -> f64 {
        let frame = contact_frame(held, &model.surface.points[idx], &model.surface.normals[idx]);
        let adj = ContactAdjoint::from_contact_frame(&frame).unwrap();
        solve_contact_qp(w, &adj, &contact_frame_cone(0.5, 8).unwrap(), noise).unwrap().residual
    }

    #[test]
    fn scenarios_satisfy_contracts() {
        let w = world();
        let cfg = ScenarioConfig::default();
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = generate_scenario(&w, &cfg, &mut rng).unwrap();

            let r_p = residual_at(&w.poker, s.poker_contact_index, &s.poker_pose_gt.to_transform(), &s.wrench_poker_clean, &s.noise);
            let r_t = residual_at(&w.tool, s.tool_contact_index, &s.tool_pose_gt.to_transform(), &s.wrench_tool_clean, &s.noise);
            assert!(r_p <= 1e-12 && r_t <= 1e-12, "seed {seed}: {r_p} {r_t}");

            let eps = default_eps_s(0.002);
            let in_tool = s.tool_in_world().inverse().transform_point(&s.contact_point);
            let in_poker = s.poker_in_world().inverse().transform_point(&s.contact_point);
            assert!(w.tool.sdf.sample(&in_tool).unwrap() <= eps);
            assert!(w.poker.sdf.sample(&in_poker).unwrap().abs() <= eps);

            let clean = s.poker_ee.rotation * s.wrench_poker_clean.force + s.tool_ee.rotation * s.wrench_tool_clean.force;
            assert!(clean.norm() <= 1e-9, "seed {seed}: {clean}");
            let noisy = s.poker_ee.rotation * s.wrench_poker.force + s.tool_ee.rotation * s.wrench_tool.force;
            // sum of two independent noise vectors: per-axis σ √2
            assert!(noisy.amax() <= 3.0 * cfg.force_std * 2f64.sqrt() * 1.5, "seed {seed}: {noisy}");
            let m = s.applied_force.norm();
            assert!((2.0..=15.0).contains(&m));
            assert!(s.poker_pose_gt.within(&cfg.caps) && s.tool_pose_gt.within(&cfg.caps));
        }
    }

    #[test]
    fn axial_force_follows_poker() {
        let w = world();
        let cfg = ScenarioConfig { force_along_poker_axis: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = generate_scenario(&w, &cfg, &mut rng).unwrap();
        let axis = s.poker_in_world().rotation * Vector3::x();
        assert!(s.applied_force.normalize().dot(&axis) > 1.0 - 1e-12);
    }

    #[test]
    fn scenarios_are_seeded() {
        let w = world();
        let cfg = ScenarioConfig::default();
        let a = generate_scenario(&w, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = generate_scenario(&w, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cpf_scenario_is_generative() {
        let key = hex_key_model(0.002).unwrap();
        let gripper = crate::synth::models::gripper_at(&key, Point3::origin());
        let cfg = ScenarioConfig::default();
        for seed in 0..10 {
            let s = generate_cpf_scenario(&key, &gripper, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let r = residual_at(&key, s.contact_index, &s.pose_gt.to_transform(), &s.wrench_clean, &s.noise);
            assert!(r <= 1e-12, "seed {seed}: {r}");
        }
    }

    #[test]
    fn cone_membership_helper() {
        let cone = contact_frame_cone(0.5, 8).unwrap();
        assert!(in_polyhedral_cone(&cone, &Vector3::z()));
        assert!(!in_polyhedral_cone(&cone, &-Vector3::z()));
        assert!(!in_polyhedral_cone(&cone, &Vector3::new(1.0, 0.0, 1.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert!(in_polyhedral_cone(&cone, &sample_cone_direction(&cone, &mut rng)));
        }
    }
}
