//! Browser demo: distance-field slices, a contact filter localising a push
//! on a hex key, and the joint pose filter on a poker-and-tool scenario.
//!
//! Every entry point returns JSON for the page to draw. The computations
//! live on [`Demo`] so they also run (and are tested) natively; the
//! `wasm_bindgen` layer only converts errors.

use nalgebra::Point3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;
use wasm_bindgen::prelude::*;

use scope_core::cpf::{cpfgrasp_observed, CpfParams};
use scope_core::geometry::{GeometryError, ObjectModel};
use scope_core::scope::{scope, GripperSpec, LossMask, ScopeParams};
use scope_core::synth::models::{gripper_at, hex_key_model};
use scope_core::synth::{
    arm_inputs, generate_cpf_scenario, generate_scenario, ErrorReport, ScenarioConfig, SynthError, SyntheticWorld,
};

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("unknown object {0:?}; expected poker, tool or hex_key")]
    UnknownObject(String),
    #[error("{0}")]
    Params(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

/// Two in-plane axes of an object: the pair with the largest extents, so
/// flat objects are drawn face-on.
fn view_axes(model: &ObjectModel) -> [usize; 2] {
    let pts = &model.surface.points;
    let extent = |d: usize| {
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[d]), hi.max(p[d])));
        hi - lo
    };
    let mut axes = [0, 1, 2];
    axes.sort_by(|&a, &b| extent(b).total_cmp(&extent(a)));
    let mut two = [axes[0], axes[1]];
    two.sort();
    two
}

fn project(p: &Point3<f64>, axes: [usize; 2]) -> [f64; 2] {
    [p[axes[0]], p[axes[1]]]
}

#[derive(Serialize)]
struct Slice {
    object: String,
    axes: [char; 2],
    /// Row-major, `rows × cols`, metres; first row at the smallest second
    /// coordinate.
    values: Vec<f32>,
    cols: usize,
    rows: usize,
    origin: [f64; 2],
    voxel_size: f64,
    min: f32,
    max: f32,
}

#[derive(Serialize)]
struct Particle {
    at: [f64; 2],
    weight: f64,
}

#[derive(Serialize)]
struct CpfRun {
    axes: [char; 2],
    surface: Vec<[f64; 2]>,
    truth: [f64; 2],
    force_n: f64,
    /// Scored particles after each step.
    steps: Vec<Vec<Particle>>,
    estimate: [f64; 2],
    error_mm: f64,
}

#[derive(Serialize)]
struct PosePoint {
    x_cm: f64,
    z_cm: f64,
    theta_deg: f64,
}

impl PosePoint {
    fn of(p: &scope_core::scope::PlanarGraspPose) -> Self {
        Self { x_cm: p.x * 100.0, z_cm: p.z * 100.0, theta_deg: p.theta.to_degrees() }
    }
}

#[derive(Serialize)]
struct ScopeRun {
    mask: String,
    truth_poker: PosePoint,
    truth_tool: PosePoint,
    /// Mean survivor errors after each outer step.
    e_agg_cm: Vec<f64>,
    trans_p_cm: Vec<f64>,
    trans_t_cm: Vec<f64>,
    /// Survivor poses after each outer step.
    poker: Vec<Vec<PosePoint>>,
    tool: Vec<Vec<PosePoint>>,
    final_e_agg_cm: f64,
}

const AXIS_NAMES: [char; 3] = ['x', 'y', 'z'];

/// Models built once per page load.
#[wasm_bindgen]
pub struct Demo {
    world: SyntheticWorld,
    key: ObjectModel,
    key_gripper: GripperSpec,
}

impl Demo {
    pub fn build(voxel_size: f64) -> Result<Self, DemoError> {
        if !(voxel_size >= 0.001 && voxel_size <= 0.01) {
            return Err(DemoError::Params(format!("voxel size {voxel_size} outside [0.001, 0.01] m")));
        }
        let world = SyntheticWorld::standard(voxel_size)?;
        let key = hex_key_model(voxel_size)?;
        let key_gripper = gripper_at(&key, Point3::origin());
        Ok(Self { world, key, key_gripper })
    }

    fn object(&self, name: &str) -> Result<&ObjectModel, DemoError> {
        match name {
            "poker" => Ok(&self.world.poker),
            "tool" => Ok(&self.world.tool),
            "hex_key" => Ok(&self.key),
            other => Err(DemoError::UnknownObject(other.into())),
        }
    }

    /// Signed distance on the object's viewing plane, at `depth` (0..1)
    /// through the grid along the third axis.
    pub fn slice_json(&self, object: &str, depth: f64) -> Result<String, DemoError> {
        let model = self.object(object)?;
        let axes = view_axes(model);
        let normal = 3 - axes[0] - axes[1];
        let shape = &model.sdf.shape;
        let layer = ((depth.clamp(0.0, 1.0) * (shape.dims[normal] - 1) as f64).round()) as usize;
        let (cols, rows) = (shape.dims[axes[0]], shape.dims[axes[1]]);
        let mut values = Vec::with_capacity(cols * rows);
        for r in 0..rows {
            for c in 0..cols {
                let mut ijk = [0; 3];
                ijk[axes[0]] = c;
                ijk[axes[1]] = r;
                ijk[normal] = layer;
                values.push(model.sdf.at(ijk[0], ijk[1], ijk[2]) as f32);
            }
        }
        let min = values.iter().copied().fold(f32::INFINITY, f32::min);
        let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let o = shape.center(0, 0, 0);
        let slice = Slice {
            object: object.into(),
            axes: [AXIS_NAMES[axes[0]], AXIS_NAMES[axes[1]]],
            values,
            cols,
            rows,
            origin: project(&o, axes),
            voxel_size: shape.voxel_size,
            min,
            max,
        };
        Ok(serde_json::to_string(&slice).expect("slice serializes"))
    }

    /// Localise a random push on the hex key from its wrench alone.
    pub fn cpf_json(&self, seed: u32, n_clp: usize, n_cs: usize) -> Result<String, DemoError> {
        let params = CpfParams { n_clp, n_cs, ..CpfParams::table_one() };
        params.validate().map_err(|e| DemoError::Params(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let sc = generate_cpf_scenario(&self.key, &self.key_gripper, &ScenarioConfig::default(), &mut rng)?;
        let axes = view_axes(&self.key);
        let mut steps = Vec::with_capacity(n_cs);
        let set = cpfgrasp_observed(
            &sc.wrench,
            &sc.pose_gt.to_transform(),
            &self.key.surface,
            &sc.noise,
            &params,
            &mut rng,
            |s| {
                steps.push(s.particles.iter().map(|p| Particle { at: project(&p.location, axes), weight: p.likelihood }).collect())
            },
        )
        .map_err(SynthError::from)?;
        let estimate = set.weighted_mean();
        let run = CpfRun {
            axes: [AXIS_NAMES[axes[0]], AXIS_NAMES[axes[1]]],
            surface: self.key.surface.points.iter().map(|p| project(p, axes)).collect(),
            truth: project(&sc.contact_point, axes),
            force_n: sc.applied_force.norm(),
            steps,
            estimate: project(&estimate, axes),
            error_mm: (estimate - sc.contact_point).norm() * 1000.0,
        };
        Ok(serde_json::to_string(&run).expect("cpf run serializes"))
    }

    /// Joint poker and tool pose estimation on one synthetic push. Same
    /// result as the batch trial with this seed, without wall-clock timing,
    /// which the browser target lacks.
    pub fn scope_json(&self, seed: u32, n_opp: usize, n_os: usize, mask: &str) -> Result<String, DemoError> {
        let mask: LossMask = mask.parse().map_err(|e: scope_core::scope::ScopeError| DemoError::Params(e.to_string()))?;
        let base = ScopeParams::table_two();
        let params = ScopeParams {
            n_opp,
            n_os,
            mask,
            // a lighter inner filter keeps the page responsive
            cpf: CpfParams { n_clp: 10, n_cs: 10, ..base.cpf },
            ..base
        };
        params.validate().map_err(|e| DemoError::Params(e.to_string()))?;
        // same generator order as the batch trials: scenario first, then the filter
        let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
        let sc = generate_scenario(&self.world, &ScenarioConfig::default(), &mut rng)?;
        let (poker, tool) = arm_inputs(&self.world, &sc);
        let truth = sc.truth();
        let result = scope(&poker, &tool, &params, Some(&truth), &mut rng).map_err(SynthError::from)?;
        let history: Vec<ErrorReport> = result.history.iter().filter_map(|h| h.errors).collect();
        let (r_p, r_t) = (self.world.poker.radius_of_gyration, self.world.tool.radius_of_gyration);
        let final_errors = ErrorReport::mean_over(&result.poses(), &truth, r_p, r_t);
        let poses = |pick: fn(&scope_core::scope::PairRecord) -> &scope_core::scope::PlanarGraspPose| {
            result
                .history
                .iter()
                .map(|h| h.survivors.iter().map(|&k| PosePoint::of(pick(&h.pairs[k]))).collect())
                .collect()
        };
        let run = ScopeRun {
            mask: mask.to_string(),
            truth_poker: PosePoint::of(&sc.poker_pose_gt),
            truth_tool: PosePoint::of(&sc.tool_pose_gt),
            e_agg_cm: history.iter().map(|e| e.e_agg).collect(),
            trans_p_cm: history.iter().map(|e| e.trans_error_p).collect(),
            trans_t_cm: history.iter().map(|e| e.trans_error_t).collect(),
            poker: poses(|p| &p.poker),
            tool: poses(|p| &p.tool),
            final_e_agg_cm: final_errors.e_agg,
        };
        Ok(serde_json::to_string(&run).expect("scope run serializes"))
    }
}

fn js(e: DemoError) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Builds the poker, tool and hex key at `voxel_size` metres.
    #[wasm_bindgen(constructor)]
    pub fn new(voxel_size: f64) -> Result<Demo, JsError> {
        Demo::build(voxel_size).map_err(js)
    }

    #[wasm_bindgen(js_name = sdfSlice)]
    pub fn sdf_slice(&self, object: &str, depth: f64) -> Result<String, JsError> {
        self.slice_json(object, depth).map_err(js)
    }

    #[wasm_bindgen(js_name = runCpf)]
    pub fn run_cpf(&self, seed: u32, n_clp: usize, n_cs: usize) -> Result<String, JsError> {
        self.cpf_json(seed, n_clp, n_cs).map_err(js)
    }

    #[wasm_bindgen(js_name = runScope)]
    pub fn run_scope(&self, seed: u32, n_opp: usize, n_os: usize, mask: &str) -> Result<String, JsError> {
        self.scope_json(seed, n_opp, n_os, mask).map_err(js)
    }

    /// Number of surface points of an object, or 0 for an unknown name.
    #[wasm_bindgen(js_name = surfaceCount)]
    pub fn surface_count(&self, object: &str) -> usize {
        self.object(object).map(|m| m.surface.len()).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn demo() -> Demo {
        Demo::build(0.004).unwrap()
    }

    #[test]
    fn slice_has_consistent_shape_and_signs() {
        // 2 mm so the 1 cm thick tool has voxels inside its zero shell
        let d = Demo::build(0.002).unwrap();
        let v: Value = serde_json::from_str(&d.slice_json("tool", 0.5).unwrap()).unwrap();
        let (cols, rows) = (v["cols"].as_u64().unwrap() as usize, v["rows"].as_u64().unwrap() as usize);
        let values = v["values"].as_array().unwrap();
        assert_eq!(values.len(), cols * rows);
        assert!(v["min"].as_f64().unwrap() < 0.0 && v["max"].as_f64().unwrap() > 0.0);
        // the tool box is widest along x and z
        assert_eq!(v["axes"], serde_json::json!(["x", "z"]));
        assert!(matches!(d.slice_json("anvil", 0.5), Err(DemoError::UnknownObject(_))));
    }

    #[test]
    fn cpf_run_records_every_step() {
        let d = demo();
        let v: Value = serde_json::from_str(&d.cpf_json(3, 12, 5).unwrap()).unwrap();
        let steps = v["steps"].as_array().unwrap();
        assert_eq!(steps.len(), 5);
        assert!(steps.iter().all(|s| s.as_array().unwrap().len() == 12));
        let w: f64 = steps[4].as_array().unwrap().iter().map(|p| p["weight"].as_f64().unwrap()).sum();
        assert!((w - 1.0).abs() < 1e-9);
        assert_eq!(v["surface"].as_array().unwrap().len(), d.surface_count("hex_key"));
        assert_eq!(d.cpf_json(3, 12, 5).unwrap(), d.cpf_json(3, 12, 5).unwrap());
        assert!(matches!(d.cpf_json(3, 0, 5), Err(DemoError::Params(_))));
    }

    #[test]
    fn scope_run_tracks_outer_steps() {
        let d = demo();
        let v: Value = serde_json::from_str(&d.scope_json(1, 3, 2, "CF").unwrap()).unwrap();
        assert_eq!(v["mask"], "CF");
        assert_eq!(v["e_agg_cm"].as_array().unwrap().len(), 2);
        assert_eq!(v["poker"].as_array().unwrap().len(), 2);
        assert_eq!(v["poker"][1].as_array().unwrap().len(), 3);
        let last = v["e_agg_cm"][1].as_f64().unwrap();
        assert_eq!(last, v["final_e_agg_cm"].as_f64().unwrap());
        assert!(matches!(d.scope_json(1, 3, 2, "Z"), Err(DemoError::Params(_))));
    }

    #[test]
    fn scope_run_matches_the_batch_trial() {
        let d = demo();
        let v: Value = serde_json::from_str(&d.scope_json(4, 3, 2, "PCF").unwrap()).unwrap();
        let base = ScopeParams::table_two();
        let params = ScopeParams { n_opp: 3, n_os: 2, cpf: CpfParams { n_clp: 10, n_cs: 10, ..base.cpf }, ..base };
        let (outcome, _) =
            scope_core::synth::run_scope_trial(&d.world, &ScenarioConfig::default(), &params, 4).unwrap();
        assert_eq!(v["final_e_agg_cm"].as_f64().unwrap(), outcome.errors.e_agg);
    }

    #[test]
    fn voxel_size_is_bounded() {
        assert!(matches!(Demo::build(0.5), Err(DemoError::Params(_))));
    }
}
