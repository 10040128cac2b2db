//! Joint in-hand pose and contact estimation for a poker pressed against a
//! tool. Pose-pair particles in both grasp planes are scored by penetration,
//! contact-consistency and force-alignment losses computed from per-pose
//! contact particle filters.

mod grasp;
mod losses;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grasp::{
    grasp_distance, grasp_validity, perturb_pose, pose_noise_model, sample_grasp_poses, GraspCaps, GripperSpec,
    PlanarGraspPose, PoseNoise,
};
pub use losses::{
    contact_consistency_loss, force_alignment_loss, penetration_loss, score_opp, LossMask, Losses, WorldContacts,
};

use crate::cpf::{cpfgrasp, systematic_indices, ContactParticleSet, CpfError, CpfParams};
use crate::geometry::ObjectModel;
use crate::mechanics::{RigidTransform, Wrench};
use crate::par_map;
use crate::qp::SensorNoise;
use crate::synth::ErrorReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScopeError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("grasp sampling accepted {accepted} of {proposals} proposals")]
    InfeasibleGrasp { proposals: u64, accepted: usize },
    #[error(transparent)]
    Cpf(#[from] CpfError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScopeParams {
    pub n_opp: usize,
    pub n_os: usize,
    pub cpf: CpfParams,
    pub eta_p: f64,
    pub eta_c: f64,
    pub eps_pp: usize,
    pub pose_noise: PoseNoise,
    pub caps: GraspCaps,
    /// Softmin temperature λ in `w ∝ exp(−λ S)`.
    pub likelihood_temperature: f64,
    pub mask: LossMask,
}

impl Default for ScopeParams {
    fn default() -> Self {
        Self::table_two()
    }
}

impl ScopeParams {
    /// Joint-estimation parameters: 10 pose pairs, 10 outer steps, 20 contact
    /// particles with 30 inner steps each.
    pub fn table_two() -> Self {
        Self {
            n_opp: 10,
            n_os: 10,
            cpf: CpfParams { n_clp: 20, n_cs: 30, ..CpfParams::table_one() },
            eta_p: 0.005,
            eta_c: 20.0,
            eps_pp: 144,
            pose_noise: PoseNoise::default(),
            caps: GraspCaps::default(),
            likelihood_temperature: 1.0,
            mask: LossMask::ALL,
        }
    }

    pub fn validate(&self) -> Result<(), ScopeError> {
        let bad = |m: String| Err(ScopeError::Params(m));
        if self.n_opp < 1 {
            return bad("n_opp must be at least 1".into());
        }
        if self.n_os < 1 {
            return bad("n_os must be at least 1".into());
        }
        if !(self.eta_p >= 0.0 && self.eta_c >= 0.0) {
            return bad(format!("loss weights must be nonnegative, got {} and {}", self.eta_p, self.eta_c));
        }
        if !(self.likelihood_temperature >= 0.0) || !self.likelihood_temperature.is_finite() {
            return bad(format!("likelihood_temperature must be nonnegative, got {}", self.likelihood_temperature));
        }
        let n = &self.pose_noise;
        if ![n.sigma_x, n.sigma_z, n.sigma_theta].iter().all(|s| *s >= 0.0 && s.is_finite()) {
            return bad("pose noise sigmas must be finite and nonnegative".into());
        }
        if !(self.caps.t_max >= 0.0 && self.caps.r_max >= 0.0) {
            return bad("grasp caps must be nonnegative".into());
        }
        if self.mask.is_empty() {
            return bad("loss mask selects nothing".into());
        }
        self.cpf.validate()?;
        Ok(())
    }
}

/// Everything known about one arm: its object model, where its end effector
/// is, how it holds the object and what it measured.
#[derive(Clone, Copy, Debug)]
pub struct ArmInput<'a> {
    pub model: &'a ObjectModel,
    /// End-effector pose in the world.
    pub ee_pose: RigidTransform,
    pub gripper: GripperSpec,
    /// External wrench in the end-effector frame.
    pub wrench: Wrench,
    pub noise: SensorNoise,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosePairParticle {
    pub poker_pose: PlanarGraspPose,
    pub tool_pose: PlanarGraspPose,
    pub contact_poker: ContactParticleSet,
    pub contact_tool: ContactParticleSet,
    pub losses: Losses,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub poker: PlanarGraspPose,
    pub tool: PlanarGraspPose,
    pub losses: Losses,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// All scored pairs, row-major over (poker, tool) pose indices.
    pub pairs: Vec<PairRecord>,
    /// Indices into `pairs` of the resampled survivors.
    pub survivors: Vec<usize>,
    pub mean_losses: Losses,
    pub mean_score: f64,
    /// Mean survivor error against ground truth, when supplied.
    pub errors: Option<ErrorReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScopeResult {
    pub pose_pairs: Vec<PosePairParticle>,
    pub history: Vec<IterationRecord>,
}

impl ScopeResult {
    /// One JSON object per iteration.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for rec in &self.history {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn poses(&self) -> Vec<(PlanarGraspPose, PlanarGraspPose)> {
        self.pose_pairs.iter().map(|p| (p.poker_pose, p.tool_pose)).collect()
    }
}

/// Normalised `exp(−λ (S_i − min S))`; non-finite scores get zero weight and
/// an all-degenerate input falls back to uniform.
pub fn softmin_weights(scores: &[f64], lambda: f64) -> Vec<f64> {
    let min = scores.iter().copied().filter(|s| s.is_finite()).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return vec![1.0 / scores.len() as f64; scores.len()];
    }
    let raw: Vec<f64> = scores
        .iter()
        .map(|s| if s.is_finite() { (-lambda * (s - min)).exp() } else { 0.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Keep the `n_opp` lowest scores and resample `n_opp` indices from them by
/// softmin weight. Returns indices into `scores`.
pub fn pair_and_select<R: Rng + ?Sized>(scores: &[f64], n_opp: usize, lambda: f64, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    order.truncate(n_opp);
    let kept: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let weights = softmin_weights(&kept, lambda);
    let u = rng.random::<f64>() / n_opp as f64;
    systematic_indices(&weights, n_opp, u).into_iter().map(|k| order[k]).collect()
}

/// Losses of one poker/tool pose pairing given both arms' contact beliefs.
pub fn pair_losses(
    poker: &ArmInput,
    tool: &ArmInput,
    poker_pose: &PlanarGraspPose,
    tool_pose: &PlanarGraspPose,
    poker_contacts: &WorldContacts,
    tool_contacts: &WorldContacts,
    params: &ScopeParams,
) -> Losses {
    let penetration = if params.mask.penetration {
        penetration_loss(
            &tool.model.sdf,
            &tool.ee_pose.compose(&tool_pose.to_transform()),
            &poker.model.surface,
            &poker.ee_pose.compose(&poker_pose.to_transform()),
            params.eps_pp,
        )
    } else {
        0.0
    };
    Losses {
        penetration,
        consistency: contact_consistency_loss(poker_contacts, tool_contacts),
        force: force_alignment_loss(poker_contacts, tool_contacts),
    }
}

enum Side {
    Poker,
    Tool,
}

/// Run the joint filter. `truth` only feeds the per-iteration error record.
pub fn scope<R: Rng + ?Sized>(
    poker: &ArmInput,
    tool: &ArmInput,
    params: &ScopeParams,
    truth: Option<&(PlanarGraspPose, PlanarGraspPose)>,
    rng: &mut R,
) -> Result<ScopeResult, ScopeError> {
    params.validate()?;
    let n = params.n_opp;
    let pokers = sample_grasp_poses(&poker.model.surface, &poker.gripper, n, &params.caps, rng)?;
    let tools = sample_grasp_poses(&tool.model.surface, &tool.gripper, n, &params.caps, rng)?;
    let mut pairs: Vec<(PlanarGraspPose, PlanarGraspPose)> = pokers.into_iter().zip(tools).collect();
    let mut survivors = Vec::new();
    let mut history = Vec::with_capacity(params.n_os);

    for it in 0..params.n_os {
        let pp: Vec<_> = pairs.iter().map(|p| p.0).collect();
        let tp: Vec<_> = pairs.iter().map(|p| p.1).collect();
        let pp = pose_noise_model(&pp, &params.pose_noise, &params.caps, &poker.model.surface, &poker.gripper, rng);
        let tp = pose_noise_model(&tp, &params.pose_noise, &params.caps, &tool.model.surface, &tool.gripper, rng);

        // child seeds are drawn in a fixed order so parallel runs stay reproducible
        let jobs: Vec<(Side, PlanarGraspPose, u64)> = pp
            .iter()
            .map(|p| (Side::Poker, *p))
            .chain(tp.iter().map(|p| (Side::Tool, *p)))
            .map(|(s, p)| (s, p, rng.random::<u64>()))
            .collect();
        let sets = par_map(&jobs, |(side, pose, seed)| {
            let arm = match side {
                Side::Poker => poker,
                Side::Tool => tool,
            };
            let held = pose.to_transform();
            let mut child = ChaCha8Rng::seed_from_u64(*seed);
            let set = cpfgrasp(&arm.wrench, &held, &arm.model.surface, &arm.noise, &params.cpf, &mut child)?;
            let world = WorldContacts::from_set(&set, &arm.ee_pose, &held);
            Ok::<_, CpfError>((set, world))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        let (poker_sets, tool_sets) = sets.split_at(n);

        let grid: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
        let scored: Vec<(Losses, f64)> = par_map(&grid, |&(a, b)| {
            let l = pair_losses(poker, tool, &pp[a], &tp[b], &poker_sets[a].1, &tool_sets[b].1, params);
            (l, score_opp(&l, params.eta_p, params.eta_c, &params.mask))
        });
        let scores: Vec<f64> = scored.iter().map(|s| s.1).collect();
        let chosen = pair_and_select(&scores, n, params.likelihood_temperature, rng);

        survivors = chosen
            .iter()
            .map(|&k| {
                let (a, b) = grid[k];
                PosePairParticle {
                    poker_pose: pp[a],
                    tool_pose: tp[b],
                    contact_poker: poker_sets[a].0.clone(),
                    contact_tool: tool_sets[b].0.clone(),
                    losses: scored[k].0,
                    score: scored[k].1,
                }
            })
            .collect::<Vec<_>>();
        pairs = survivors.iter().map(|s| (s.poker_pose, s.tool_pose)).collect();

        let m = survivors.len() as f64;
        let mean_losses = Losses {
            penetration: survivors.iter().map(|s| s.losses.penetration).sum::<f64>() / m,
            consistency: survivors.iter().map(|s| s.losses.consistency).sum::<f64>() / m,
            force: survivors.iter().map(|s| s.losses.force).sum::<f64>() / m,
        };
        let errors = truth.map(|t| {
            ErrorReport::mean_over(&pairs, t, poker.model.radius_of_gyration, tool.model.radius_of_gyration)
        });
        history.push(IterationRecord {
            iteration: it + 1,
            pairs: grid
                .iter()
                .zip(&scored)
                .map(|(&(a, b), (l, s))| PairRecord { poker: pp[a], tool: tp[b], losses: *l, score: *s })
                .collect(),
            survivors: chosen,
            mean_losses,
            mean_score: survivors.iter().map(|s| s.score).sum::<f64>() / m,
            errors,
        });
    }
    Ok(ScopeResult { pose_pairs: survivors, history })
}
