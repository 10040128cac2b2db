use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{generate_scenario, ErrorReport, Scenario, ScenarioConfig, SynthError, SyntheticWorld};
use crate::par_map;
use crate::scope::{scope, ArmInput, LossMask, ScopeParams, ScopeResult};

/// Outcome of one seeded joint-estimation trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    /// Mean error of the final pose-pair particles.
    pub errors: ErrorReport,
    /// Mean error after each outer iteration.
    pub history: Vec<ErrorReport>,
    pub wall_time_s: f64,
}

/// Poker and tool arm inputs for a scenario's noisy measurements.
pub fn arm_inputs<'a>(world: &'a SyntheticWorld, sc: &Scenario) -> (ArmInput<'a>, ArmInput<'a>) {
    let poker = ArmInput {
        model: &world.poker,
        ee_pose: sc.poker_ee,
        gripper: world.poker_gripper,
        wrench: sc.wrench_poker,
        noise: sc.noise,
    };
    let tool = ArmInput {
        model: &world.tool,
        ee_pose: sc.tool_ee,
        gripper: world.tool_gripper,
        wrench: sc.wrench_tool,
        noise: sc.noise,
    };
    (poker, tool)
}

/// Generate the scenario and run the filter from one generator seeded with
/// `seed`.
pub fn run_scope_trial(
    world: &SyntheticWorld,
    scenario: &ScenarioConfig,
    params: &ScopeParams,
    seed: u64,
) -> Result<(TrialOutcome, ScopeResult), SynthError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sc = generate_scenario(world, scenario, &mut rng)?;
    let (poker, tool) = arm_inputs(world, &sc);
    let truth = sc.truth();
    let result = scope(&poker, &tool, params, Some(&truth), &mut rng)?;
    let errors = ErrorReport::mean_over(
        &result.poses(),
        &truth,
        world.poker.radius_of_gyration,
        world.tool.radius_of_gyration,
    );
    let history = result.history.iter().filter_map(|h| h.errors).collect();
    let outcome = TrialOutcome { seed, errors, history, wall_time_s: start.elapsed().as_secs_f64() };
    Ok((outcome, result))
}

/// Trials `seed, seed + 1, …`, returned in trial order.
pub fn run_trials(
    world: &SyntheticWorld,
    scenario: &ScenarioConfig,
    params: &ScopeParams,
    seed: u64,
    trials: usize,
) -> Result<Vec<TrialOutcome>, SynthError> {
    let seeds: Vec<u64> = (0..trials as u64).map(|k| seed.wrapping_add(k)).collect();
    par_map(&seeds, |&s| run_scope_trial(world, scenario, params, s).map(|r| r.0)).into_iter().collect()
}

/// Mean and sample standard deviation of every error column.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub mean: ErrorReport,
    pub std: ErrorReport,
}

fn columns(r: &ErrorReport) -> [f64; 7] {
    [
        r.trans_error_p,
        r.trans_error_t,
        r.rot_error_p_deg,
        r.rot_error_t_deg,
        r.rot_error_p_rad,
        r.rot_error_t_rad,
        r.e_agg,
    ]
}

fn from_columns(c: [f64; 7]) -> ErrorReport {
    ErrorReport {
        trans_error_p: c[0],
        trans_error_t: c[1],
        rot_error_p_deg: c[2],
        rot_error_t_deg: c[3],
        rot_error_p_rad: c[4],
        rot_error_t_rad: c[5],
        e_agg: c[6],
    }
}

impl Summary {
    pub fn of(reports: &[ErrorReport]) -> Self {
        let n = reports.len();
        if n == 0 {
            return Self::default();
        }
        let mut mean = [0.0; 7];
        for r in reports {
            for (m, v) in mean.iter_mut().zip(columns(r)) {
                *m += v / n as f64;
            }
        }
        let mut std = [0.0; 7];
        if n > 1 {
            for r in reports {
                for ((s, v), m) in std.iter_mut().zip(columns(r)).zip(mean) {
                    *s += (v - m).powi(2) / (n - 1) as f64;
                }
            }
            std.iter_mut().for_each(|s| *s = s.sqrt());
        }
        Self { trials: n, mean: from_columns(mean), std: from_columns(std) }
    }

    pub fn of_outcomes(outcomes: &[TrialOutcome]) -> Self {
        Self::of(&outcomes.iter().map(|o| o.errors).collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub mask: LossMask,
    pub summary: Summary,
    pub outcomes: Vec<TrialOutcome>,
}

/// All seven loss subsets over the same seeds, hence the same scenarios.
pub fn ablation(
    world: &SyntheticWorld,
    scenario: &ScenarioConfig,
    params: &ScopeParams,
    seed: u64,
    trials: usize,
) -> Result<Vec<AblationRow>, SynthError> {
    LossMask::subsets()
        .into_iter()
        .map(|mask| {
            let outcomes = run_trials(world, scenario, &ScopeParams { mask, ..*params }, seed, trials)?;
            Ok(AblationRow { mask, summary: Summary::of_outcomes(&outcomes), outcomes })
        })
        .collect()
}

pub const DEFAULT_SWEEP: [(usize, usize); 4] = [(10, 5), (10, 10), (20, 5), (20, 10)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_clp: usize,
    pub n_opp: usize,
    pub summary: Summary,
    pub outcomes: Vec<TrialOutcome>,
}

/// Grid over `(n_clp, n_opp)`, same seeds for every cell.
pub fn sweep(
    world: &SyntheticWorld,
    scenario: &ScenarioConfig,
    params: &ScopeParams,
    grid: &[(usize, usize)],
    seed: u64,
    trials: usize,
) -> Result<Vec<SweepRow>, SynthError> {
    if grid.is_empty() {
        return Err(SynthError::Config("sweep grid is empty".into()));
    }
    grid.iter()
        .map(|&(n_clp, n_opp)| {
            let p = ScopeParams { n_opp, cpf: crate::cpf::CpfParams { n_clp, ..params.cpf }, ..*params };
            let outcomes = run_trials(world, scenario, &p, seed, trials)?;
            Ok(SweepRow { n_clp, n_opp, summary: Summary::of_outcomes(&outcomes), outcomes })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::aggregate_error;

    #[test]
    fn summary_arithmetic() {
        let r = |t: f64| ErrorReport { trans_error_p: t, e_agg: 2.0 * t, ..Default::default() };
        let s = Summary::of(&[r(1.0), r(2.0), r(3.0)]);
        assert_eq!(s.trials, 3);
        assert!((s.mean.trans_error_p - 2.0).abs() < 1e-15);
        assert!((s.std.trans_error_p - 1.0).abs() < 1e-15);
        assert!((s.std.e_agg - 2.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[r(5.0)]).std, ErrorReport::default());
        assert_eq!(aggregate_error(0.0, 0.0, 0.0, 0.0, 5.25, 5.0), 0.0);
    }

    #[test]
    fn trial_is_reproducible() {
        let world = SyntheticWorld::standard(0.004).unwrap();
        let params = ScopeParams {
            n_opp: 3,
            n_os: 2,
            cpf: crate::cpf::CpfParams { n_clp: 6, n_cs: 3, ..crate::cpf::CpfParams::table_one() },
            ..ScopeParams::table_two()
        };
        let cfg = ScenarioConfig::default();
        let (a, ra) = run_scope_trial(&world, &cfg, &params, 11).unwrap();
        let (b, rb) = run_scope_trial(&world, &cfg, &params, 11).unwrap();
        assert_eq!(a.errors, b.errors);
        assert_eq!(ra.history, rb.history);
        assert_eq!(a.history.len(), 2);
        let batch = run_trials(&world, &cfg, &params, 10, 2).unwrap();
        assert_eq!(batch[1].errors, a.errors);
        assert!(matches!(sweep(&world, &cfg, &params, &[], 0, 1), Err(SynthError::Config(_))));
    }
}
