//! Synthetic poker-and-tool scenarios, noise calibration, error metrics and
//! seeded experiment batches.

mod calibration;
mod experiment;
mod metrics;
pub mod models;
mod scenario;

use thiserror::Error;

pub use calibration::{
    calibrate_sigma, load_wrench_log, parse_wrench_log, suggest_steady_window, WrenchLog, MIN_WINDOW_SAMPLES,
};
pub use experiment::{
    ablation, arm_inputs, run_scope_trial, run_trials, sweep, AblationRow, Summary, SweepRow, TrialOutcome,
    DEFAULT_SWEEP,
};
pub use metrics::{aggregate_error, pose_errors, wrap_angle, ErrorReport};
pub use models::SyntheticWorld;
pub use scenario::{
    generate_cpf_scenario, generate_scenario, in_polyhedral_cone, sample_cone_direction, wrench_at_surface_point,
    CpfScenario, Scenario, ScenarioConfig,
};

use crate::cpf::CpfError;
use crate::geometry::GeometryError;
use crate::mechanics::MechanicsError;
use crate::qp::QpError;
use crate::scope::ScopeError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: timestamps must increase")]
    Ordering { line: usize },
    #[error("calibration window holds {found} samples, needs {needed}")]
    Window { found: usize, needed: usize },
    #[error("wrench log: {0}")]
    Log(String),
    #[error("{0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no contact found after {attempts} attempts")]
    NoContact { attempts: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mechanics(#[from] MechanicsError),
    #[error(transparent)]
    Scope(#[from] ScopeError),
    #[error(transparent)]
    Cpf(#[from] CpfError),
}
