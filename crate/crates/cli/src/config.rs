use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scope_core::cpf::CpfParams;
use scope_core::scope::{LossMask, ScopeParams};
use scope_core::synth::{ScenarioConfig, DEFAULT_SWEEP};

use crate::CliError;

/// One experiment, read from TOML. Every filter parameter is addressable by
/// its field name, e.g. `scope.n_opp` or `scope.cpf.n_clp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// First trial seed; trial `k` uses `seed + k`.
    pub seed: u64,
    pub trials: usize,
    /// Directory receiving every file the run writes.
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Voxel edge length (m) for built-in and mesh models.
    pub voxel_size: f64,
    pub poker: ObjectSpec,
    pub tool: ObjectSpec,
    /// Joint-estimation parameters, including the loss mask.
    pub scope: ScopeParams,
    /// Synthetic contact scenarios.
    pub scenario: ScenarioConfig,
    /// Standalone contact-filter runs.
    pub cpfgrasp: CpfGraspConfig,
    pub sweep: SweepConfig,
    pub calibrate: CalibrateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 10,
            out: PathBuf::from("scope-out"),
            jobs: 0,
            voxel_size: 0.002,
            poker: ObjectSpec::builtin("poker"),
            tool: ObjectSpec::builtin("tool"),
            scope: ScopeParams::table_two(),
            scenario: ScenarioConfig::default(),
            cpfgrasp: CpfGraspConfig::default(),
            sweep: SweepConfig::default(),
            calibrate: CalibrateConfig::default(),
        }
    }
}

/// Where an object model comes from: `builtin:poker`, `builtin:tool`,
/// `builtin:hex_key`, an OBJ or binary STL file, or a preprocessed bundle
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub model: String,
    /// Finger-centre hint in the object frame (m); the gripper is placed at
    /// the nearest surface point. Built-ins have their own default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gripper: Option<[f64; 3]>,
    /// Metres; computed from the voxel occupancy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_of_gyration: Option<f64>,
}

impl ObjectSpec {
    pub fn builtin(name: &str) -> Self {
        Self { model: format!("builtin:{name}"), gripper: None, radius_of_gyration: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CpfGraspConfig {
    pub object: ObjectSpec,
    pub params: CpfParams,
}

impl Default for CpfGraspConfig {
    fn default() -> Self {
        Self { object: ObjectSpec::builtin("hex_key"), params: CpfParams::table_one() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// `[n_clp, n_opp]` cells.
    pub grid: Vec<[usize; 2]>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { grid: DEFAULT_SWEEP.iter().map(|&(c, o)| [c, o]).collect() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// Wrench log CSV.
    pub log: Option<PathBuf>,
    /// Steady-state window `[t0, t1]` (s); the lowest-variance window of
    /// `window_length` seconds is used when absent.
    pub window: Option<[f64; 2]>,
    pub window_length: Option<f64>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub loss_mask: Option<String>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// The file's text alongside the parsed config, so it can be echoed
    /// unchanged.
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok((cfg, text))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
        if let Some(m) = &o.loss_mask {
            self.scope.mask = m.parse::<LossMask>().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    /// Checks everything that can be checked before any model is built.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return bad(format!("voxel_size must be positive, got {}", self.voxel_size));
        }
        if self.out.as_os_str().is_empty() {
            return bad("out must name a directory".into());
        }
        self.scope.validate().map_err(|e| CliError::Config(format!("scope: {e}")))?;
        self.cpfgrasp.params.validate().map_err(|e| CliError::Config(format!("cpfgrasp.params: {e}")))?;
        self.scenario.noise().map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        let s = &self.scenario;
        if !(s.force_min > 0.0 && s.force_max >= s.force_min) {
            return bad(format!("scenario force range [{}, {}] is empty", s.force_min, s.force_max));
        }
        if self.sweep.grid.is_empty() {
            return bad("sweep.grid is empty".into());
        }
        if self.sweep.grid.iter().any(|c| c[0] == 0 || c[1] == 0) {
            return bad("sweep.grid cells need n_clp and n_opp of at least 1".into());
        }
        for spec in [&self.poker, &self.tool, &self.cpfgrasp.object] {
            if let Some(r) = spec.radius_of_gyration {
                if !(r > 0.0 && r.is_finite()) {
                    return bad(format!("{}: radius_of_gyration must be positive", spec.model));
                }
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
