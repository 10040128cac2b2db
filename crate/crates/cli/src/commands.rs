use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use scope_core::cpf::cpfgrasp;
use scope_core::scope::{IterationRecord, LossMask};
use scope_core::synth::{
    ablation, calibrate_sigma, generate_cpf_scenario, load_wrench_log, run_scope_trial, suggest_steady_window,
    sweep, Summary, SynthError,
};

use crate::bundle::{self, Preprocessed};
use crate::config::ExperimentConfig;
use crate::output::{self, LossColumns, OutDir, TrialRow};
use crate::CliError;

pub enum Models {
    None,
    Single,
    Pair,
}

/// A validated config with its output directory created and the config
/// echoed into it.
pub struct Run {
    pub cfg: ExperimentConfig,
    pub out: OutDir,
}

impl Run {
    /// `models` selects which object references the command will load.
    pub fn start(cfg: ExperimentConfig, source: Option<&str>, models: Models) -> Result<Self, CliError> {
        cfg.validate()?;
        match models {
            Models::None => {}
            Models::Single => bundle::check_spec(&cfg.cpfgrasp.object)?,
            Models::Pair => {
                bundle::check_spec(&cfg.poker)?;
                bundle::check_spec(&cfg.tool)?;
            }
        }
        let out = OutDir::create(&cfg.out)?;
        if let Some(text) = source {
            out.write("config.toml", text.as_bytes())?;
        }
        out.write("resolved.toml", cfg.to_toml().as_bytes())?;
        Ok(Self { cfg, out })
    }

    fn seeds(&self) -> Vec<u64> {
        (0..self.cfg.trials as u64).map(|k| self.cfg.seed.wrapping_add(k)).collect()
    }
}

fn compute(e: SynthError) -> CliError {
    match e {
        SynthError::Config(m) => CliError::Config(m),
        other => CliError::Compute(other.to_string()),
    }
}

pub fn preprocess(mesh: &Path, voxel_size: f64, out: &Path) -> Result<(), CliError> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(CliError::Config(format!("voxel size must be positive, got {voxel_size}")));
    }
    let out = OutDir::create(out)?;
    match bundle::preprocess(mesh, voxel_size, &out)? {
        Preprocessed::UpToDate => eprintln!("{}: skipped (up to date)", out.root().display()),
        Preprocessed::Written { surface_points } => eprintln!(
            "{}: wrote {}, {}, {} ({surface_points} surface points)",
            out.root().display(),
            bundle::VOXELS,
            bundle::SDF,
            bundle::SURFACE
        ),
    }
    Ok(())
}

pub fn calibrate(run: &Run, log: Option<PathBuf>, window: Option<[f64; 2]>) -> Result<(), CliError> {
    let c = &run.cfg.calibrate;
    let path = log
        .or_else(|| c.log.clone())
        .ok_or_else(|| CliError::Config("no wrench log given (argument or calibrate.log)".into()))?;
    let log = load_wrench_log(&path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let window = match window.or(c.window) {
        Some(w) => (w[0], w[1]),
        None => {
            let length = c.window_length.unwrap_or(2.0);
            let w = suggest_steady_window(&log, length).ok_or_else(|| {
                CliError::Compute(format!("no {length} s window holds enough samples; pass --window"))
            })?;
            eprintln!("using lowest-variance window [{:.3}, {:.3}] s", w.0, w.1);
            w
        }
    };
    let noise = calibrate_sigma(&log, window).map_err(compute)?;
    let mut csv = format!(
        "# units: variance N^2 (forces) and (N·m)^2 (moments), std N and N·m; frame: {}; window_s: {} {}\ncomponent,variance,std\n",
        log.frame, window.0, window.1
    );
    let std = noise.std_devs();
    for (k, name) in ["fx", "fy", "fz", "mx", "my", "mz"].iter().enumerate() {
        csv.push_str(&format!("{name},{},{}\n", noise.sigma_diag[k], std[k]));
    }
    run.out.write("noise.csv", csv.as_bytes())?;
    Ok(())
}

pub fn run_cpfgrasp(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg;
    let (model, gripper) = bundle::resolve(&cfg.cpfgrasp.object, cfg.voxel_size)?;
    let params = cfg.cpfgrasp.params;
    let rows: Vec<Result<_, CliError>> = run
        .seeds()
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sc = generate_cpf_scenario(&model, &gripper, &cfg.scenario, &mut rng).map_err(compute)?;
            let set = cpfgrasp(&sc.wrench, &sc.pose_gt.to_transform(), &model.surface, &sc.noise, &params, &mut rng)
                .map_err(|e| CliError::Compute(e.to_string()))?;
            let best = &set.particles[set.best()];
            let mean_err = (set.weighted_mean() - sc.contact_point).norm() * 1000.0;
            let best_err = (best.location - sc.contact_point).norm() * 1000.0;
            let residual = best.residual().unwrap_or(f64::NAN);
            eprintln!("seed {seed}: contact error {mean_err:.2} mm");
            Ok((seed, mean_err, best_err, residual, sc.applied_force.norm(), start.elapsed().as_secs_f64()))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut csv = String::from(
        "# units: errors mm, residual dimensionless (noise-whitened), force N\ntrial,seed,mean_error_mm,best_error_mm,best_residual,force_n\n",
    );
    for (k, r) in rows.iter().enumerate() {
        csv.push_str(&format!("{k},{},{},{},{},{}\n", r.0, r.1, r.2, r.3, r.4));
    }
    if rows.len() > 1 {
        let stats = |f: fn(&(u64, f64, f64, f64, f64, f64)) -> f64| {
            let v: Vec<f64> = rows.iter().map(f).collect();
            let n = v.len() as f64;
            let m = v.iter().sum::<f64>() / n;
            (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        };
        let (a, b) = (stats(|r| r.1), stats(|r| r.2));
        csv.push_str(&format!("mean,,{},{},,\nstd,,{},{},,\n", a.0, b.0, a.1, b.1));
    }
    run.out.write("cpfgrasp.csv", csv.as_bytes())?;
    let timing: Vec<(u64, f64)> = rows.iter().map(|r| (r.0, r.5)).collect();
    run.out.write("timing.csv", output::timing_csv(&timing).as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct HistoryLine<'a> {
    trial: usize,
    seed: u64,
    #[serde(flatten)]
    record: &'a IterationRecord,
}

fn loss_columns(mask: &LossMask, rec: Option<&IterationRecord>) -> LossColumns {
    let l = rec.map(|r| r.mean_losses).unwrap_or_default();
    LossColumns {
        penetration: mask.penetration.then_some(l.penetration),
        consistency_mm: mask.consistency.then_some(l.consistency * 1000.0),
        force_n: mask.force.then_some(l.force),
    }
}

pub fn run_scope(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg;
    let world = bundle::world(cfg)?;
    let results: Vec<Result<_, CliError>> = run
        .seeds()
        .par_iter()
        .map(|&seed| {
            let r = run_scope_trial(&world, &cfg.scenario, &cfg.scope, seed).map_err(compute)?;
            eprintln!("seed {seed}: E_agg {:.3} cm", r.0.errors.e_agg);
            Ok(r)
        })
        .collect();
    let results = results.into_iter().collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<TrialRow> = results
        .iter()
        .map(|(o, r)| TrialRow {
            seed: o.seed,
            errors: o.errors,
            losses: loss_columns(&cfg.scope.mask, r.history.last()),
        })
        .collect();
    let summary = Summary::of(&rows.iter().map(|r| r.errors).collect::<Vec<_>>());
    let mask = cfg.scope.mask.to_string();
    run.out.write("trials.csv", output::trials_csv(&mask, &rows, &summary).as_bytes())?;
    let timing: Vec<(u64, f64)> = results.iter().map(|(o, _)| (o.seed, o.wall_time_s)).collect();
    run.out.write("timing.csv", output::timing_csv(&timing).as_bytes())?;

    let mut history = Vec::new();
    for (k, (o, r)) in results.iter().enumerate() {
        for record in &r.history {
            serde_json::to_writer(&mut history, &HistoryLine { trial: k, seed: o.seed, record })
                .map_err(|e| CliError::Io(e.to_string()))?;
            history.push(b'\n');
        }
    }
    run.out.write("history.jsonl", &history)?;
    Ok(())
}

pub fn run_ablation(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg;
    let world = bundle::world(cfg)?;
    eprintln!("ablation: 7 loss subsets x {} trials", cfg.trials);
    let rows = ablation(&world, &cfg.scenario, &cfg.scope, cfg.seed, cfg.trials).map_err(compute)?;
    let mut csv = format!("{}\nlosses,trials,{}\n", output::ERROR_UNITS, output::summary_header());
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.mask, r.summary.trials, output::summary_fields(&r.summary)));
    }
    run.out.write("ablation.csv", csv.as_bytes())?;
    Ok(())
}

pub fn run_sweep(run: &Run) -> Result<(), CliError> {
    let cfg = &run.cfg;
    let world = bundle::world(cfg)?;
    let grid: Vec<(usize, usize)> = cfg.sweep.grid.iter().map(|c| (c[0], c[1])).collect();
    eprintln!("sweep: {} cells x {} trials", grid.len(), cfg.trials);
    let rows = sweep(&world, &cfg.scenario, &cfg.scope, &grid, cfg.seed, cfg.trials).map_err(compute)?;
    let mut csv = format!("{}\nn_clp,n_opp,trials,{}\n", output::ERROR_UNITS, output::summary_header());
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            r.n_clp,
            r.n_opp,
            r.summary.trials,
            output::summary_fields(&r.summary)
        ));
    }
    run.out.write("sweep.csv", csv.as_bytes())?;
    Ok(())
}
