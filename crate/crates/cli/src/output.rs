use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use scope_core::synth::{ErrorReport, Summary};

use crate::CliError;

/// The only place the CLI writes. File names are plain names inside the
/// directory; anything with a separator or a parent component is refused.
#[derive(Clone, Debug)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let plain = Path::new(name).components().count() == 1
            && matches!(Path::new(name).components().next(), Some(std::path::Component::Normal(_)));
        if !plain {
            return Err(CliError::Io(format!("refusing to write {name:?} outside {}", self.root.display())));
        }
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Shortest round-trip formatting keeps reruns byte-identical.
fn num(v: f64) -> String {
    format!("{v}")
}

pub const ERROR_UNITS: &str = "# units: translation cm, rotation deg, E_agg cm";

const ERROR_COLUMNS: [&str; 5] = ["trans_p_cm", "rot_p_deg", "trans_t_cm", "rot_t_deg", "e_agg_cm"];

fn error_values(r: &ErrorReport) -> [f64; 5] {
    [r.trans_error_p, r.rot_error_p_deg, r.trans_error_t, r.rot_error_t_deg, r.e_agg]
}

/// Mean/stdev pairs per error column, E_agg mean and stdev last.
pub fn summary_header() -> String {
    let mut cols: Vec<String> = Vec::new();
    for c in &ERROR_COLUMNS[..4] {
        cols.push(format!("{c}_mean"));
        cols.push(format!("{c}_std"));
    }
    cols.push("e_agg_cm_mean".into());
    cols.push("e_agg_cm_std".into());
    cols.join(",")
}

pub fn summary_fields(s: &Summary) -> String {
    let (m, d) = (error_values(&s.mean), error_values(&s.std));
    let mut out: Vec<String> = Vec::new();
    for k in 0..5 {
        out.push(num(m[k]));
        out.push(num(d[k]));
    }
    out.join(",")
}

/// Final survivor losses; `None` marks a loss the mask left out.
#[derive(Clone, Copy, Debug)]
pub struct LossColumns {
    pub penetration: Option<f64>,
    pub consistency_mm: Option<f64>,
    pub force_n: Option<f64>,
}

pub const NOT_APPLIED: &str = "not_applied";

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| NOT_APPLIED.into())
}

pub struct TrialRow {
    pub seed: u64,
    pub errors: ErrorReport,
    pub losses: LossColumns,
}

/// One row per trial, then `mean` and `std` rows when there is more than
/// one trial.
pub fn trials_csv(mask: &str, rows: &[TrialRow], summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{ERROR_UNITS}; L_P points, L_C mm, L_F N; loss mask {mask}");
    let _ = writeln!(s, "trial,seed,{},l_p_points,l_c_mm,l_f_n", ERROR_COLUMNS.join(","));
    for (k, r) in rows.iter().enumerate() {
        let e = error_values(&r.errors).map(num).join(",");
        let l = &r.losses;
        let _ = writeln!(
            s,
            "{k},{},{e},{},{},{}",
            r.seed,
            opt(l.penetration),
            opt(l.consistency_mm),
            opt(l.force_n)
        );
    }
    if rows.len() > 1 {
        for (label, rep) in [("mean", &summary.mean), ("std", &summary.std)] {
            let e = error_values(rep).map(num).join(",");
            let _ = writeln!(s, "{label},,{e},,,");
        }
    }
    s
}

pub fn timing_csv(rows: &[(u64, f64)]) -> String {
    let mut s = String::from("# units: s\ntrial,seed,wall_time_s\n");
    for (k, (seed, t)) in rows.iter().enumerate() {
        let _ = writeln!(s, "{k},{seed},{t:.6}");
    }
    s
}
