//! Wrench-log ingestion and steady-state noise calibration.
//!
//! Log format: a header line `# units: N, N·m, s; frame: <id>` followed by
//! `t,fx,fy,fz,mx,my,mz` rows. An optional column-name row and blank lines
//! are skipped.

use std::path::Path;

use super::SynthError;
use crate::mechanics::Frame;
use crate::qp::SensorNoise;

#[derive(Clone, Debug, PartialEq)]
pub struct WrenchLog {
    /// Seconds, strictly increasing.
    pub timestamps: Vec<f64>,
    /// `[fx, fy, fz, mx, my, mz]` in N and N·m.
    pub samples: Vec<[f64; 6]>,
    pub frame: Frame,
}

impl WrenchLog {
    pub fn new(timestamps: Vec<f64>, samples: Vec<[f64; 6]>, frame: Frame) -> Result<Self, SynthError> {
        if timestamps.len() != samples.len() {
            return Err(SynthError::Log("timestamp and sample counts differ".into()));
        }
        for (i, w) in timestamps.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(SynthError::Ordering { line: i + 2 });
            }
        }
        Ok(Self { timestamps, samples, frame })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# units: N, N·m, s; frame: {}\nt,fx,fy,fz,mx,my,mz\n", self.frame);
        for (t, w) in self.timestamps.iter().zip(&self.samples) {
            s.push_str(&format!("{t},{},{},{},{},{},{}\n", w[0], w[1], w[2], w[3], w[4], w[5]));
        }
        s
    }
}

struct Units {
    force: f64,
    moment: f64,
    time: f64,
}

fn unit_scale(token: &str, table: &[(&str, f64)], what: &str, line: usize) -> Result<f64, SynthError> {
    let norm: String = token.trim().chars().filter(|c| !c.is_whitespace()).collect::<String>().replace(['·', '*', '.'], "");
    table
        .iter()
        .find(|(name, _)| *name == norm)
        .map(|(_, s)| *s)
        .ok_or_else(|| SynthError::Parse { line, message: format!("unknown {what} unit {token:?}") })
}

fn parse_header(text: &str, line: usize) -> Result<(Units, Frame), SynthError> {
    let body = text.trim_start_matches('#').trim();
    let mut units = None;
    let mut frame = None;
    for part in body.split(';') {
        let Some((key, value)) = part.split_once(':') else {
            return Err(SynthError::Parse { line, message: format!("malformed header field {part:?}") });
        };
        match key.trim().to_ascii_lowercase().as_str() {
            "units" => {
                let u: Vec<&str> = value.split(',').collect();
                if u.len() != 3 {
                    return Err(SynthError::Parse { line, message: "units must list force, moment, time".into() });
                }
                units = Some(Units {
                    force: unit_scale(u[0], &[("N", 1.0), ("mN", 1e-3), ("kN", 1e3)], "force", line)?,
                    moment: unit_scale(
                        u[1],
                        &[("Nm", 1.0), ("mNm", 1e-3), ("Nmm", 1e-3), ("kNm", 1e3)],
                        "moment",
                        line,
                    )?,
                    time: unit_scale(u[2], &[("s", 1.0), ("ms", 1e-3), ("us", 1e-6)], "time", line)?,
                });
            }
            "frame" => {
                frame = Some(
                    value
                        .parse::<Frame>()
                        .map_err(|e| SynthError::Parse { line, message: e.to_string() })?,
                )
            }
            other => return Err(SynthError::Parse { line, message: format!("unknown header key {other:?}") }),
        }
    }
    match (units, frame) {
        (Some(u), Some(f)) => Ok((u, f)),
        _ => Err(SynthError::Parse { line, message: "header must declare units and frame".into() }),
    }
}

pub fn parse_wrench_log(text: &str) -> Result<WrenchLog, SynthError> {
    let mut header = None;
    let mut timestamps = Vec::new();
    let mut samples = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let row = raw.trim();
        if row.is_empty() {
            continue;
        }
        if row.starts_with('#') {
            if header.is_some() {
                continue;
            }
            header = Some(parse_header(row, line)?);
            continue;
        }
        let Some((units, _)) = &header else {
            return Err(SynthError::Parse { line, message: "missing '# units: …; frame: …' header".into() });
        };
        if row.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(SynthError::Parse { line, message: format!("expected 7 fields, found {}", fields.len()) });
        }
        let mut vals = [0.0; 7];
        for (v, f) in vals.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .map_err(|_| SynthError::Parse { line, message: format!("not a number: {f:?}") })?;
            if !v.is_finite() {
                return Err(SynthError::Parse { line, message: format!("non-finite value {f:?}") });
            }
        }
        let t = vals[0] * units.time;
        if let Some(&prev) = timestamps.last() {
            if !(t > prev) {
                return Err(SynthError::Ordering { line });
            }
        }
        timestamps.push(t);
        samples.push([
            vals[1] * units.force,
            vals[2] * units.force,
            vals[3] * units.force,
            vals[4] * units.moment,
            vals[5] * units.moment,
            vals[6] * units.moment,
        ]);
    }
    let (_, frame) = header.ok_or_else(|| SynthError::Parse { line: 1, message: "empty log".into() })?;
    WrenchLog::new(timestamps, samples, frame)
}

pub fn load_wrench_log(path: &Path) -> Result<WrenchLog, SynthError> {
    let text = std::fs::read_to_string(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
    parse_wrench_log(&text)
}

pub const MIN_WINDOW_SAMPLES: usize = 30;

/// Per-component unbiased variance over samples with `t0 ≤ t ≤ t1`, after
/// removing the window mean.
pub fn calibrate_sigma(log: &WrenchLog, window: (f64, f64)) -> Result<SensorNoise, SynthError> {
    let rows: Vec<&[f64; 6]> = log
        .timestamps
        .iter()
        .zip(&log.samples)
        .filter(|(t, _)| **t >= window.0 && **t <= window.1)
        .map(|(_, s)| s)
        .collect();
    if rows.len() < MIN_WINDOW_SAMPLES {
        return Err(SynthError::Window { found: rows.len(), needed: MIN_WINDOW_SAMPLES });
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(SynthError::Log("window contains non-finite samples".into()));
    }
    let n = rows.len() as f64;
    let mut var = [0.0; 6];
    for (k, v) in var.iter_mut().enumerate() {
        let mean = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        *v = rows.iter().map(|r| (r[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
    }
    Ok(SensorNoise::new(var)?)
}

/// Start and end of the `duration`-long window with the smallest summed
/// variance, among windows holding at least [`MIN_WINDOW_SAMPLES`] samples.
pub fn suggest_steady_window(log: &WrenchLog, duration: f64) -> Option<(f64, f64)> {
    let n = log.len();
    let mut sum = vec![[0.0; 6]; n + 1];
    let mut sq = vec![[0.0; 6]; n + 1];
    for i in 0..n {
        for k in 0..6 {
            let v = log.samples[i][k];
            sum[i + 1][k] = sum[i][k] + v;
            sq[i + 1][k] = sq[i][k] + v * v;
        }
    }
    let mut best: Option<(f64, (f64, f64))> = None;
    let mut end = 0;
    for start in 0..n {
        let t0 = log.timestamps[start];
        while end < n && log.timestamps[end] <= t0 + duration {
            end += 1;
        }
        let m = end - start;
        if m < MIN_WINDOW_SAMPLES || log.timestamps[end - 1] - t0 < 0.95 * duration {
            continue;
        }
        let mf = m as f64;
        let total: f64 = (0..6)
            .map(|k| {
                let s = sum[end][k] - sum[start][k];
                ((sq[end][k] - sq[start][k]) - s * s / mf) / (mf - 1.0)
            })
            .sum();
        if best.is_none_or(|(b, _)| total < b) {
            best = Some((total, (t0, t0 + duration)));
        }
    }
    best.map(|b| b.1)
}
