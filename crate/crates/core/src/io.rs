//! Result files: CSV tables, JSON records, and experimental overlays.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical `f64`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::dtc::PhaseDiagram;
use crate::ensemble::{FitResult, TraceStats};
use crate::units::to_ns;
use crate::{Error, Result};

pub const TRACE_HEADER: [&str; 3] = ["time_us", "coherence_mean", "coherence_stderr"];
pub const PHASE_HEADER: [&str; 3] = ["tau_ns", "epsilon_over_pi", "s_half_sq"];
pub const BOUNDARY_HEADER: [&str; 2] = ["tau_ns", "eps_star_over_pi"];

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    ensure_parent(path)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Trace table; the stderr column is left empty for single-realization runs.
pub fn write_trace_csv(path: &Path, stats: &TraceStats) -> Result<()> {
    let rows = (0..stats.times.len()).map(|i| {
        vec![
            num(stats.times[i]),
            num(stats.mean[i]),
            opt(stats.stderr.as_ref().map(|s| s[i])),
        ]
    });
    write_rows(path, &TRACE_HEADER, rows)
}

/// Long-format intensity matrix.
pub fn write_phase_csv(path: &Path, d: &PhaseDiagram) -> Result<()> {
    let pi = std::f64::consts::PI;
    let mut rows = Vec::new();
    for (i, &tau) in d.tau_grid.iter().enumerate() {
        for (j, &eps) in d.eps_grid.iter().enumerate() {
            rows.push(vec![num(to_ns(tau)), num(eps / pi), num(d.intensity[i][j])]);
        }
    }
    write_rows(path, &PHASE_HEADER, rows)
}

/// One row per τ; `eps_star_over_pi` is empty where no crossing exists.
pub fn write_boundary_csv(path: &Path, d: &PhaseDiagram) -> Result<()> {
    let pi = std::f64::consts::PI;
    let rows = d
        .boundary
        .iter()
        .map(|b| vec![num(to_ns(b.tau)), opt(b.eps_star.map(|e| e / pi))]);
    write_rows(path, &BOUNDARY_HEADER, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub final_coherence: f64,
    pub final_stderr: Option<f64>,
    pub fit: Option<FitResult>,
}

/// Sweep table: swept value, last trace point, and the decay fit when one
/// converged.
pub fn write_sweep_csv(path: &Path, column: &str, rows: &[SweepRow]) -> Result<()> {
    let header = [column, "final_coherence", "final_stderr", "t_1e_us", "beta"];
    let body = rows.iter().map(|r| {
        vec![
            num(r.value),
            num(r.final_coherence),
            opt(r.final_stderr),
            opt(r.fit.map(|f| f.t_1e)),
            opt(r.fit.map(|f| f.beta)),
        ]
    });
    write_rows(path, &header, body)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Trace {
        stats: TraceStats,
        fit: Option<FitResult>,
    },
    Sweep {
        param: String,
        rows: Vec<SweepRow>,
    },
    PhaseDiagram {
        diagram: PhaseDiagram,
        boundary_slope: Option<f64>,
    },
    Calibration {
        target_slope_per_us2: f64,
        ppm: f64,
        mean_j_mhz: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub config: RunConfig,
    pub config_hash: String,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub payload: Payload,
    /// Measured overlay, stored verbatim.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentSeries>,
}

/// `SOURCE_DATE_EPOCH` when set, the clock otherwise.
pub fn record_timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

impl ResultRecord {
    pub fn new(config: &RunConfig, payload: Payload) -> Result<Self> {
        Self::with_timestamp(config, payload, record_timestamp())
    }

    pub fn with_timestamp(config: &RunConfig, payload: Payload, timestamp: u64) -> Result<Self> {
        let config = config.normalized()?;
        Ok(Self {
            config_hash: config.hash()?,
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp,
            payload,
            experiment: None,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        ensure_parent(path)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Re-emits an ingested series as `time_us,coherence,err`.
pub fn write_experiment_csv(path: &Path, s: &ExperimentSeries) -> Result<()> {
    let rows = (0..s.len()).map(|i| vec![num(s.times[i]), num(s.coherence[i]), opt(s.errors[i])]);
    write_rows(path, &["time_us", "coherence", "err"], rows)
}

/// Output file names for a command, e.g. `simulate.csv`/`simulate.json`.
pub fn output_paths(dir: &Path, stem: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.json")))
}

/// Measured data for side-by-side comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSeries {
    pub times: Vec<f64>,
    pub coherence: Vec<f64>,
    /// `None` where the file gives no uncertainty.
    pub errors: Vec<Option<f64>>,
}

impl ExperimentSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Reads a `time_us,coherence[,err]` file. Rows must have strictly
/// increasing, distinct times.
pub fn ingest_experiment(path: &Path) -> Result<ExperimentSeries> {
    let name = path.display().to_string();
    let perr = |line: usize, message: String| Error::Parse {
        path: name.clone(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| perr(0, e.to_string()))?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| perr(1, e.to_string()))?,
        None => return Err(perr(1, "empty file".into())),
    };
    let cols: Vec<&str> = header.iter().collect();
    let has_err = match cols.as_slice() {
        ["time_us", "coherence"] => false,
        ["time_us", "coherence", "err"] => true,
        _ => {
            return Err(perr(
                1,
                format!("expected header `time_us,coherence[,err]`, found `{}`", cols.join(",")),
            ))
        }
    };
    let mut out = ExperimentSeries {
        times: Vec::new(),
        coherence: Vec::new(),
        errors: Vec::new(),
    };
    for rec in records {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let expected = if has_err { 3 } else { 2 };
        if rec.len() != expected {
            return Err(perr(line, format!("expected {expected} fields, found {}", rec.len())));
        }
        let field = |i: usize, what: &str| -> Result<f64> {
            let v: f64 = rec[i]
                .parse()
                .map_err(|_| perr(line, format!("invalid {what} `{}`", &rec[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(perr(line, format!("non-finite {what}")))
            }
        };
        let t = field(0, "time")?;
        let c = field(1, "coherence")?;
        let e = if has_err && !rec[2].is_empty() {
            let e = field(2, "err")?;
            if e < 0.0 {
                return Err(perr(line, "negative err".into()));
            }
            Some(e)
        } else {
            None
        };
        if let Some(&prev) = out.times.last() {
            if t == prev {
                return Err(perr(line, format!("duplicated time {t}")));
            }
            if t < prev {
                return Err(perr(line, format!("time {t} is not increasing")));
            }
        }
        out.times.push(t);
        out.coherence.push(c);
        out.errors.push(e);
    }
    if out.is_empty() {
        return Err(perr(1, "no data rows".into()));
    }
    Ok(out)
}
