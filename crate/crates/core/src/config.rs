//! Run configuration in human units.
//!
//! Frequencies are given in MHz (meaning `f = ω/2π`), times in μs or ns as
//! the key suffix says, angles as multiples of π. Everything is converted to
//! the internal convention once, in [`RunConfig::resolve`]. Unknown keys are
//! rejected.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dtc::{DtcProtocol, SpectrumMode};
use crate::ensemble::{DecayModel, EnsembleSpec};
use crate::hamiltonian::DEFAULT_TRUNCATION;
use crate::sequences::{PulseTiming, SequenceSpec};
use crate::units::{mhz, ns};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub ensemble: EnsembleBlock,
    pub sequence: Option<SequenceBlock>,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleBlock {
    pub n_realizations: usize,
    pub master_seed: u64,
    pub n_spins: usize,
    pub ppm: f64,
    pub w_mhz: f64,
    pub eta_pol: f64,
    pub pulse_mode: PulseTiming,
    pub t_p_ns: f64,
    pub truncation: f64,
}

impl Default for EnsembleBlock {
    fn default() -> Self {
        Self {
            n_realizations: 500,
            master_seed: 0,
            n_spins: 9,
            ppm: 46.0,
            w_mhz: 0.65,
            eta_pol: 1.0,
            pulse_mode: PulseTiming::Ideal,
            t_p_ns: 0.0,
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Ramsey,
    SpinEcho,
    EpsCpmg,
    WahuhaEcho,
    SpinLock,
    DtcFloquet,
}

impl SequenceKind {
    fn name(self) -> &'static str {
        match self {
            SequenceKind::Ramsey => "ramsey",
            SequenceKind::SpinEcho => "spin_echo",
            SequenceKind::EpsCpmg => "eps_cpmg",
            SequenceKind::WahuhaEcho => "wahuha_echo",
            SequenceKind::SpinLock => "spin_lock",
            SequenceKind::DtcFloquet => "dtc_floquet",
        }
    }

    /// Keys the variant reads, besides `kind`.
    fn keys(self) -> &'static [&'static str] {
        match self {
            SequenceKind::Ramsey | SequenceKind::SpinEcho => &["times_us", "t_max_us", "points"],
            SequenceKind::EpsCpmg => &["tau_ns", "epsilon_over_pi", "k", "t_p_ns", "mode", "times_us"],
            SequenceKind::WahuhaEcho => &["tau_ns", "k", "t_p_ns", "mode", "times_us"],
            SequenceKind::SpinLock => &["omega_y_mhz", "times_us", "t_max_us", "points"],
            SequenceKind::DtcFloquet => &["tau_ns", "epsilon_over_pi", "phi_over_pi", "omega_y_mhz"],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceBlock {
    pub kind: Option<SequenceKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon_over_pi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_p_ns: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<PulseTiming>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_y_mhz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi_over_pi: Option<f64>,
    /// Explicit readout times.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times_us: Option<Vec<f64>>,
    /// Uniform grid `0..=t_max_us` with `points` samples when `times_us` is absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max_us: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl SequenceBlock {
    fn present_keys(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! check {
            ($($f:ident),*) => {$(if self.$f.is_some() { v.push(stringify!($f)); })*};
        }
        check!(tau_ns, epsilon_over_pi, k, t_p_ns, mode, omega_y_mhz, phi_over_pi, times_us, t_max_us, points);
        v
    }

    /// Fills the defaults of the selected variant.
    fn normalized(&self) -> Result<Self> {
        let kind = self
            .kind
            .ok_or_else(|| Error::config("sequence.kind", "missing sequence kind"))?;
        for key in self.present_keys() {
            if !kind.keys().contains(&key) {
                return Err(Error::config(
                    format!("sequence.{key}"),
                    format!("not used by {} sequences", kind.name()),
                ));
            }
        }
        let mut s = self.clone();
        let grid_defaults = |s: &mut Self| {
            if s.times_us.is_none() {
                s.t_max_us.get_or_insert(4.0);
                s.points.get_or_insert(41);
            }
        };
        match kind {
            SequenceKind::Ramsey | SequenceKind::SpinEcho => grid_defaults(&mut s),
            SequenceKind::SpinLock => {
                s.omega_y_mhz.get_or_insert(10.0);
                grid_defaults(&mut s);
            }
            SequenceKind::EpsCpmg => {
                s.tau_ns.get_or_insert(300.0);
                s.epsilon_over_pi.get_or_insert(0.0);
                s.k.get_or_insert(8);
                s.t_p_ns.get_or_insert(0.0);
                s.mode.get_or_insert(PulseTiming::Ideal);
            }
            SequenceKind::WahuhaEcho => {
                s.tau_ns.get_or_insert(22.0);
                s.k.get_or_insert(100);
                s.t_p_ns.get_or_insert(0.0);
                s.mode.get_or_insert(PulseTiming::Ideal);
            }
            SequenceKind::DtcFloquet => {
                s.tau_ns.get_or_insert(400.0);
                s.epsilon_over_pi.get_or_insert(0.03);
                s.phi_over_pi.get_or_insert(0.5);
                s.omega_y_mhz.get_or_insert(10.0);
            }
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisBlock {
    pub fit_model: DecayModel,
    pub spectrum: SpectrumMode,
    pub threshold: f64,
    pub k_cycles: usize,
    pub tau_grid_ns: Vec<f64>,
    pub eps_grid_over_pi: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    /// Early spin-echo coefficient `s` in `1 − (s/2)τ²`, in μs⁻².
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_slope_per_us2: Option<f64>,
    pub ppm_range: [f64; 2],
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        Self {
            fit_model: DecayModel::Exponential,
            spectrum: SpectrumMode::Signed,
            threshold: 0.4,
            k_cycles: 60,
            tau_grid_ns: (0..10).map(|i| 100.0 * i as f64).collect(),
            eps_grid_over_pi: (0..10).map(|j| 0.02 * j as f64).collect(),
            sweep: None,
            target_slope_per_us2: None,
            ppm_range: [10.0, 100.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// Named starting points; a config file is layered on top.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "small-j",
        "[ensemble]\nppm = 25.0\nw_mhz = 0.65\nn_spins = 9\n\n[sequence]\nkind = \"spin_echo\"\nt_max_us = 6.0\npoints = 61\n",
    ),
    (
        "large-j",
        "[ensemble]\nppm = 46.0\nw_mhz = 0.65\nn_spins = 9\n\n[sequence]\nkind = \"spin_echo\"\nt_max_us = 4.0\npoints = 41\n",
    ),
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn preset_table(name: &str) -> Result<toml::Table> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        Error::config("preset", format!("unknown preset `{name}` (available: {})", preset_names().join(", ")))
    })?;
    text.parse::<toml::Table>().map_err(|e| Error::config("preset", e.to_string()))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn toml_error(e: toml::de::Error, text: &str) -> Error {
    let msg = e.message().to_string();
    let key = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.starts_with("unknown field") || msg.starts_with("missing field"))
        .map(str::to_string);
    let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
    let key = key.unwrap_or_else(|| match line {
        Some(l) => format!("line {l}"),
        None => "document".into(),
    });
    Error::config(key, msg.trim().to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| toml_error(e, text))
    }

    /// Config from an optional preset overlaid with an optional file.
    pub fn load(path: Option<&Path>, preset: Option<&str>) -> Result<Self> {
        let mut table = match preset {
            Some(p) => preset_table(p)?,
            None => toml::Table::new(),
        };
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config("--config", format!("cannot read {}: {e}", path.display())))?;
            let over: toml::Table = text.parse().map_err(|e| toml_error(e, &text))?;
            merge(&mut table, over);
        }
        let merged = toml::to_string(&table).map_err(|e| Error::config("document", e.to_string()))?;
        let cfg = Self::from_toml_str(&merged).map_err(|e| match (e, path) {
            (Error::Config { key, message }, Some(p)) => Error::config(key, format!("{message} ({})", p.display())),
            (e, _) => e,
        })?;
        cfg.normalized()
    }

    /// All defaults filled in; validated.
    pub fn normalized(&self) -> Result<Self> {
        let mut c = self.clone();
        let seq = c
            .sequence
            .as_ref()
            .ok_or_else(|| Error::config("sequence", "a [sequence] block is required"))?;
        c.sequence = Some(seq.normalized()?);
        c.resolve()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("document", e.to_string()))
    }

    /// SHA-256 of the normalized document, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let text = self.normalized()?.to_toml_string()?;
        Ok(Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect())
    }

    /// Converts to internal units and validates every block.
    pub fn resolve(&self) -> Result<ResolvedRun> {
        let e = &self.ensemble;
        let ensemble = EnsembleSpec {
            n_realizations: e.n_realizations,
            master_seed: e.master_seed,
            n_spins: e.n_spins,
            ppm: e.ppm,
            w: mhz(e.w_mhz),
            eta_pol: e.eta_pol,
            pulse_mode: e.pulse_mode,
            t_p: ns(e.t_p_ns),
            truncation: e.truncation,
            ..EnsembleSpec::default()
        };
        check("ensemble.n_realizations", e.n_realizations >= 1, "must be at least 1")?;
        check("ensemble.n_spins", (2..=crate::hamiltonian::DEFAULT_SPIN_CAP).contains(&e.n_spins), "must lie in 2..=14")?;
        check("ensemble.ppm", e.ppm > 0.0 && e.ppm.is_finite(), "must be positive")?;
        check("ensemble.w_mhz", e.w_mhz >= 0.0 && e.w_mhz.is_finite(), "must be non-negative")?;
        check("ensemble.eta_pol", (0.5..=1.0).contains(&e.eta_pol), "must lie in [0.5, 1]")?;
        check(
            "ensemble.t_p_ns",
            e.t_p_ns >= 0.0 && (e.pulse_mode == PulseTiming::Ideal || e.t_p_ns > 0.0),
            "must be positive for finite pulses",
        )?;
        check("ensemble.truncation", e.truncation > 0.0, "must be positive")?;
        ensemble.validate().map_err(|err| Error::config("ensemble", err.to_string()))?;

        let block = self
            .sequence
            .as_ref()
            .ok_or_else(|| Error::config("sequence", "a [sequence] block is required"))?
            .normalized()?;
        let kind = block.kind.expect("normalized kind");
        let (mut sequence, time_grid) = resolve_sequence(kind, &block)?;
        if let SequenceSpec::DtcFloquet { k, .. } = &mut sequence {
            *k = self.analysis.k_cycles;
        }
        sequence
            .validate()
            .map_err(|err| Error::config("sequence", err.to_string()))?;

        let a = &self.analysis;
        check("analysis.threshold", a.threshold > 0.0, "must be positive")?;
        check("analysis.k_cycles", a.k_cycles >= 8 && a.k_cycles % 2 == 0, "must be even and at least 8")?;
        check("analysis.tau_grid_ns", !a.tau_grid_ns.is_empty() && a.tau_grid_ns.iter().all(|t| *t >= 0.0), "must be non-empty and non-negative")?;
        check("analysis.eps_grid_over_pi", !a.eps_grid_over_pi.is_empty() && a.eps_grid_over_pi.iter().all(|e| e.abs() <= 1.0), "must be non-empty within [-1, 1]")?;
        check("analysis.ppm_range", a.ppm_range[0] > 0.0 && a.ppm_range[1] > a.ppm_range[0], "must be an increasing positive pair")?;
        if let Some(t) = a.target_slope_per_us2 {
            check("analysis.target_slope_per_us2", t > 0.0, "must be positive")?;
        }
        if let Some(sw) = &a.sweep {
            SweepParam::parse(&sw.param)?;
            check("analysis.sweep.values", !sw.values.is_empty(), "must be non-empty")?;
        }
        let (phi, omega_y) = match sequence {
            SequenceSpec::DtcFloquet { phi, omega_y, .. } => (phi, omega_y),
            _ => (PI / 2.0, mhz(10.0)),
        };
        let protocol = DtcProtocol {
            omega_y,
            k_cycles: a.k_cycles,
            phi,
            threshold: a.threshold,
            mode: a.spectrum,
        };
        Ok(ResolvedRun {
            ensemble,
            sequence,
            time_grid,
            protocol,
            tau_grid: a.tau_grid_ns.iter().map(|t| ns(*t)).collect(),
            eps_grid: a.eps_grid_over_pi.iter().map(|e| e * PI).collect(),
            fit_model: a.fit_model,
            out_dir: self.output.dir.clone(),
        })
    }
}

fn check(key: &str, ok: bool, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(key, message))
    }
}

fn resolve_sequence(kind: SequenceKind, b: &SequenceBlock) -> Result<(SequenceSpec, Vec<f64>)> {
    let uniform = |b: &SequenceBlock| -> Result<Vec<f64>> {
        if let Some(t) = &b.times_us {
            check("sequence.times_us", !t.is_empty(), "must be non-empty")?;
            check(
                "sequence.times_us",
                t.iter().all(|v| *v >= 0.0) && t.windows(2).all(|w| w[1] > w[0]),
                "must be non-negative and strictly increasing",
            )?;
            return Ok(t.clone());
        }
        let t_max = b.t_max_us.expect("default");
        let n = b.points.expect("default");
        check("sequence.t_max_us", t_max > 0.0, "must be positive")?;
        check("sequence.points", n >= 2, "must be at least 2")?;
        Ok((0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect())
    };
    let blocks = |period: f64, k: usize, b: &SequenceBlock| -> Result<Vec<f64>> {
        match &b.times_us {
            Some(t) => {
                crate::sequences::block_counts(t, period).map_err(|e| Error::config("sequence.times_us", e.to_string()))?;
                Ok(t.clone())
            }
            None => Ok((1..=k).map(|j| j as f64 * period).collect()),
        }
    };
    Ok(match kind {
        SequenceKind::Ramsey => (SequenceSpec::Ramsey { tau: 0.0 }, uniform(b)?),
        SequenceKind::SpinEcho => (SequenceSpec::SpinEcho { tau: 0.0 }, uniform(b)?),
        SequenceKind::SpinLock => {
            let grid = uniform(b)?;
            (
                SequenceSpec::SpinLock {
                    omega_y: mhz(b.omega_y_mhz.expect("default")),
                    t: *grid.last().expect("non-empty grid"),
                },
                grid,
            )
        }
        SequenceKind::EpsCpmg => {
            let tau = ns(b.tau_ns.expect("default"));
            let k = b.k.expect("default");
            check("sequence.k", k >= 1, "must be at least 1")?;
            check("sequence.tau_ns", tau > 0.0, "must be positive")?;
            let spec = SequenceSpec::EpsCpmg {
                tau,
                epsilon: b.epsilon_over_pi.expect("default") * PI,
                k,
                t_p: ns(b.t_p_ns.expect("default")),
                mode: b.mode.expect("default"),
            };
            (spec, blocks(tau, k, b)?)
        }
        SequenceKind::WahuhaEcho => {
            let tau = ns(b.tau_ns.expect("default"));
            let k = b.k.expect("default");
            check("sequence.k", k >= 1, "must be at least 1")?;
            check("sequence.tau_ns", tau > 0.0, "must be positive")?;
            let spec = SequenceSpec::WahuhaEcho {
                tau,
                k,
                t_p: ns(b.t_p_ns.expect("default")),
                mode: b.mode.expect("default"),
            };
            (spec, blocks(6.0 * tau, k, b)?)
        }
        SequenceKind::DtcFloquet => (
            SequenceSpec::DtcFloquet {
                tau: ns(b.tau_ns.expect("default")),
                epsilon: b.epsilon_over_pi.expect("default") * PI,
                k: 60,
                phi: b.phi_over_pi.expect("default") * PI,
                omega_y: mhz(b.omega_y_mhz.expect("default")),
            },
            Vec::new(),
        ),
    })
}

/// Everything a command needs, in internal units.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub ensemble: EnsembleSpec,
    pub sequence: SequenceSpec,
    /// Readout times (μs); empty for DTC runs.
    pub time_grid: Vec<f64>,
    pub protocol: DtcProtocol,
    pub tau_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    pub fit_model: DecayModel,
    pub out_dir: String,
}

/// Parameters a sweep can scan. Values are in config units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// `epsilon_over_pi`
    Epsilon,
    /// `tau_ns`
    Tau,
    /// `phi_over_pi`
    Phi,
    EtaPol,
    Ppm,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "epsilon" => SweepParam::Epsilon,
            "tau" => SweepParam::Tau,
            "phi" => SweepParam::Phi,
            "eta_pol" => SweepParam::EtaPol,
            "ppm" => SweepParam::Ppm,
            other => {
                return Err(Error::config(
                    "analysis.sweep.param",
                    format!("unknown sweep parameter `{other}` (epsilon, tau, phi, eta_pol, ppm)"),
                ))
            }
        })
    }

    /// Column header for the sweep table.
    pub fn column(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "epsilon_over_pi",
            SweepParam::Tau => "tau_ns",
            SweepParam::Phi => "phi_over_pi",
            SweepParam::EtaPol => "eta_pol",
            SweepParam::Ppm => "ppm",
        }
    }

    /// Config with the swept value applied, or a config error when the
    /// parameter does not apply to the configured sequence.
    pub fn apply(self, cfg: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut c = cfg.normalized()?;
        let seq = c.sequence.as_mut().expect("normalized sequence");
        let kind = seq.kind.expect("normalized kind");
        let inapplicable = || {
            Error::config(
                "analysis.sweep.param",
                format!("`{}` does not apply to {} sequences", self.column(), kind.name()),
            )
        };
        match self {
            SweepParam::Epsilon => {
                if seq.epsilon_over_pi.is_none() {
                    return Err(inapplicable());
                }
                seq.epsilon_over_pi = Some(value);
            }
            SweepParam::Tau => {
                if seq.tau_ns.is_none() {
                    return Err(inapplicable());
                }
                seq.tau_ns = Some(value);
                // block readouts follow the new block length
                if matches!(kind, SequenceKind::EpsCpmg | SequenceKind::WahuhaEcho) {
                    seq.times_us = None;
                }
            }
            SweepParam::Phi => {
                if seq.phi_over_pi.is_none() {
                    return Err(inapplicable());
                }
                seq.phi_over_pi = Some(value);
            }
            SweepParam::EtaPol => c.ensemble.eta_pol = value,
            SweepParam::Ppm => c.ensemble.ppm = value,
        }
        c.normalized()
    }
}

/// Parses a config file (no preset).
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(Some(path), None)
}
