//! Seeded Monte Carlo ensembles of disordered spin clusters.
//!
//! Realization `r` draws positions, detunings and the initial polarization
//! pattern from three streams derived from `(master_seed, r)`, so results do
//! not depend on how realizations are scheduled. Per-realization traces are
//! collected by index and reduced in order.

use std::f64::consts::FRAC_PI_2;

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{prepare_pattern, sample_polarization, StateVector};
use crate::hamiltonian::{
    build_xy_hamiltonian, sample_disorder_truncated, CouplingMatrix, DisorderField, PhysicalConstants,
    DEFAULT_TRUNCATION,
};
use crate::lattice::{mean_j_from_ppm, CrystalLattice, SiteSampler, SpinConfiguration};
use crate::operators::SpinOperator;
use crate::rng::RealizationStreams;
use crate::sequences::{PulseTiming, SequenceRunner, SequenceSpec};
use crate::units::mhz;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_realizations: usize,
    pub master_seed: u64,
    pub n_spins: usize,
    /// Yb concentration in ppm of Y sites.
    pub ppm: f64,
    /// Lorentzian FWHM of the detunings (rad·μs⁻¹).
    pub w: f64,
    pub eta_pol: f64,
    /// Overrides the pulse mode of pulsed block sequences when finite.
    pub pulse_mode: PulseTiming,
    /// π/2-pulse duration (μs).
    pub t_p: f64,
    pub lattice: CrystalLattice,
    pub constants: PhysicalConstants,
    /// Detunings beyond `truncation·W` are redrawn.
    pub truncation: f64,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_realizations: 500,
            master_seed: 0,
            n_spins: 9,
            ppm: 46.0,
            w: mhz(0.65),
            eta_pol: 1.0,
            pulse_mode: PulseTiming::Ideal,
            t_p: 0.0,
            lattice: CrystalLattice::yvo4(),
            constants: PhysicalConstants::default(),
            truncation: DEFAULT_TRUNCATION,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::invalid("n_realizations must be at least 1"));
        }
        if self.n_spins < 2 {
            return Err(Error::invalid("ensembles need at least 2 spins"));
        }
        if !(self.ppm > 0.0) || !self.ppm.is_finite() {
            return Err(Error::invalid(format!("concentration must be positive, got {}", self.ppm)));
        }
        if !(self.w >= 0.0) || !self.w.is_finite() {
            return Err(Error::invalid(format!("W must be non-negative, got {}", self.w)));
        }
        if !(0.5..=1.0).contains(&self.eta_pol) {
            return Err(Error::invalid(format!("eta_pol must lie in [0.5, 1], got {}", self.eta_pol)));
        }
        if self.pulse_mode == PulseTiming::Finite && !(self.t_p > 0.0) {
            return Err(Error::invalid("finite pulses need t_p > 0"));
        }
        if !(self.truncation > 0.0) {
            return Err(Error::invalid("truncation must be positive"));
        }
        self.lattice.validate()?;
        self.constants.validate()
    }

    /// Mean coupling at this concentration.
    pub fn mean_j(&self) -> Result<f64> {
        mean_j_from_ppm(self.ppm)
    }

    /// The sequence as it will actually run: finite pulses from the
    /// ensemble replace ideal ones in pulsed block sequences.
    pub fn effective_sequence(&self, sequence: &SequenceSpec) -> SequenceSpec {
        let mut s = sequence.clone();
        if self.pulse_mode == PulseTiming::Finite {
            match &mut s {
                SequenceSpec::EpsCpmg { mode, t_p, .. } | SequenceSpec::WahuhaEcho { mode, t_p, .. } => {
                    *mode = PulseTiming::Finite;
                    *t_p = self.t_p;
                }
                _ => {}
            }
        }
        s
    }
}

/// Everything random about one realization.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub index: usize,
    pub configuration: SpinConfiguration,
    pub couplings: CouplingMatrix,
    pub disorder: DisorderField,
    /// Pumped spins; the center entry is overridden by marginalisation.
    pub pattern: Vec<bool>,
}

impl Realization {
    pub fn center(&self) -> usize {
        self.configuration.center_index
    }

    pub fn hamiltonian(&self) -> Result<SpinOperator> {
        Ok(build_xy_hamiltonian(&self.couplings, &self.disorder)?.h_total)
    }

    /// Initial patterns for the two center states and their weights
    /// `(η, 1−η)`; zero-weight branches are dropped.
    pub fn center_branches(&self, eta_pol: f64) -> Vec<(Vec<bool>, f64)> {
        let c = self.center();
        let mut out = Vec::with_capacity(2);
        for (pumped, w) in [(true, eta_pol), (false, 1.0 - eta_pol)] {
            if w > 0.0 {
                let mut p = self.pattern.clone();
                p[c] = pumped;
                out.push((p, w));
            }
        }
        out
    }
}

/// Draws realizations for an ensemble.
pub struct RealizationSource {
    spec: EnsembleSpec,
    sampler: SiteSampler,
}

impl RealizationSource {
    pub fn new(spec: &EnsembleSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            sampler: SiteSampler::new(&spec.lattice, spec.ppm, spec.n_spins)?,
            spec: spec.clone(),
        })
    }

    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn realization(&self, index: usize) -> Result<Realization> {
        let mut streams = RealizationStreams::new(self.spec.master_seed, index as u64);
        let configuration = self.sampler.sample(&mut streams.positions);
        let couplings = CouplingMatrix::from_configuration(&configuration, &self.spec.constants)?;
        let disorder =
            sample_disorder_truncated(&mut streams.disorder, self.spec.w, self.spec.n_spins, self.spec.truncation)?;
        let pattern = sample_polarization(&mut streams.polarization, self.spec.n_spins, self.spec.eta_pol)?;
        Ok(Realization {
            index,
            configuration,
            couplings,
            disorder,
            pattern,
        })
    }
}

/// Ensemble mean and spread per time point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStats {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation over `√n`; absent for a single realization.
    pub stderr: Option<Vec<f64>>,
    pub n_realizations: usize,
}

impl TraceStats {
    /// Mean and standard error of per-realization rows, reduced in order.
    pub fn from_samples(times: Vec<f64>, samples: &[Vec<f64>]) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::InsufficientData("no realizations".into()));
        }
        let m = times.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != m) {
            return Err(Error::Shape {
                expected: m,
                found: bad.len(),
            });
        }
        let mut mean = vec![0.0; m];
        for s in samples {
            for (acc, v) in mean.iter_mut().zip(s) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= n as f64);
        let stderr = (n > 1).then(|| {
            let mut var = vec![0.0; m];
            for s in samples {
                for ((acc, v), mu) in var.iter_mut().zip(s).zip(&mean) {
                    *acc += (v - mu) * (v - mu);
                }
            }
            var.iter().map(|v| (v / (n - 1) as f64).sqrt() / (n as f64).sqrt()).collect()
        });
        Ok(Self {
            times,
            mean,
            stderr,
            n_realizations: n,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Points with `t ≤ t_max`.
    pub fn window(&self, t_max: f64) -> (Vec<f64>, Vec<f64>) {
        self.times
            .iter()
            .zip(&self.mean)
            .filter(|(t, _)| **t <= t_max)
            .map(|(t, v)| (*t, *v))
            .unzip()
    }

    pub fn stderr_at(&self, i: usize) -> Option<f64> {
        self.stderr.as_ref().map(|s| s[i])
    }
}

/// Runs `f` inside a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Applies `f` to every realization in parallel and returns results in
/// realization order. The first failure (by index) is reported with its
/// realization index.
pub fn map_realizations<T: Send>(
    spec: &EnsembleSpec,
    f: impl Fn(&Realization) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let source = RealizationSource::new(spec)?;
    let results: Vec<Result<T>> = (0..spec.n_realizations)
        .into_par_iter()
        .map(|r| source.realization(r).and_then(|real| f(&real)))
        .collect();
    results
        .into_iter()
        .enumerate()
        .map(|(index, r)| {
            r.map_err(|e| Error::Realization {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Center coherence of one realization on the time grid, marginalised over
/// the center spin's initial polarization.
pub fn realization_trace(
    real: &Realization,
    spec: &EnsembleSpec,
    sequence: &SequenceSpec,
    time_grid: &[f64],
) -> Result<Vec<f64>> {
    let h = real.hamiltonian()?;
    let mut runner = SequenceRunner::new(&h, real.center())?;
    let branches = real.center_branches(spec.eta_pol);
    let states: Vec<StateVector> = branches
        .iter()
        .map(|(p, _)| prepare_pattern(p, FRAC_PI_2))
        .collect::<Result<_>>()?;
    let rows = runner.trace(sequence, &states, time_grid)?;
    let mut out = vec![0.0; time_grid.len()];
    for ((_, w), row) in branches.iter().zip(&rows) {
        for (acc, v) in out.iter_mut().zip(row) {
            *acc += w * v;
        }
    }
    Ok(out)
}

/// Ensemble-averaged center coherence of `sequence` over `time_grid`.
pub fn run_ensemble(spec: &EnsembleSpec, sequence: &SequenceSpec, time_grid: &[f64]) -> Result<TraceStats> {
    let sequence = spec.effective_sequence(sequence);
    sequence.validate()?;
    if matches!(sequence, SequenceSpec::DtcFloquet { .. }) {
        return Err(Error::Unsupported("DTC ensembles are built by the dtc module".into()));
    }
    let rows = map_realizations(spec, |real| realization_trace(real, spec, &sequence, time_grid))?;
    TraceStats::from_samples(time_grid.to_vec(), &rows)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    #[default]
    Exponential,
    Stretched,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: DecayModel,
    /// Time at which the fit falls to `amplitude/e`.
    pub t_1e: f64,
    pub beta: f64,
    pub amplitude: f64,
    /// Root-mean-square residual.
    pub residual: f64,
}

const BETA_MAX: f64 = 3.0;

/// Least squares of `A·exp(−(t/T)^β)` (Levenberg–Marquardt on `ln T`).
pub fn fit_decay(times: &[f64], values: &[f64], model: DecayModel) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(Error::Shape {
            expected: times.len(),
            found: values.len(),
        });
    }
    if times.len() < 4 {
        return Err(Error::InsufficientData("decay fits need at least 4 points".into()));
    }
    if !(values[0] > 0.0) {
        return Err(Error::Fit("decay fit needs a positive initial value".into()));
    }
    let a0 = values.iter().copied().fold(f64::MIN, f64::max);
    // log-linear start from the points above a tenth of the start value
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0.0 && **v > 0.1 * a0 && **v < a0)
        .map(|(t, v)| (*t, (a0 / v).ln()))
        .collect();
    if pts.is_empty() {
        return Err(Error::Fit("data never fall below their maximum".into()));
    }
    let rate = pts.iter().map(|(t, y)| t * y).sum::<f64>() / pts.iter().map(|(t, _)| t * t).sum::<f64>();
    if !(rate > 0.0) {
        return Err(Error::Fit("data do not decay".into()));
    }
    let free_beta = model == DecayModel::Stretched;
    let mut p = vec![a0, (1.0 / rate).ln(), 1.0];
    let model_at = |p: &[f64], t: f64| p[0] * (-(t / p[1].exp()).powf(p[2])).exp();
    let cost = |p: &[f64]| -> f64 { times.iter().zip(values).map(|(t, v)| (model_at(p, *t) - v).powi(2)).sum() };
    let n_par = if free_beta { 3 } else { 2 };
    let mut lambda: f64 = 1e-3;
    let mut c = cost(&p);
    for _ in 0..200 {
        let jac = Mat::from_fn(times.len(), n_par, |i, k| {
            let t = times[i];
            let x = (t / p[1].exp()).powf(p[2]);
            let e = (-x).exp();
            match k {
                0 => e,
                1 => p[0] * e * x * p[2],
                _ => {
                    if x > 0.0 {
                        -p[0] * e * x * x.ln() / p[2]
                    } else {
                        0.0
                    }
                }
            }
        });
        let r: Vec<f64> = times.iter().zip(values).map(|(t, v)| v - model_at(&p, *t)).collect();
        // damped normal equations as an augmented least-squares problem
        let m = times.len();
        let mut aug = Mat::<f64>::zeros(m + n_par, n_par);
        let mut rhs = r.clone();
        for k in 0..n_par {
            let col_norm = jac.col(k).norm_l2().max(1e-300);
            for i in 0..m {
                aug[(i, k)] = jac[(i, k)];
            }
            aug[(m + k, k)] = lambda.sqrt() * col_norm;
            rhs.push(0.0);
        }
        let Some(step) = crate::linalg::lstsq(aug.as_ref(), &rhs) else {
            break;
        };
        let mut trial = p.clone();
        for k in 0..n_par {
            trial[k] += step[k];
        }
        trial[2] = trial[2].clamp(1e-3, BETA_MAX);
        let ct = cost(&trial);
        if ct < c {
            let done = (c - ct) <= 1e-14 * c.max(1e-300);
            p = trial;
            c = ct;
            lambda = (lambda * 0.3).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    let t_1e = p[1].exp();
    if !(t_1e.is_finite() && t_1e > 0.0 && p[0] > 0.0) {
        return Err(Error::Fit(format!("fit diverged (A = {}, T = {t_1e})", p[0])));
    }
    if t_1e > 1e3 * times.last().copied().unwrap_or(1.0) {
        return Err(Error::Fit(format!("fitted 1/e time {t_1e} μs is far beyond the data")));
    }
    Ok(FitResult {
        model,
        t_1e,
        beta: p[2],
        amplitude: p[0],
        residual: (c / times.len() as f64).sqrt(),
    })
}

/// Upper end of the early-slope window: `min(1 μs, 0.3/J)`.
pub fn early_window(mean_j: f64) -> f64 {
    (0.3 / mean_j).min(1.0)
}

/// Quadratic early-decay coefficient `s` of an ensemble trace.
pub fn trace_early_slope(trace: &TraceStats, mean_j: f64) -> Result<f64> {
    let (t, v) = trace.window(early_window(mean_j));
    crate::oracles::early_slope(&t, &v)
}

/// Short-time spin-echo grid used for slope estimates.
pub fn early_grid(mean_j: f64, points: usize) -> Vec<f64> {
    let t_max = early_window(mean_j);
    (0..=points).map(|k| t_max * k as f64 / points as f64).collect()
}

/// Early spin-echo slope of an ensemble at its own concentration.
pub fn ensemble_early_slope(spec: &EnsembleSpec) -> Result<f64> {
    let j = spec.mean_j()?;
    let stats = run_ensemble(spec, &SequenceSpec::SpinEcho { tau: 0.0 }, &early_grid(j, 8))?;
    trace_early_slope(&stats, j)
}

/// Concentration whose early spin-echo slope matches `target` within 3%.
///
/// Bisection in `ln n_s`; every probe reuses the master seed of `base`.
pub fn calibrate_concentration(target: f64, range: (f64, f64), base: &EnsembleSpec) -> Result<f64> {
    if !(target > 0.0) {
        return Err(Error::invalid("target slope must be positive"));
    }
    let (mut lo, mut hi) = range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid("search range must be an increasing positive interval"));
    }
    let slope_at = |ppm: f64| -> Result<f64> {
        let mut s = base.clone();
        s.ppm = ppm;
        ensemble_early_slope(&s)
    };
    let (s_lo, s_hi) = (slope_at(lo)?, slope_at(hi)?);
    for (ppm, s) in [(lo, s_lo), (hi, s_hi)] {
        if (s / target - 1.0).abs() < 0.03 {
            return Ok(ppm);
        }
    }
    if !(s_lo < target && target < s_hi) {
        return Err(Error::Calibration(format!(
            "target slope {target} lies outside [{s_lo}, {s_hi}] over {lo}–{hi} ppm"
        )));
    }
    for _ in 0..40 {
        let mid = (lo * hi).sqrt();
        let s = slope_at(mid)?;
        if (s / target - 1.0).abs() < 0.03 {
            return Ok(mid);
        }
        if s < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Calibration("bisection did not reach the 3% tolerance".into()))
}

/// Divides values and errors by `2η − 1`.
pub fn rescale_by_polarization(trace: &TraceStats, eta_pol: f64) -> Result<TraceStats> {
    if !(eta_pol > 0.5 && eta_pol <= 1.0) {
        return Err(Error::invalid(format!("eta_pol must lie in (0.5, 1], got {eta_pol}")));
    }
    let f = 1.0 / (2.0 * eta_pol - 1.0);
    Ok(TraceStats {
        times: trace.times.clone(),
        mean: trace.mean.iter().map(|v| v * f).collect(),
        stderr: trace.stderr.as_ref().map(|s| s.iter().map(|v| v * f).collect()),
        n_realizations: trace.n_realizations,
    })
}
