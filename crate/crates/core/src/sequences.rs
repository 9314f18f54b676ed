//! Pulse sequences and their execution on prepared states.
//!
//! Prepared states already carry the initial rotation (see
//! [`crate::dynamics::prepare_initial`]); runners start with the first free
//! evolution. Coherence is the signed readout `2⟨S_y^center⟩`.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    apply_ideal_pulse_batch, batch_spin_expectation, single_spin_rotation, PulseMode, PulseOp, Propagator,
    StateVector,
};
use crate::operators::{Axis, SpinOperator};
use crate::{Error, Result, C64};

pub const X: [f64; 3] = [1.0, 0.0, 0.0];
pub const Y: [f64; 3] = [0.0, 1.0, 0.0];
pub const Z: [f64; 3] = [0.0, 0.0, 1.0];

fn neg(v: [f64; 3]) -> [f64; 3] {
    [-v[0], -v[1], -v[2]]
}

/// How sequence pulses are realised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseTiming {
    #[default]
    Ideal,
    Finite,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SequenceSpec {
    Ramsey {
        tau: f64,
    },
    SpinEcho {
        tau: f64,
    },
    /// `k` blocks of `free(τ/2) → (π+ε)_y → free(τ/2)`.
    EpsCpmg {
        tau: f64,
        epsilon: f64,
        k: usize,
        /// π/2-pulse duration in finite mode.
        t_p: f64,
        mode: PulseTiming,
    },
    /// `k` blocks of the 6τ WAHUHA-echo cycle.
    WahuhaEcho {
        tau: f64,
        k: usize,
        t_p: f64,
        mode: PulseTiming,
    },
    SpinLock {
        omega_y: f64,
        t: f64,
    },
    /// `k` cycles of `lock_y(τ) → (π+ε)_x`, after an initial rotation `phi`.
    DtcFloquet {
        tau: f64,
        epsilon: f64,
        k: usize,
        phi: f64,
        omega_y: f64,
    },
}

/// WAHUHA-echo pulses: axis and angle of the six pulses of one 6τ block.
///
/// The toggling-frame images of `S_z` over the seven segments are
/// `z, y, x, −x, −y, −z` (first and last segments τ/2, the others τ), which
/// cancels on-site terms and averages the XY coupling to (2/3)·Heisenberg;
/// the net rotation per block is the identity.
pub fn wahuha_pulses() -> [([f64; 3], f64); 6] {
    [
        (X, FRAC_PI_2),
        (neg(Y), FRAC_PI_2),
        (X, PI),
        (neg(Y), FRAC_PI_2),
        (neg(X), FRAC_PI_2),
        (neg(X), PI),
    ]
}

impl SequenceSpec {
    pub fn name(&self) -> &'static str {
        match self {
            SequenceSpec::Ramsey { .. } => "ramsey",
            SequenceSpec::SpinEcho { .. } => "spin_echo",
            SequenceSpec::EpsCpmg { .. } => "eps_cpmg",
            SequenceSpec::WahuhaEcho { .. } => "wahuha_echo",
            SequenceSpec::SpinLock { .. } => "spin_lock",
            SequenceSpec::DtcFloquet { .. } => "dtc_floquet",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| -> Result<()> {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Sequence(format!("{name} must be a finite non-negative time, got {v}")));
            }
            Ok(())
        };
        let eps_ok = |e: f64| -> Result<()> {
            if !(e.abs() <= PI) {
                return Err(Error::Sequence(format!("|epsilon| must not exceed π, got {e}")));
            }
            Ok(())
        };
        match *self {
            SequenceSpec::Ramsey { tau } | SequenceSpec::SpinEcho { tau } => nonneg("tau", tau),
            SequenceSpec::EpsCpmg {
                tau,
                epsilon,
                k,
                t_p,
                mode,
            } => {
                nonneg("tau", tau)?;
                nonneg("t_p", t_p)?;
                eps_ok(epsilon)?;
                if k == 0 {
                    return Err(Error::Sequence("k must be at least 1".into()));
                }
                if mode == PulseTiming::Finite {
                    let d = (PI + epsilon).abs() / rabi_from_tp(t_p)?;
                    if d > tau {
                        return Err(Error::Sequence(format!(
                            "pulse of {d} μs does not fit a {tau} μs period"
                        )));
                    }
                }
                Ok(())
            }
            SequenceSpec::WahuhaEcho { tau, k, t_p, mode } => {
                nonneg("tau", tau)?;
                nonneg("t_p", t_p)?;
                if k == 0 {
                    return Err(Error::Sequence("k must be at least 1".into()));
                }
                if mode == PulseTiming::Finite {
                    if !(tau > t_p) {
                        return Err(Error::Sequence(format!("WAHUHA needs tau > t_p (tau {tau}, t_p {t_p})")));
                    }
                    // every gap between neighbouring pulse edges must be non-negative
                    wahuha_steps(tau, Some(rabi_from_tp(t_p)?))?;
                }
                Ok(())
            }
            SequenceSpec::SpinLock { omega_y, t } => {
                nonneg("t", t)?;
                if !omega_y.is_finite() {
                    return Err(Error::Sequence("omega_y must be finite".into()));
                }
                Ok(())
            }
            SequenceSpec::DtcFloquet {
                tau,
                epsilon,
                k,
                phi,
                omega_y,
            } => {
                nonneg("tau", tau)?;
                eps_ok(epsilon)?;
                if k == 0 {
                    return Err(Error::Sequence("k must be at least 1".into()));
                }
                if !(0.0..=FRAC_PI_2 + 1e-12).contains(&phi) {
                    return Err(Error::Sequence(format!("phi must lie in [0, π/2], got {phi}")));
                }
                if !omega_y.is_finite() {
                    return Err(Error::Sequence("omega_y must be finite".into()));
                }
                Ok(())
            }
        }
    }

    /// Duration of one repeating block (the whole sequence for one-shot ones).
    pub fn block_duration(&self) -> f64 {
        match *self {
            SequenceSpec::Ramsey { tau } | SequenceSpec::SpinEcho { tau } => tau,
            SequenceSpec::EpsCpmg { tau, .. } => tau,
            SequenceSpec::WahuhaEcho { tau, .. } => 6.0 * tau,
            SequenceSpec::SpinLock { t, .. } => t,
            SequenceSpec::DtcFloquet { tau, .. } => tau,
        }
    }

    /// Readout times the sequence naturally produces.
    pub fn natural_times(&self) -> Vec<f64> {
        match *self {
            SequenceSpec::EpsCpmg { k, .. } | SequenceSpec::WahuhaEcho { k, .. } | SequenceSpec::DtcFloquet { k, .. } => {
                let p = self.block_duration();
                (1..=k).map(|j| j as f64 * p).collect()
            }
            _ => vec![self.block_duration()],
        }
    }

    /// Copy with the scanned time parameter set from `t`: τ for Ramsey and
    /// echo, `T` for spin-lock. Block sequences keep their τ.
    pub fn at_time(&self, t: f64) -> Self {
        let mut s = self.clone();
        match &mut s {
            SequenceSpec::Ramsey { tau } | SequenceSpec::SpinEcho { tau } => *tau = t,
            SequenceSpec::SpinLock { t: tt, .. } => *tt = t,
            _ => {}
        }
        s
    }
}

/// Rabi frequency of a π/2 pulse lasting `t_p`.
pub fn rabi_from_tp(t_p: f64) -> Result<f64> {
    if !(t_p > 0.0) {
        return Err(Error::Sequence("finite pulses need t_p > 0".into()));
    }
    Ok(FRAC_PI_2 / t_p)
}

/// One primitive of a pulse program.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    Free(f64),
    Pulse(PulseOp),
}

/// Centres pulses on the ideal instants: the free time around each pulse is
/// shortened by half its duration. `ideal` alternates free periods and
/// pulses; a negative gap is a timing error.
fn finite_timing(ideal: &[Step]) -> Result<Vec<Step>> {
    let mut out = Vec::with_capacity(ideal.len());
    for (i, step) in ideal.iter().enumerate() {
        match *step {
            Step::Free(t) => {
                let prev = if i > 0 {
                    if let Step::Pulse(p) = ideal[i - 1] { p.duration() } else { 0.0 }
                } else {
                    0.0
                };
                let next = match ideal.get(i + 1) {
                    Some(Step::Pulse(p)) => p.duration(),
                    _ => 0.0,
                };
                let gap = t - 0.5 * (prev + next);
                if gap < -1e-12 {
                    return Err(Error::Sequence(format!(
                        "pulses of {prev} μs and {next} μs overlap within a {t} μs window"
                    )));
                }
                out.push(Step::Free(gap.max(0.0)));
            }
            pulse => out.push(pulse),
        }
    }
    Ok(out)
}

fn mode_for(rabi: Option<f64>) -> PulseMode {
    match rabi {
        Some(rabi) => PulseMode::Finite { rabi },
        None => PulseMode::Ideal,
    }
}

/// One ε-CPMG block.
pub fn eps_cpmg_steps(tau: f64, epsilon: f64, rabi: Option<f64>) -> Result<Vec<Step>> {
    let pulse = PulseOp::new(Y, PI + epsilon, mode_for(rabi))?;
    let ideal = vec![Step::Free(0.5 * tau), Step::Pulse(pulse), Step::Free(0.5 * tau)];
    if rabi.is_some() {
        finite_timing(&ideal)
    } else {
        Ok(ideal)
    }
}

/// One WAHUHA-echo block: π/2-pulse centres are τ apart, the π pulses last
/// 2·t_p in finite mode.
pub fn wahuha_steps(tau: f64, rabi: Option<f64>) -> Result<Vec<Step>> {
    let mut ideal = vec![Step::Free(0.5 * tau)];
    for (i, (axis, angle)) in wahuha_pulses().into_iter().enumerate() {
        ideal.push(Step::Pulse(PulseOp::new(axis, angle, mode_for(rabi))?));
        ideal.push(Step::Free(if i == 5 { 0.5 * tau } else { tau }));
    }
    if rabi.is_some() {
        finite_timing(&ideal)
    } else {
        Ok(ideal)
    }
}

/// Steps of one block of a repeating sequence.
pub fn block_steps(spec: &SequenceSpec) -> Result<Vec<Step>> {
    spec.validate()?;
    match *spec {
        SequenceSpec::EpsCpmg {
            tau,
            epsilon,
            t_p,
            mode,
            ..
        } => eps_cpmg_steps(tau, epsilon, finite_rabi(mode, t_p)?),
        SequenceSpec::WahuhaEcho { tau, t_p, mode, .. } => wahuha_steps(tau, finite_rabi(mode, t_p)?),
        SequenceSpec::SpinEcho { tau } => Ok(vec![
            Step::Free(0.5 * tau),
            Step::Pulse(PulseOp::ideal(Y, PI)?),
            Step::Free(0.5 * tau),
        ]),
        SequenceSpec::Ramsey { tau } => Ok(vec![Step::Free(tau)]),
        _ => Err(Error::Unsupported(format!("{} has no discrete block", spec.name()))),
    }
}

fn finite_rabi(mode: PulseTiming, t_p: f64) -> Result<Option<f64>> {
    match mode {
        PulseTiming::Ideal => Ok(None),
        PulseTiming::Finite => Ok(Some(rabi_from_tp(t_p)?)),
    }
}

/// Stroboscopic coherence samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTrace {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl CoherenceTrace {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Shape {
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("trace times must be strictly increasing"));
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Runs sequences for one Hamiltonian, caching its propagators.
pub struct SequenceRunner {
    h: SpinOperator,
    center: usize,
    free: Propagator,
    driven: HashMap<[u64; 3], Propagator>,
    locked: HashMap<u64, Propagator>,
}

fn axis_key(axis: [f64; 3]) -> [u64; 3] {
    [axis[0].to_bits(), axis[1].to_bits(), axis[2].to_bits()]
}

impl SequenceRunner {
    pub fn new(h: &SpinOperator, center: usize) -> Result<Self> {
        if center >= h.n_sites() {
            return Err(Error::invalid("center index outside register"));
        }
        Ok(Self {
            h: h.clone(),
            center,
            free: Propagator::new(h)?,
            driven: HashMap::new(),
            locked: HashMap::new(),
        })
    }

    pub fn n_spins(&self) -> usize {
        self.h.n_sites()
    }

    pub fn hamiltonian(&self) -> &SpinOperator {
        &self.h
    }

    pub fn free_propagator(&self) -> &Propagator {
        &self.free
    }

    fn coherence(&self, batch: &Mat<C64>, col: usize) -> f64 {
        2.0 * batch_spin_expectation(batch.as_ref(), self.n_spins(), col, self.center)[1]
    }

    /// Executes `steps` on every column.
    pub fn execute(&mut self, batch: &mut Mat<C64>, steps: &[Step]) -> Result<()> {
        let k = batch.ncols();
        for step in steps {
            match *step {
                Step::Free(t) => {
                    if t > 0.0 {
                        self.free.evolve_batch(batch, &vec![t; k])?;
                    }
                }
                Step::Pulse(p) => match p.mode {
                    PulseMode::Ideal => apply_ideal_pulse_batch(batch, self.n_spins(), p.axis, p.angle)?,
                    PulseMode::Finite { .. } => {
                        let signed_axis = if p.angle < 0.0 { neg(p.axis) } else { p.axis };
                        let key = axis_key(signed_axis);
                        if !self.driven.contains_key(&key) {
                            let drive = p.drive(self.n_spins()).expect("finite pulse");
                            self.driven.insert(key, Propagator::new(&self.h.plus(&drive))?);
                        }
                        let d = p.duration();
                        if d > 0.0 {
                            self.driven[&key].evolve_batch(batch, &vec![d; k])?;
                        }
                    }
                },
            }
        }
        Ok(())
    }

    /// Ramsey coherence at each `tau` for each initial state: `[state][tau]`.
    pub fn ramsey(&self, states: &[StateVector], taus: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(taus)?;
        let (mut batch, dts) = replicate(states, taus)?;
        self.free.evolve_batch(&mut batch, &dts)?;
        Ok(self.collect(&batch, states.len(), taus.len()))
    }

    /// Spin echo `free(τ/2) → π_y → free(τ/2)`: `[state][tau]`.
    pub fn spin_echo(&self, states: &[StateVector], taus: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(taus)?;
        let (mut batch, dts) = replicate(states, taus)?;
        let half: Vec<f64> = dts.iter().map(|t| 0.5 * t).collect();
        self.free.evolve_batch(&mut batch, &half)?;
        apply_ideal_pulse_batch(&mut batch, self.n_spins(), Y, PI)?;
        self.free.evolve_batch(&mut batch, &half)?;
        Ok(self.collect(&batch, states.len(), taus.len()))
    }

    fn collect(&self, batch: &Mat<C64>, n_states: usize, n_times: usize) -> Vec<Vec<f64>> {
        (0..n_states)
            .map(|s| (0..n_times).map(|t| self.coherence(batch, s * n_times + t)).collect())
            .collect()
    }

    /// Repeats `steps` and reads out after each listed block count
    /// (`counts` ascending, 0 allowed): `[state][count]`.
    pub fn repeated(&mut self, states: &[StateVector], steps: &[Step], counts: &[usize]) -> Result<Vec<Vec<f64>>> {
        if counts.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("block counts must be ascending"));
        }
        let mut batch = crate::dynamics::to_batch(states)?;
        let mut out = vec![Vec::with_capacity(counts.len()); states.len()];
        let mut done = 0usize;
        for &c in counts {
            while done < c {
                self.execute(&mut batch, steps)?;
                done += 1;
            }
            for (s, row) in out.iter_mut().enumerate() {
                row.push(self.coherence(&batch, s));
            }
        }
        Ok(out)
    }

    /// Block sequences read out after each block; returns a trace over k.
    pub fn block_trace(&mut self, state: &StateVector, spec: &SequenceSpec) -> Result<CoherenceTrace> {
        let k = match *spec {
            SequenceSpec::EpsCpmg { k, .. } | SequenceSpec::WahuhaEcho { k, .. } => k,
            _ => return Err(Error::Unsupported(format!("{} is not a block sequence", spec.name()))),
        };
        let steps = block_steps(spec)?;
        let counts: Vec<usize> = (1..=k).collect();
        let values = self.repeated(std::slice::from_ref(state), &steps, &counts)?.remove(0);
        CoherenceTrace::new(spec.natural_times(), values)
    }

    fn lock_propagator(&mut self, omega_y: f64) -> Result<&Propagator> {
        let key = omega_y.to_bits();
        if !self.locked.contains_key(&key) {
            let drive = SpinOperator::collective(self.n_spins(), Axis::Y).scaled(omega_y);
            self.locked.insert(key, Propagator::new(&self.h.plus(&drive))?);
        }
        Ok(&self.locked[&key])
    }

    /// Evolution under `H + Ω_y ΣS_y` sampled at `times`: `[state][time]`.
    pub fn spin_lock(&mut self, states: &[StateVector], omega_y: f64, times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(times)?;
        let (mut batch, dts) = replicate(states, times)?;
        self.lock_propagator(omega_y)?.evolve_batch(&mut batch, &dts)?;
        Ok(self.collect(&batch, states.len(), times.len()))
    }

    /// Bloch vectors of the center spin after spin-locking, `[state][time]`.
    pub fn spin_lock_bloch(&mut self, states: &[StateVector], omega_y: f64, times: &[f64]) -> Result<Vec<Vec<[f64; 3]>>> {
        check_times(times)?;
        let (mut batch, dts) = replicate(states, times)?;
        self.lock_propagator(omega_y)?.evolve_batch(&mut batch, &dts)?;
        let n = self.n_spins();
        Ok((0..states.len())
            .map(|s| {
                (0..times.len())
                    .map(|t| batch_spin_expectation(batch.as_ref(), n, s * times.len() + t, self.center))
                    .collect()
            })
            .collect())
    }

    /// Coherence of `spec` at each grid time, for every initial state.
    ///
    /// Ramsey and echo scan τ, spin-lock scans `T`; block sequences read
    /// out at grid times that must be whole multiples of the block length.
    pub fn trace(&mut self, spec: &SequenceSpec, states: &[StateVector], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        spec.validate()?;
        match *spec {
            SequenceSpec::Ramsey { .. } => self.ramsey(states, times),
            SequenceSpec::SpinEcho { .. } => self.spin_echo(states, times),
            SequenceSpec::SpinLock { omega_y, .. } => self.spin_lock(states, omega_y, times),
            SequenceSpec::EpsCpmg { .. } | SequenceSpec::WahuhaEcho { .. } => {
                let p = spec.block_duration();
                let counts = block_counts(times, p)?;
                let steps = block_steps(spec)?;
                self.repeated(states, &steps, &counts)
            }
            SequenceSpec::DtcFloquet { .. } => Err(Error::Unsupported(
                "DTC runs produce polarization series; use the dtc module".into(),
            )),
        }
    }
}

/// Maps readout times to whole block counts.
pub fn block_counts(times: &[f64], period: f64) -> Result<Vec<usize>> {
    check_times(times)?;
    if !(period > 0.0) {
        return Err(Error::Sequence("block sequences need a positive period".into()));
    }
    times
        .iter()
        .map(|t| {
            let k = (t / period).round();
            if (t / period - k).abs() > 1e-6 {
                return Err(Error::Sequence(format!("time {t} μs is not a multiple of the {period} μs block")));
            }
            Ok(k as usize)
        })
        .collect()
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::invalid("times must be finite and non-negative"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("times must be strictly increasing"));
    }
    Ok(())
}

fn replicate(states: &[StateVector], times: &[f64]) -> Result<(Mat<C64>, Vec<f64>)> {
    let first = states.first().ok_or_else(|| Error::invalid("no initial states"))?;
    let dim = first.dim();
    if states.iter().any(|s| s.dim() != dim) {
        return Err(Error::invalid("mixed state dimensions"));
    }
    let nt = times.len();
    let batch = Mat::from_fn(dim, states.len() * nt, |i, j| states[j / nt].amplitudes()[i]);
    let dts = (0..states.len() * nt).map(|j| times[j % nt]).collect();
    Ok((batch, dts))
}

/// Ramsey coherence `π/2_x → free(τ)` of a prepared state.
pub fn run_ramsey(state0: &StateVector, h: &SpinOperator, tau: f64, center: usize) -> Result<f64> {
    Ok(SequenceRunner::new(h, center)?.ramsey(std::slice::from_ref(state0), &[tau])?[0][0])
}

pub fn run_spin_echo(state0: &StateVector, h: &SpinOperator, tau: f64, center: usize) -> Result<f64> {
    Ok(SequenceRunner::new(h, center)?.spin_echo(std::slice::from_ref(state0), &[tau])?[0][0])
}

pub fn run_eps_cpmg(state0: &StateVector, h: &SpinOperator, spec: &SequenceSpec, center: usize) -> Result<CoherenceTrace> {
    if !matches!(spec, SequenceSpec::EpsCpmg { .. }) {
        return Err(Error::invalid("expected an EpsCpmg spec"));
    }
    SequenceRunner::new(h, center)?.block_trace(state0, spec)
}

pub fn run_wahuha_echo(state0: &StateVector, h: &SpinOperator, spec: &SequenceSpec, center: usize) -> Result<CoherenceTrace> {
    if !matches!(spec, SequenceSpec::WahuhaEcho { .. }) {
        return Err(Error::invalid("expected a WahuhaEcho spec"));
    }
    SequenceRunner::new(h, center)?.block_trace(state0, spec)
}

pub fn run_spin_lock(
    state0: &StateVector,
    h: &SpinOperator,
    omega_y: f64,
    sample_times: &[f64],
    center: usize,
) -> Result<CoherenceTrace> {
    let values = SequenceRunner::new(h, center)?.spin_lock(std::slice::from_ref(state0), omega_y, sample_times)?;
    CoherenceTrace::new(sample_times.to_vec(), values.into_iter().next().expect("one state"))
}

/// Signed and contrast polarization of the center spin after each DTC cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationSeries {
    /// `C₊ − C₋` normalised by `C₊ + C₋`, before taking the magnitude.
    pub signed: Vec<f64>,
    pub tau: f64,
}

impl PolarizationSeries {
    pub fn new(signed: Vec<f64>, tau: f64) -> Result<Self> {
        if signed.is_empty() {
            return Err(Error::invalid("empty polarization series"));
        }
        Ok(Self { signed, tau })
    }

    /// `P(k) = |C₊ − C₋| / (C₊ + C₋)`
    pub fn contrast(&self) -> Vec<f64> {
        self.signed.iter().map(|v| v.abs()).collect()
    }

    pub fn len(&self) -> usize {
        self.signed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signed.is_empty()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            signed: self.signed.iter().map(|v| v * s).collect(),
            tau: self.tau,
        }
    }
}

/// Population of |1⟩ (`S_z = +1/2`) of a spin with Bloch vector `b` after a
/// π/2 analyzer pulse about `(cos θ, sin θ, 0)`.
pub fn analyzer_signal(bloch: [f64; 3], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    0.5 + c * bloch[1] - s * bloch[0]
}

/// Readout pair `(C₊, C₋)` for analyzer pulses about `±x`.
pub fn dtc_readout(bloch: [f64; 3]) -> (f64, f64) {
    (analyzer_signal(bloch, 0.0), analyzer_signal(bloch, PI))
}

/// A batch of DTC runs sharing one Hamiltonian.
///
/// Simulation happens in a frame whose quantisation axis is the lock axis
/// (`y → z, z → x, x → y`), where the locked Hamiltonian is real.
pub struct DtcSimulator {
    n_spins: usize,
    center: usize,
    lock: Propagator,
}

/// Axis relabelling into the lock frame.
const LOCK_FRAME: [[f64; 3]; 3] = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];

fn to_lock_frame(v: [f64; 3]) -> [f64; 3] {
    let m = LOCK_FRAME;
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// One DTC protocol instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DtcJob {
    pub tau: f64,
    pub epsilon: f64,
    pub phi: f64,
}

impl DtcSimulator {
    pub fn new(h: &SpinOperator, omega_y: f64, center: usize) -> Result<Self> {
        let n = h.n_sites();
        if center >= n {
            return Err(Error::invalid("center index outside register"));
        }
        let locked = h.plus(&SpinOperator::collective(n, Axis::Y).scaled(omega_y));
        let framed = locked.rotated(&LOCK_FRAME);
        Ok(Self {
            n_spins: n,
            center,
            lock: Propagator::new(&framed)?,
        })
    }

    /// Signed series `[pattern][job]` for `k` cycles. Each pumped pattern is
    /// prepared with the job's `phi`.
    pub fn run(&self, patterns: &[Vec<bool>], jobs: &[DtcJob], k: usize) -> Result<Vec<Vec<PolarizationSeries>>> {
        if patterns.iter().any(|p| p.len() != self.n_spins) {
            return Err(Error::invalid("pattern length differs from register size"));
        }
        let nj = jobs.len();
        let ncol = patterns.len() * nj;
        if ncol == 0 {
            return Ok(vec![Vec::new(); patterns.len()]);
        }
        let dim = 1usize << self.n_spins;
        let mut batch = Mat::<C64>::zeros(dim, ncol);
        for (p, pat) in patterns.iter().enumerate() {
            for (j, job) in jobs.iter().enumerate() {
                // pumped spins start at S_z = −1/2, the others at +1/2; the
                // prep rotation by phi about x then maps −z to (0, sin φ, −cos φ)
                let (s, c) = job.phi.sin_cos();
                let dirs: Vec<[f64; 3]> = pat
                    .iter()
                    .map(|pumped| {
                        let d = if *pumped { [0.0, s, -c] } else { [0.0, -s, c] };
                        to_lock_frame(d)
                    })
                    .collect();
                let st = product_state(&dirs)?;
                for i in 0..dim {
                    batch[(i, p * nj + j)] = st.amplitudes()[i];
                }
            }
        }
        let dts: Vec<f64> = (0..ncol).map(|c| jobs[c % nj].tau).collect();
        let kick_axis = to_lock_frame(X);
        let kicks: Vec<[[C64; 2]; 2]> = jobs
            .iter()
            .map(|j| single_spin_rotation(kick_axis, PI + j.epsilon))
            .collect();
        let readout_axis = to_lock_frame(Y);
        let mut out = vec![vec![Vec::with_capacity(k); nj]; patterns.len()];
        let any_free = dts.iter().any(|t| *t > 0.0);
        for _ in 0..k {
            if any_free {
                self.lock.evolve_batch(&mut batch, &dts)?;
            }
            for c in 0..ncol {
                let col = batch.col_mut(c).try_as_col_major_mut().expect("contiguous").as_slice_mut();
                crate::dynamics::apply_global_rotation(col, self.n_spins, &kicks[c % nj]);
            }
            for (p, row) in out.iter_mut().enumerate() {
                for (j, series) in row.iter_mut().enumerate() {
                    let b = batch_spin_expectation(batch.as_ref(), self.n_spins, p * nj + j, self.center);
                    let lab_y = 2.0 * (b[0] * readout_axis[0] + b[1] * readout_axis[1] + b[2] * readout_axis[2]);
                    series.push(lab_y);
                }
            }
        }
        out.into_iter()
            .map(|row| {
                row.into_iter()
                    .zip(jobs)
                    .map(|(s, j)| PolarizationSeries::new(s, j.tau))
                    .collect()
            })
            .collect()
    }
}

/// Product of spin-coherent states pointing along `dirs`.
pub fn product_state(dirs: &[[f64; 3]]) -> Result<StateVector> {
    let n = dirs.len();
    let mut factors = Vec::with_capacity(n);
    for d in dirs {
        let d = crate::operators::unit_vector(*d)?;
        let theta = d[2].clamp(-1.0, 1.0).acos();
        let phi = d[1].atan2(d[0]);
        let (s, c) = (0.5 * theta).sin_cos();
        factors.push((C64::new(c, 0.0), C64::new(s * phi.cos(), s * phi.sin())));
    }
    let dim = 1usize << n;
    let amps = (0..dim)
        .map(|b| {
            let mut a = C64::new(1.0, 0.0);
            for (i, (up, down)) in factors.iter().enumerate() {
                a *= if b >> (n - 1 - i) & 1 == 0 { *up } else { *down };
            }
            a
        })
        .collect();
    StateVector::new(n, amps)
}

/// DTC protocol on a single pumped pattern: rotation by `phi`, then `k`
/// cycles of locking and `(π+ε)_x` kicks.
pub fn run_dtc_floquet(pumped: &[bool], h: &SpinOperator, spec: &SequenceSpec, center: usize) -> Result<PolarizationSeries> {
    spec.validate()?;
    let SequenceSpec::DtcFloquet {
        tau,
        epsilon,
        k,
        phi,
        omega_y,
    } = *spec
    else {
        return Err(Error::invalid("expected a DtcFloquet spec"));
    };
    let sim = DtcSimulator::new(h, omega_y, center)?;
    let mut out = sim.run(&[pumped.to_vec()], &[DtcJob { tau, epsilon, phi }], k)?;
    Ok(out.remove(0).remove(0))
}

/// Least-squares fit of the analyzer fringe `C(θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzerFit {
    pub c_amp: f64,
    pub c_offset: f64,
    pub coherence: f64,
    pub residual: f64,
}

/// Applies a π/2 analyzer pulse at each phase, records the center-spin |1⟩
/// population and fits `C(θ) = C_amp cos(θ − θ₀) + C_offset`.
pub fn emulate_analyzer_sweep(state: &StateVector, theta_grid: &[f64], center: usize) -> Result<AnalyzerFit> {
    if theta_grid.len() < 8 {
        return Err(Error::invalid("analyzer sweep needs at least 8 phases"));
    }
    let mut signal = Vec::with_capacity(theta_grid.len());
    for &th in theta_grid {
        let mut s = state.clone();
        crate::dynamics::apply_ideal_pulse(&mut s, [th.cos(), th.sin(), 0.0], FRAC_PI_2)?;
        signal.push(0.5 + s.spin_expectation(center)[2]);
    }
    fit_fringe(theta_grid, &signal)
}

/// Linear least squares of `a cos θ + b sin θ + c`.
pub fn fit_fringe(theta: &[f64], signal: &[f64]) -> Result<AnalyzerFit> {
    if theta.len() != signal.len() {
        return Err(Error::Shape {
            expected: theta.len(),
            found: signal.len(),
        });
    }
    let design = Mat::from_fn(theta.len(), 3, |i, j| match j {
        0 => theta[i].cos(),
        1 => theta[i].sin(),
        _ => 1.0,
    });
    let sol = crate::linalg::lstsq(design.as_ref(), signal)
        .ok_or_else(|| Error::Fit("analyzer phases do not span the fringe".into()))?;
    let (a, b, c) = (sol[0], sol[1], sol[2]);
    if !(c.abs() > 1e-12) {
        return Err(Error::Fit("fringe offset vanishes".into()));
    }
    let residual = (0..theta.len())
        .map(|i| (a * design[(i, 0)] + b * design[(i, 1)] + c - signal[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let c_amp = a.hypot(b);
    Ok(AnalyzerFit {
        c_amp,
        c_offset: c,
        coherence: c_amp / c,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{center_coherence, prepare_pattern};
    use crate::hamiltonian::{build_xy_hamiltonian, CouplingMatrix, DisorderField};

    fn pair(j: f64, d1: f64, d2: f64) -> SpinOperator {
        let c = CouplingMatrix::from_pairs(2, &[(0, 1, j)]).unwrap();
        build_xy_hamiltonian(&c, &DisorderField::from_deltas(vec![d1, d2])).unwrap().h_total
    }

    #[test]
    fn single_spin_trivia() {
        let h = SpinOperator::single(1, 0, Axis::Z, 0.0);
        let s = prepare_pattern(&[true], FRAC_PI_2).unwrap();
        assert!((run_ramsey(&s, &h, 3.0, 0).unwrap() - 1.0).abs() < 1e-14);
        let h = SpinOperator::single(1, 0, Axis::Z, 2.3);
        for tau in [0.1, 1.0, 7.7] {
            assert!((run_spin_echo(&s, &h, tau, 0).unwrap() - 1.0).abs() < 1e-12);
        }
        let spec = SequenceSpec::EpsCpmg {
            tau: 0.3,
            epsilon: 0.0,
            k: 6,
            t_p: 0.0,
            mode: PulseTiming::Ideal,
        };
        let tr = run_eps_cpmg(&s, &h, &spec, 0).unwrap();
        assert!(tr.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_angle_cpmg_is_ramsey() {
        let h = pair(0.0, 0.8, -0.3);
        let s = prepare_pattern(&[true, true], FRAC_PI_2).unwrap();
        let spec = SequenceSpec::EpsCpmg {
            tau: 0.4,
            epsilon: -PI,
            k: 5,
            t_p: 0.0,
            mode: PulseTiming::Ideal,
        };
        let tr = run_eps_cpmg(&s, &h, &spec, 0).unwrap();
        for (k, v) in tr.values.iter().enumerate() {
            let r = run_ramsey(&s, &h, 0.4 * (k + 1) as f64, 0).unwrap();
            assert!((v - r).abs() < 1e-12);
        }
    }

    #[test]
    fn cpmg_single_block_is_echo() {
        let h = pair(0.9, 0.4, -0.6);
        let s = prepare_pattern(&[true, false], FRAC_PI_2).unwrap();
        let spec = SequenceSpec::EpsCpmg {
            tau: 1.3,
            epsilon: 0.0,
            k: 1,
            t_p: 0.0,
            mode: PulseTiming::Ideal,
        };
        let tr = run_eps_cpmg(&s, &h, &spec, 0).unwrap();
        assert!((tr.values[0] - run_spin_echo(&s, &h, 1.3, 0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn echo_resonant_pair_matches_cosine() {
        let j = 1.7;
        let h = pair(j, 0.0, 0.0);
        let s = prepare_pattern(&[true, true], FRAC_PI_2).unwrap();
        for tau in [0.0, 0.5, 2.0 * PI / j, 3.3] {
            let v = run_spin_echo(&s, &h, tau, 0).unwrap();
            assert!((v - (j * tau / 2.0).cos()).abs() < 1e-10);
        }
    }

    #[test]
    fn wahuha_block_is_net_identity() {
        let mut m = crate::operators::MAT3_IDENTITY;
        for (axis, angle) in wahuha_pulses() {
            m = crate::operators::mat3_mul(&m, &crate::operators::pulse_frame_matrix(axis, angle));
        }
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((m[i][j] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wahuha_finite_timing() {
        let steps = wahuha_steps(0.1, Some(rabi_from_tp(0.02).unwrap())).unwrap();
        let total: f64 = steps
            .iter()
            .map(|s| match s {
                Step::Free(t) => *t,
                Step::Pulse(p) => p.duration(),
            })
            .sum();
        assert!((total - 0.6).abs() < 1e-12);
        // π/2 next to π needs τ ≥ 1.5 t_p
        let bad = SequenceSpec::WahuhaEcho {
            tau: 0.025,
            k: 1,
            t_p: 0.02,
            mode: PulseTiming::Finite,
        };
        assert!(matches!(bad.validate(), Err(Error::Sequence(_))));
        let bad = SequenceSpec::WahuhaEcho {
            tau: 0.02,
            k: 1,
            t_p: 0.02,
            mode: PulseTiming::Finite,
        };
        assert!(matches!(bad.validate(), Err(Error::Sequence(_))));
    }

    #[test]
    fn spin_lock_zero_drive_is_ramsey() {
        let h = pair(0.7, 0.5, -0.2);
        let s = prepare_pattern(&[true, false], FRAC_PI_2).unwrap();
        let times = [0.5, 1.0, 2.5];
        let tr = run_spin_lock(&s, &h, 0.0, &times, 0).unwrap();
        for (t, v) in times.iter().zip(&tr.values) {
            assert!((v - run_ramsey(&s, &h, *t, 0).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_lock_rabi_from_z() {
        let omega = crate::units::mhz(10.0);
        let h = SpinOperator::single(1, 0, Axis::Z, 0.0);
        let s = prepare_pattern(&[true], 0.0).unwrap();
        let mut r = SequenceRunner::new(&h, 0).unwrap();
        let times: Vec<f64> = (1..20).map(|k| 0.003 * k as f64).collect();
        let b = r.spin_lock_bloch(&[s], omega, &times).unwrap();
        for (t, v) in times.iter().zip(&b[0]) {
            assert!((v[2] + 0.5 * (omega * t).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn analyzer_sweep_agrees_with_bloch_readout() {
        let grid: Vec<f64> = (0..12).map(|k| 2.0 * PI * k as f64 / 12.0).collect();
        let s = prepare_pattern(&[true, true], FRAC_PI_2).unwrap();
        let fit = emulate_analyzer_sweep(&s, &grid, 0).unwrap();
        assert!((fit.coherence - 1.0).abs() < 1e-12 && fit.residual < 1e-10);
        let s = prepare_pattern(&[true, true], 0.0).unwrap();
        let fit = emulate_analyzer_sweep(&s, &grid, 1).unwrap();
        assert!(fit.c_amp.abs() < 1e-12 && fit.coherence.abs() < 1e-12);
        // a generic entangled state
        let h = pair(1.1, 0.3, -0.9);
        let mut s = prepare_pattern(&[true, false], 1.0).unwrap();
        Propagator::new(&h).unwrap().evolve(&mut s, 1.7).unwrap();
        let fit = emulate_analyzer_sweep(&s, &grid, 0).unwrap();
        let b = s.spin_expectation(0);
        assert!((fit.coherence - 2.0 * b[0].hypot(b[1])).abs() < 1e-8);
        for th in &grid {
            let mut t = s.clone();
            crate::dynamics::apply_ideal_pulse(&mut t, [th.cos(), th.sin(), 0.0], FRAC_PI_2).unwrap();
            assert!((0.5 + t.spin_expectation(0)[2] - analyzer_signal(b, *th)).abs() < 1e-12);
        }
        assert!(emulate_analyzer_sweep(&s, &grid[..5], 0).is_err());
    }

    #[test]
    fn dtc_lock_frame_matches_lab_frame() {
        let c = CouplingMatrix::from_pairs(3, &[(0, 1, 0.8), (1, 2, -0.5), (0, 2, 0.3)]).unwrap();
        let h = build_xy_hamiltonian(&c, &DisorderField::from_deltas(vec![0.4, -0.2, 0.9])).unwrap().h_total;
        let (omega, tau, eps, phi) = (3.0, 0.37, 0.2, 1.1);
        let pattern = vec![true, false, true];
        let spec = SequenceSpec::DtcFloquet {
            tau,
            epsilon: eps,
            k: 5,
            phi,
            omega_y: omega,
        };
        let series = run_dtc_floquet(&pattern, &h, &spec, 1).unwrap();
        // lab-frame reference with the complex propagator
        let lock = Propagator::new(&h.plus(&SpinOperator::collective(3, Axis::Y).scaled(omega))).unwrap();
        let mut s = prepare_pattern(&pattern, phi).unwrap();
        for k in 0..5 {
            lock.evolve(&mut s, tau).unwrap();
            crate::dynamics::apply_ideal_pulse(&mut s, X, PI + eps).unwrap();
            assert!((series.signed[k] - center_coherence(&s, 1)).abs() < 1e-12);
            let (cp, cm) = dtc_readout(s.spin_expectation(1));
            assert!(((cp - cm).abs() / (cp + cm) - series.contrast()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn block_count_mapping() {
        assert_eq!(block_counts(&[0.0, 0.6, 1.2], 0.3).unwrap(), vec![0, 2, 4]);
        assert!(block_counts(&[0.5], 0.3).is_err());
    }

    #[test]
    fn trace_validation() {
        assert!(CoherenceTrace::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        let bad = SequenceSpec::EpsCpmg {
            tau: 0.3,
            epsilon: 4.0,
            k: 1,
            t_p: 0.0,
            mode: PulseTiming::Ideal,
        };
        assert!(bad.validate().is_err());
    }
}
