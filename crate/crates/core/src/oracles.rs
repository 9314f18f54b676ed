//! Closed-form references and average Hamiltonian theory.
//!
//! Frame matrices follow the convention of
//! [`SpinOperator::rotated`]: in a segment with frame `M` the toggling-frame
//! Hamiltonian is `H.rotated(&M)`, and each ideal pulse right-multiplies `M`
//! by [`pulse_frame_matrix`].

use std::f64::consts::PI;

use faer::Mat;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::Propagator;
use crate::ensemble::{run_ensemble, EnsembleSpec, TraceStats};
use crate::hamiltonian::{ising_hamiltonian, onsite_hamiltonian, CouplingMatrix};
use crate::operators::{mat3_mul, pulse_frame_matrix, Axis, SpinOperator, MAT3_IDENTITY};
use crate::sequences::{block_steps, CoherenceTrace, PulseTiming, SequenceRunner, SequenceSpec, Step};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoSpinParams {
    pub j: f64,
    /// Relative detuning `Δ₁ − Δ₂`.
    pub delta: f64,
}

/// Spin-echo polarization of a pair:
/// `Δ²/(Δ²+J²) + J²/(Δ²+J²)·cos(√(Δ²+J²)·τ/2)`.
pub fn two_spin_echo_polarization(params: TwoSpinParams, tau: f64) -> f64 {
    let TwoSpinParams { j, delta } = params;
    let r2 = j * j + delta * delta;
    if r2 == 0.0 {
        return 1.0;
    }
    (delta * delta + j * j * (0.5 * r2.sqrt() * tau).cos()) / r2
}

/// Standard deviation of a Gaussian with the given full width at half maximum.
pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// Zero-centred Gaussian `(J, Δ)` draws with the given FWHMs.
pub fn sample_two_spin_params<R: Rng + ?Sized>(
    j_fwhm: f64,
    w_fwhm: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<TwoSpinParams>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    if !(j_fwhm >= 0.0) || !(w_fwhm >= 0.0) {
        return Err(Error::invalid("FWHM values must be non-negative"));
    }
    let nj = Normal::new(0.0, sigma_from_fwhm(j_fwhm)).map_err(|e| Error::invalid(e.to_string()))?;
    let nw = Normal::new(0.0, sigma_from_fwhm(w_fwhm)).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((0..n_samples)
        .map(|_| TwoSpinParams {
            j: nj.sample(rng),
            delta: nw.sample(rng),
        })
        .collect())
}

/// Monte Carlo mean of the pair echo formula at one `tau`.
pub fn two_spin_ensemble_average<R: Rng + ?Sized>(
    j_fwhm: f64,
    w_fwhm: f64,
    tau: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    let samples = sample_two_spin_params(j_fwhm, w_fwhm, n_samples, rng)?;
    Ok(two_spin_mean(&samples, tau))
}

pub fn two_spin_mean(samples: &[TwoSpinParams], tau: f64) -> f64 {
    samples.iter().map(|p| two_spin_echo_polarization(*p, tau)).sum::<f64>() / samples.len() as f64
}

/// `⟨J²⟩/4`, the coefficient in `d⟨P⟩/dτ ≈ −(⟨J²⟩/4)·τ`.
pub fn early_decay_rate(j_samples: &[f64]) -> Result<f64> {
    if j_samples.is_empty() {
        return Err(Error::InsufficientData("no coupling samples".into()));
    }
    Ok(j_samples.iter().map(|j| j * j).sum::<f64>() / j_samples.len() as f64 / 4.0)
}

/// Fitted `s` in `P ≈ 1 − (s/2)·τ²` over the given points.
pub fn early_slope(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::Shape {
            expected: times.len(),
            found: values.len(),
        });
    }
    let den: f64 = times.iter().map(|t| t.powi(4)).sum();
    if times.iter().filter(|t| **t > 0.0).count() < 2 || den == 0.0 {
        return Err(Error::InsufficientData("early slope needs at least two non-zero times".into()));
    }
    let num: f64 = times.iter().zip(values).map(|(t, v)| (1.0 - v) * t * t).sum();
    Ok(2.0 * num / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeSpinParams {
    /// Coupling of spins 1 and 2.
    pub j0: f64,
    /// Coupling of spins 1 and 3.
    pub j1: f64,
    /// Coupling of spins 2 and 3.
    pub j2: f64,
}

impl ThreeSpinParams {
    pub const WARN_RATIO: f64 = 0.4;

    pub fn new(j0: f64, j1: f64, j2: f64) -> Result<Self> {
        let p = Self { j0, j1, j2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.j0 != 0.0) || !self.j0.is_finite() || !self.j1.is_finite() || !self.j2.is_finite() {
            return Err(Error::invalid("three-spin oracle needs finite couplings and J0 ≠ 0"));
        }
        if self.ratio() > Self::WARN_RATIO {
            log::warn!(
                "three-spin perturbation ratio {:.3} exceeds {}; expansion is unreliable",
                self.ratio(),
                Self::WARN_RATIO
            );
        }
        Ok(())
    }

    /// `max(|J₁|, |J₂|)/|J₀|`
    pub fn ratio(&self) -> f64 {
        self.j1.abs().max(self.j2.abs()) / self.j0.abs()
    }

    pub fn couplings(&self) -> CouplingMatrix {
        CouplingMatrix::from_pairs(3, &[(0, 1, self.j0), (0, 2, self.j1), (1, 2, self.j2)]).expect("3-spin couplings")
    }

    /// `J₀(S¹S²)_XY + J₁(S¹S³)_XY + J₂(S²S³)_XY`
    pub fn hamiltonian(&self) -> SpinOperator {
        crate::hamiltonian::exchange_hamiltonian(&self.couplings())
    }
}

/// Second-order expansion of spin-1 polarization for three resonant spins.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbativeTerms {
    pub dc: f64,
    pub slow_amp: f64,
    /// `J₁J₂/J₀`
    pub slow_freq: f64,
    /// `(amplitude, angular frequency)` at `J₀+ν₀` and `J₀/2+ν₁…ν₄`.
    pub fast: [(f64, f64); 5],
    /// `ν₀…ν₄`
    pub nu: [f64; 5],
}

impl PerturbativeTerms {
    pub fn new(p: &ThreeSpinParams) -> Result<Self> {
        p.validate()?;
        let (j0, j1, j2) = (p.j0, p.j1, p.j2);
        let j0s = j0 * j0;
        let nu = [
            (j1 * j1 + j2 * j2) / (2.0 * j0),
            (j1 * j1 + j2 * j2 + 6.0 * j1 * j2) / (4.0 * j0),
            (j1 + j2).powi(2) / (4.0 * j0),
            (j1 * j1 + j2 * j2 - 6.0 * j1 * j2) / (4.0 * j0),
            (j1 - j2).powi(2) / (4.0 * j0),
        ];
        let dc = j2 / (2.0 * j0) + (3.0 * j1 * j1 + j2 * j2 + 4.0 * j1 * j2) / (2.0 * j0s);
        let slow_amp = -0.5 * (j2 / j0 - j2 * (j1 + j2) / j0s);
        let fast = [
            (j1 * (j1 - j2) / (2.0 * j0s), j0 + nu[0]),
            (
                0.5 * (1.0 - (j1 + j2) / (2.0 * j0) - (13.0 * j1 * j1 + 7.0 * j2 * j2 + 12.0 * j1 * j2) / (4.0 * j0s)),
                0.5 * j0 + nu[1],
            ),
            (
                0.5 * (1.0 + (j1 + j2) / (2.0 * j0) - (j1 * j1 + 3.0 * j2 * j2 + 4.0 * j1 * j2) / (4.0 * j0s)),
                0.5 * j0 + nu[2],
            ),
            (
                0.5 * ((j1 - j2) / (2.0 * j0) + 3.0 * (j2 * j2 - j1 * j1) / (4.0 * j0s)),
                0.5 * j0 + nu[3],
            ),
            (
                0.5 * ((j2 - j1) / (2.0 * j0) + (j1 * j1 - j2 * j2) / (4.0 * j0s)),
                0.5 * j0 + nu[4],
            ),
        ];
        Ok(Self {
            dc,
            slow_amp,
            slow_freq: j1 * j2 / j0,
            fast,
            nu,
        })
    }

    pub fn evaluate(&self, tau: f64) -> f64 {
        self.slow_component(tau) + self.fast.iter().map(|(a, w)| a * (w * tau).cos()).sum::<f64>()
    }

    /// DC offset plus the slow oscillation.
    pub fn slow_component(&self, tau: f64) -> f64 {
        self.dc + self.slow_amp * (self.slow_freq * tau).cos()
    }

    /// Value at `τ = 0`.
    pub fn amplitude_sum(&self) -> f64 {
        self.dc + self.slow_amp + self.fast.iter().map(|(a, _)| a).sum::<f64>()
    }
}

pub fn three_spin_perturbative(params: &ThreeSpinParams, tau: f64) -> Result<f64> {
    Ok(PerturbativeTerms::new(params)?.evaluate(tau))
}

/// Exact spin-echo polarization of spin 1 for three resonant spins.
pub fn three_spin_simulation(params: &ThreeSpinParams, taus: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    let runner = SequenceRunner::new(&params.hamiltonian(), 0)?;
    let state = crate::dynamics::prepare_pattern(&[true; 3], std::f64::consts::FRAC_PI_2)?;
    Ok(runner.spin_echo(&[state], taus)?.remove(0))
}

/// Angular frequency in `band` where the Hann-windowed, mean-removed
/// transform of a uniformly sampled signal peaks.
pub fn spectral_peak(times: &[f64], values: &[f64], band: (f64, f64)) -> Result<f64> {
    let n = times.len();
    if n < 8 || values.len() != n {
        return Err(Error::InsufficientData("spectral peak needs at least 8 matching samples".into()));
    }
    let (lo, hi) = band;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::invalid("frequency band must be an increasing positive interval"));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = (0..n)
        .map(|i| {
            let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
            hann * (values[i] - mean)
        })
        .collect();
    let power = |omega: f64| {
        let mut acc = C64::new(0.0, 0.0);
        for (t, x) in times.iter().zip(&w) {
            acc += C64::from_polar(*x, -omega * t);
        }
        acc.norm_sqr()
    };
    let grid = 2000;
    let step = (hi - lo) / grid as f64;
    let best = (0..=grid)
        .map(|k| lo + step * k as f64)
        .max_by(|a, b| power(*a).total_cmp(&power(*b)))
        .expect("non-empty grid");
    // golden-section refinement inside the neighbouring grid cells
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if power(c) > power(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(0.5 * (a + b))
}

/// Slow oscillation frequency of the exact three-spin signal, taken from the
/// spectral peak below `J₀/4` over `periods` predicted slow periods.
pub fn three_spin_slow_frequency(params: &ThreeSpinParams, periods: f64) -> Result<f64> {
    let predicted = (params.j1 * params.j2 / params.j0).abs();
    if predicted == 0.0 {
        return Err(Error::invalid("no slow component when J₁J₂ = 0"));
    }
    let j0 = params.j0.abs();
    let t_max = periods * 2.0 * PI / predicted;
    let dt = 0.5 / j0;
    let n = (t_max / dt).ceil() as usize + 1;
    let taus: Vec<f64> = (0..n).map(|i| i as f64 * dt).collect();
    let sim = three_spin_simulation(params, &taus)?;
    spectral_peak(&taus, &sim, (0.2 * predicted, (5.0 * predicted).min(0.25 * j0)))
}

/// Which pair Model I keeps in each realization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairChoice {
    /// The largest |J_ij| anywhere in the configuration.
    #[default]
    Global,
    /// The readout spin and its strongest partner.
    Center,
}

/// `J_max` of each realization.
pub fn max_pair_couplings(couplings: &[CouplingMatrix], center: usize, choice: PairChoice) -> Result<Vec<f64>> {
    couplings
        .iter()
        .map(|c| {
            let j = match choice {
                PairChoice::Global => c.strongest_pair().map(|p| p.2),
                PairChoice::Center => {
                    if center >= c.n() {
                        return Err(Error::invalid("center index outside register"));
                    }
                    c.strongest_partner(center).map(|p| p.1)
                }
            };
            j.ok_or_else(|| Error::invalid("Model I needs at least two spins"))
        })
        .collect()
}

/// Ensemble mean of `cos(J_max·τ/2)`.
pub fn model_i_trace(j_max: &[f64], tau_grid: &[f64]) -> Result<CoherenceTrace> {
    if j_max.is_empty() {
        return Err(Error::InsufficientData("no realizations".into()));
    }
    let values = tau_grid
        .iter()
        .map(|t| j_max.iter().map(|j| (0.5 * j * t).cos()).sum::<f64>() / j_max.len() as f64)
        .collect();
    CoherenceTrace::new(tau_grid.to_vec(), values)
}

/// Full simulation without on-site disorder.
pub fn model_ii_trace(spec: &EnsembleSpec, sequence: &SequenceSpec, tau_grid: &[f64]) -> Result<TraceStats> {
    let mut spec = spec.clone();
    spec.w = 0.0;
    run_ensemble(&spec, sequence, tau_grid)
}

/// One free-evolution segment seen from the toggling frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSegment {
    pub duration: f64,
    pub frame: [[f64; 3]; 3],
}

impl FrameSegment {
    /// Image of `S_z` as a vector over `(S_x, S_y, S_z)`.
    pub fn sz_image(&self) -> [f64; 3] {
        [self.frame[0][2], self.frame[1][2], self.frame[2][2]]
    }
}

/// Duration-weighted mean of the `S_z` image.
pub fn frame_average_sz(frames: &[FrameSegment]) -> [f64; 3] {
    let total: f64 = frames.iter().map(|f| f.duration).sum();
    let mut acc = [0.0; 3];
    for f in frames {
        let v = f.sz_image();
        for i in 0..3 {
            acc[i] += f.duration * v[i];
        }
    }
    if total > 0.0 {
        acc.iter_mut().for_each(|a| *a /= total);
    }
    acc
}

/// Segments for ideal-pulse steps, merging free periods not separated by a
/// pulse. Also returns the net control frame.
pub fn frames_of_steps(steps: &[Step]) -> Result<(Vec<FrameSegment>, [[f64; 3]; 3])> {
    let mut m = MAT3_IDENTITY;
    let mut out: Vec<FrameSegment> = Vec::new();
    let mut open = false;
    for s in steps {
        match *s {
            Step::Free(t) => {
                if open {
                    out.last_mut().expect("open segment").duration += t;
                } else {
                    out.push(FrameSegment { duration: t, frame: m });
                    open = true;
                }
            }
            Step::Pulse(p) => {
                if !matches!(p.mode, crate::dynamics::PulseMode::Ideal) {
                    return Err(Error::Unsupported("toggling frames assume ideal pulses".into()));
                }
                m = mat3_mul(&m, &pulse_frame_matrix(p.axis, p.angle));
                open = false;
            }
        }
    }
    out.retain(|f| f.duration > 0.0);
    Ok((out, m))
}

fn is_identity(m: &[[f64; 3]; 3]) -> bool {
    (0..3).all(|i| (0..3).all(|j| (m[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-9))
}

/// Largest number of blocks searched for a closed control cycle.
pub const MAX_PERIOD_BLOCKS: usize = 64;

/// Segments per drive period used for the spin-lock average.
pub const SPIN_LOCK_SEGMENTS: usize = 64;

fn check_ideal(spec: &SequenceSpec) -> Result<()> {
    match spec {
        SequenceSpec::EpsCpmg { mode, .. } | SequenceSpec::WahuhaEcho { mode, .. } if *mode == PulseTiming::Finite => {
            Err(Error::Unsupported("toggling frames assume ideal pulses".into()))
        }
        _ => Ok(()),
    }
}

/// Blocks in one closed control cycle: the smallest `p ≤ 64` whose net
/// rotation is the identity.
pub fn aht_period_blocks(spec: &SequenceSpec) -> Result<usize> {
    check_ideal(spec)?;
    let steps = block_steps(spec)?;
    let (_, m) = frames_of_steps(&steps)?;
    let mut acc = m;
    for p in 1..=MAX_PERIOD_BLOCKS {
        if is_identity(&acc) {
            return Ok(p);
        }
        acc = mat3_mul(&acc, &m);
    }
    Err(Error::invalid(format!(
        "{} control does not close within {MAX_PERIOD_BLOCKS} blocks",
        spec.name()
    )))
}

/// Toggling-frame segments. Ramsey and echo give their single block; pulsed
/// block sequences give one closed cycle; spin-lock gives one drive period
/// cut into [`SPIN_LOCK_SEGMENTS`] midpoint segments.
pub fn toggling_frames(spec: &SequenceSpec) -> Result<Vec<FrameSegment>> {
    spec.validate()?;
    check_ideal(spec)?;
    match *spec {
        SequenceSpec::Ramsey { .. } | SequenceSpec::SpinEcho { .. } => Ok(frames_of_steps(&block_steps(spec)?)?.0),
        SequenceSpec::EpsCpmg { .. } | SequenceSpec::WahuhaEcho { .. } => {
            let p = aht_period_blocks(spec)?;
            let block = block_steps(spec)?;
            let steps: Vec<Step> = (0..p).flat_map(|_| block.iter().copied()).collect();
            Ok(frames_of_steps(&steps)?.0)
        }
        SequenceSpec::SpinLock { omega_y, .. } => spin_lock_frames(omega_y, SPIN_LOCK_SEGMENTS),
        SequenceSpec::DtcFloquet { .. } => Err(Error::Unsupported("DTC cycles are not analysed with AHT".into())),
    }
}

fn spin_lock_frames(omega_y: f64, m: usize) -> Result<Vec<FrameSegment>> {
    if !(omega_y != 0.0) {
        return Err(Error::invalid("spin-lock average needs a non-zero drive"));
    }
    let period = 2.0 * PI / omega_y.abs();
    let dt = period / m as f64;
    Ok((0..m)
        .map(|k| FrameSegment {
            duration: dt,
            frame: pulse_frame_matrix([0.0, 1.0, 0.0], omega_y * (k as f64 + 0.5) * dt),
        })
        .collect())
}

/// Zeroth- and first-order average Hamiltonians over one control cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct AhtResult {
    pub h0: SpinOperator,
    pub h1: SpinOperator,
    /// Cycle duration.
    pub period: f64,
    /// Number of sequence blocks in the cycle (0 for spin-lock).
    pub n_blocks: usize,
}

impl AhtResult {
    pub fn decompose(&self, couplings: &CouplingMatrix, onsite_field: &[f64]) -> Result<HamiltonianWeights> {
        decompose_weights(&self.h0, couplings, onsite_field)
    }
}

/// `H0 = Σ t_j H̃_j / T` and `H1 = (−i/2T) Σ_{j>k} t_j t_k [H̃_j, H̃_k]`.
pub fn magnus_terms(h: &SpinOperator, frames: &[FrameSegment], max_order: usize) -> Result<(SpinOperator, SpinOperator, f64)> {
    if max_order > 1 {
        return Err(Error::Unsupported("average Hamiltonians are computed to first order only".into()));
    }
    let period: f64 = frames.iter().map(|f| f.duration).sum();
    if !(period > 0.0) {
        return Err(Error::invalid("control cycle has zero duration"));
    }
    let toggled: Vec<SpinOperator> = frames.iter().map(|f| h.rotated(&f.frame).pruned(1e-14)).collect();
    let n = h.n_sites();
    let mut h0 = SpinOperator::zero(n);
    for (f, ht) in frames.iter().zip(&toggled) {
        h0.add_scaled(ht, f.duration / period);
    }
    let mut h1 = SpinOperator::zero(n);
    if max_order == 1 {
        // Σ_{j>k} t_j t_k [H_j, H_k] = Σ_j t_j [H_j, Σ_{k<j} t_k H_k]
        let mut prefix = SpinOperator::zero(n);
        for (f, ht) in frames.iter().zip(&toggled) {
            if !prefix.is_zero() {
                h1.add_scaled(&ht.commutator(&prefix), f.duration);
            }
            prefix.add_scaled(ht, f.duration);
        }
        h1 = h1.scaled_complex(C64::new(0.0, -0.5 / period)).pruned(1e-14);
    }
    Ok((h0.pruned(1e-14), h1, period))
}

/// Average Hamiltonian of `spec` for the free Hamiltonian `h`.
///
/// Spin-lock folds the drive `Ω_y ΣS_y` back into `H0` (it commutes with the
/// drive-averaged interaction); its `H1` comes from the segmented integral.
pub fn average_hamiltonian(spec: &SequenceSpec, h: &SpinOperator, max_order: usize) -> Result<AhtResult> {
    spec.validate()?;
    check_ideal(spec)?;
    match *spec {
        SequenceSpec::SpinLock { omega_y, .. } => {
            let drive = SpinOperator::collective(h.n_sites(), Axis::Y).scaled(omega_y);
            let (h0, _, period) = magnus_terms(h, &spin_lock_frames(omega_y, 16)?, 0)?;
            let h1 = if max_order >= 1 {
                magnus_terms(h, &spin_lock_frames(omega_y, SPIN_LOCK_SEGMENTS)?, max_order)?.1
            } else {
                SpinOperator::zero(h.n_sites())
            };
            Ok(AhtResult {
                h0: h0.plus(&drive).pruned(1e-14),
                h1,
                period,
                n_blocks: 0,
            })
        }
        SequenceSpec::SpinEcho { .. } => Err(Error::invalid(
            "a single echo block is not a closed cycle; use EpsCpmg with epsilon = 0",
        )),
        SequenceSpec::DtcFloquet { .. } => Err(Error::Unsupported("DTC cycles are not analysed with AHT".into())),
        _ => {
            let n_blocks = match spec {
                SequenceSpec::Ramsey { .. } => 1,
                _ => aht_period_blocks(spec)?,
            };
            let frames = toggling_frames(spec)?;
            let (h0, h1, period) = magnus_terms(h, &frames, max_order)?;
            Ok(AhtResult {
                h0,
                h1,
                period,
                n_blocks,
            })
        }
    }
}

/// Exact propagator of one closed cycle of a pulsed block sequence.
pub fn cycle_unitary(h: &SpinOperator, spec: &SequenceSpec) -> Result<Mat<C64>> {
    let p = aht_period_blocks(spec)?;
    let steps = block_steps(spec)?;
    let mut runner = SequenceRunner::new(h, 0)?;
    let dim = 1usize << h.n_sites();
    let mut u = Mat::<C64>::identity(dim, dim);
    for _ in 0..p {
        runner.execute(&mut u, &steps)?;
    }
    Ok(u)
}

/// `‖U_cycle − e^{−i(H0 [+ H1])T}‖_F`, minimised over a global phase.
pub fn magnus_error(h: &SpinOperator, spec: &SequenceSpec, max_order: usize) -> Result<f64> {
    let aht = average_hamiltonian(spec, h, max_order)?;
    let exact = cycle_unitary(h, spec)?;
    let heff = aht.h0.plus(&aht.h1);
    let approx = Propagator::new(&heff)?.unitary(aht.period);
    Ok(crate::linalg::phase_aligned_distance(exact.as_ref(), approx.as_ref()))
}

/// Weights of `H0` on the Heisenberg, on-site and Ising families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianWeights {
    pub heisenberg: f64,
    pub onsite: [f64; 3],
    pub ising: [f64; 3],
    /// Frobenius norm of `H0` minus the fitted combination.
    pub residual: f64,
    pub relative_residual: f64,
}

impl HamiltonianWeights {
    pub fn reconstruct(&self, couplings: &CouplingMatrix, onsite_field: &[f64]) -> SpinOperator {
        let mut h = crate::hamiltonian::heisenberg_hamiltonian(couplings).scaled(self.heisenberg);
        for axis in Axis::ALL {
            h.add_scaled(&ising_hamiltonian(couplings, axis), self.ising[axis.index()]);
            h.add_scaled(&onsite_hamiltonian(onsite_field, axis), self.onsite[axis.index()]);
        }
        h
    }
}

/// Frobenius least squares of `h0` on `{Ising^{x,y,z}, onsite^{x,y,z}}`.
///
/// `H_Heis = ΣIsing^μ`, so the Heisenberg weight is not separately
/// identifiable; it is taken as the median of the three Ising coefficients
/// and removed from them. An all-zero `onsite_field` drops the on-site
/// family (weights reported as 0).
pub fn decompose_weights(h0: &SpinOperator, couplings: &CouplingMatrix, onsite_field: &[f64]) -> Result<HamiltonianWeights> {
    let n = h0.n_sites();
    if couplings.n() != n || onsite_field.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: if couplings.n() != n { couplings.n() } else { onsite_field.len() },
        });
    }
    if !h0.is_hermitian(1e-9 * (1.0 + h0.norm_l1())) {
        return Err(Error::invalid("H0 must be Hermitian"));
    }
    if couplings.is_all_zero() {
        return Err(Error::Rank("all couplings vanish; the interaction family is degenerate".into()));
    }
    let use_onsite = onsite_field.iter().any(|h| *h != 0.0);
    let mut family: Vec<SpinOperator> = Axis::ALL.iter().map(|a| ising_hamiltonian(couplings, *a)).collect();
    if use_onsite {
        family.extend(Axis::ALL.iter().map(|a| onsite_hamiltonian(onsite_field, *a)));
    }
    // spin strings are orthogonal with weight 4^{-len}, so the Frobenius
    // problem is an ordinary least-squares over string coefficients
    let mut strings: Vec<Vec<(u16, Axis)>> = Vec::new();
    for op in family.iter().chain(std::iter::once(h0)) {
        for (s, _) in op.terms() {
            strings.push(s.to_vec());
        }
    }
    strings.sort();
    strings.dedup();
    let row_weight = |s: &[(u16, Axis)]| 0.5f64.powi(s.len() as i32);
    let lookup = |op: &SpinOperator, s: &[(u16, Axis)]| -> f64 {
        let key: Vec<(usize, Axis)> = s.iter().map(|(i, a)| (*i as usize, *a)).collect();
        op.coefficient(&key).re
    };
    let design = Mat::from_fn(strings.len(), family.len(), |r, c| {
        row_weight(&strings[r]) * lookup(&family[c], &strings[r])
    });
    let target: Vec<f64> = strings.iter().map(|s| row_weight(s) * lookup(h0, s)).collect();
    let coef = crate::linalg::lstsq(design.as_ref(), &target)
        .ok_or_else(|| Error::Rank("Hamiltonian family is rank deficient".into()))?;
    let mut ising = [coef[0], coef[1], coef[2]];
    let mut sorted = ising;
    sorted.sort_by(f64::total_cmp);
    let heisenberg = sorted[1];
    ising.iter_mut().for_each(|c| *c -= heisenberg);
    let onsite = if use_onsite { [coef[3], coef[4], coef[5]] } else { [0.0; 3] };
    let mut w = HamiltonianWeights {
        heisenberg,
        onsite,
        ising,
        residual: 0.0,
        relative_residual: 0.0,
    };
    let resid = h0.minus(&w.reconstruct(couplings, onsite_field)).frobenius_norm();
    w.residual = resid;
    let norm = h0.frobenius_norm();
    w.relative_residual = if norm > 0.0 { resid / norm } else { resid };
    Ok(w)
}
