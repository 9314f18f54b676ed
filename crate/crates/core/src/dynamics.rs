//! Exact state-vector propagation, global pulses, preparation and readout.
//!
//! [`Propagator`] diagonalises a Hamiltonian once and then applies
//! `exp(−iHt)` for any `t`. Operators that conserve total `S_z` and are real
//! in the computational basis are split into popcount sectors and solved with
//! real symmetric eigendecompositions; real operators without that symmetry
//! use one real block; everything else falls back to a dense complex solve.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::operators::{unit_vector, Axis, SpinOperator};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Pure state of `n_spins` spins.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_spins: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn new(n_spins: usize, amps: Vec<C64>) -> Result<Self> {
        let dim = 1usize << n_spins;
        if amps.len() != dim {
            return Err(Error::Shape {
                expected: dim,
                found: amps.len(),
            });
        }
        Ok(Self { n_spins, amps })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_spins: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; 1 << n_spins];
        amps[index] = C64::new(1.0, 0.0);
        Self { n_spins, amps }
    }

    /// Product state with spin `i` in `S_z = +1/2` when `up[i]`.
    pub fn product_z(up: &[bool]) -> Self {
        let n = up.len();
        let index = up
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, u)| if *u { acc } else { acc | (1 << (n - 1 - i)) });
        Self::basis(n, index)
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * *b).sum()
    }

    /// `⟨S_site⟩` as an `(x, y, z)` Bloch vector (components in [−1/2, 1/2]).
    pub fn spin_expectation(&self, site: usize) -> [f64; 3] {
        spin_expectation(&self.amps, self.n_spins, site)
    }

    /// `⟨op⟩` (real part; imaginary part is zero for Hermitian `op`).
    pub fn expectation(&self, op: &SpinOperator) -> Result<f64> {
        Ok(op.expectation(&self.amps)?.re)
    }
}

fn spin_expectation(amps: &[C64], n_spins: usize, site: usize) -> [f64; 3] {
    let mask = 1usize << (n_spins - 1 - site);
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    for idx in 0..amps.len() {
        if idx & mask != 0 {
            continue;
        }
        let a = amps[idx];
        let b = amps[idx | mask];
        let ab = a.conj() * b;
        x += ab.re;
        y += ab.im;
        z += 0.5 * (a.norm_sqr() - b.norm_sqr());
    }
    [x, y, z]
}

/// Coherence readout `2⟨S_y^center⟩`.
pub fn center_coherence(state: &StateVector, center_index: usize) -> f64 {
    2.0 * state.spin_expectation(center_index)[1]
}

/// 2×2 unitary `exp(−iθ n̂·S)` in the (bit 0 = up, bit 1 = down) basis.
pub fn single_spin_rotation(axis: [f64; 3], angle: f64) -> [[C64; 2]; 2] {
    let (s, c) = (0.5 * angle).sin_cos();
    let [nx, ny, nz] = axis;
    // cos(θ/2) I − i sin(θ/2) n̂·σ
    [
        [C64::new(c, -s * nz), C64::new(-s * ny, -s * nx)],
        [C64::new(s * ny, -s * nx), C64::new(c, s * nz)],
    ]
}

fn apply_single_qubit(amps: &mut [C64], n_spins: usize, site: usize, u: &[[C64; 2]; 2]) {
    let mask = 1usize << (n_spins - 1 - site);
    for idx in 0..amps.len() {
        if idx & mask != 0 {
            continue;
        }
        let a = amps[idx];
        let b = amps[idx | mask];
        amps[idx] = u[0][0] * a + u[0][1] * b;
        amps[idx | mask] = u[1][0] * a + u[1][1] * b;
    }
}

pub(crate) fn apply_global_rotation(amps: &mut [C64], n_spins: usize, u: &[[C64; 2]; 2]) {
    for site in 0..n_spins {
        apply_single_qubit(amps, n_spins, site, u);
    }
}

/// Instantaneous identical rotation of every spin, `exp(−iθ n̂·Σ S)`.
pub fn apply_ideal_pulse(state: &mut StateVector, axis: [f64; 3], angle: f64) -> Result<()> {
    let n = unit_vector(axis)?;
    let u = single_spin_rotation(n, angle);
    apply_global_rotation(&mut state.amps, state.n_spins, &u);
    Ok(())
}

/// Applies the same global rotation to every column of a batch.
pub fn apply_ideal_pulse_batch(batch: &mut Mat<C64>, n_spins: usize, axis: [f64; 3], angle: f64) -> Result<()> {
    let n = unit_vector(axis)?;
    let u = single_spin_rotation(n, angle);
    for j in 0..batch.ncols() {
        let col = batch.col_mut(j).try_as_col_major_mut().expect("contiguous column").as_slice_mut();
        apply_global_rotation(col, n_spins, &u);
    }
    Ok(())
}

/// Evolution under `H + rabi·(n̂·ΣS)` for `duration`, through a propagator
/// of that summed Hamiltonian.
pub fn apply_finite_pulse(state: &mut StateVector, driven: &Propagator, duration: f64) -> Result<()> {
    driven.evolve(state, duration)
}

/// Ideal or finite-duration rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PulseMode {
    Ideal,
    Finite { rabi: f64 },
}

impl Default for PulseMode {
    fn default() -> Self {
        PulseMode::Ideal
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseOp {
    pub axis: [f64; 3],
    pub angle: f64,
    pub mode: PulseMode,
}

impl PulseOp {
    pub fn new(axis: [f64; 3], angle: f64, mode: PulseMode) -> Result<Self> {
        let axis = unit_vector(axis)?;
        if let PulseMode::Finite { rabi } = mode {
            if !(rabi > 0.0) {
                return Err(Error::invalid("finite pulses need a positive Rabi frequency"));
            }
        }
        Ok(Self { axis, angle, mode })
    }

    pub fn ideal(axis: [f64; 3], angle: f64) -> Result<Self> {
        Self::new(axis, angle, PulseMode::Ideal)
    }

    /// Pulse duration; zero for ideal pulses. Negative angles are realised by
    /// driving about the reversed axis, so the duration uses `|angle|`.
    pub fn duration(&self) -> f64 {
        match self.mode {
            PulseMode::Ideal => 0.0,
            PulseMode::Finite { rabi } => self.angle.abs() / rabi,
        }
    }

    /// Drive term `rabi·(n̂·ΣS)` with the sign of the angle folded into the axis.
    pub fn drive(&self, n_spins: usize) -> Option<SpinOperator> {
        match self.mode {
            PulseMode::Ideal => None,
            PulseMode::Finite { rabi } => {
                let s = rabi * self.angle.signum();
                let mut op = SpinOperator::zero(n_spins);
                for (k, ax) in Axis::ALL.iter().enumerate() {
                    if self.axis[k] != 0.0 {
                        op.add_scaled(&SpinOperator::collective(n_spins, *ax), s * self.axis[k]);
                    }
                }
                Some(op)
            }
        }
    }
}

struct RealBlock {
    /// Basis indices of this block, ascending.
    states: Vec<usize>,
    u: Mat<f64>,
    e: Vec<f64>,
}

enum Kind {
    Real(Vec<RealBlock>),
    Complex { u: Mat<C64>, e: Vec<f64> },
}

/// Cached eigendecomposition for repeated `exp(−iHt)`.
pub struct Propagator {
    n_spins: usize,
    kind: Kind,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            Kind::Real(b) => format!("real, {} blocks", b.len()),
            Kind::Complex { .. } => "complex".to_string(),
        };
        write!(f, "Propagator {{ n_spins: {}, {kind} }}", self.n_spins)
    }
}

fn real_block(op_terms: &[crate::operators::CompiledTerm], states: Vec<usize>, lookup: &[usize]) -> Result<RealBlock> {
    let d = states.len();
    let mut h = Mat::<f64>::zeros(d, d);
    for (col, &b) in states.iter().enumerate() {
        for t in op_terms {
            let (out, amp) = t.apply(b as u64);
            let row = lookup[out as usize];
            if row != usize::MAX {
                h[(row, col)] += amp.re;
            }
        }
    }
    let eig = h.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
    let e = (0..d).map(|i| eig.S()[i]).collect();
    Ok(RealBlock {
        states,
        u: eig.U().to_owned(),
        e,
    })
}

impl Propagator {
    pub fn new(h: &SpinOperator) -> Result<Self> {
        let n = h.n_sites();
        if n > 14 {
            return Err(Error::Capacity { requested: n, cap: 14 });
        }
        if !h.is_hermitian(1e-12 * h.norm_l1().max(1.0)) {
            return Err(Error::invalid("propagator needs a Hermitian operator"));
        }
        let dim = 1usize << n;
        let real = h.is_real_in_z_basis();
        let kind = if real {
            let terms = h.compile();
            let sectors: Vec<Vec<usize>> = if h.conserves_total_sz() {
                let mut s = vec![Vec::new(); n + 1];
                for b in 0..dim {
                    s[b.count_ones() as usize].push(b);
                }
                s
            } else {
                vec![(0..dim).collect()]
            };
            let mut blocks = Vec::with_capacity(sectors.len());
            for states in sectors {
                let mut lookup = vec![usize::MAX; dim];
                for (k, &b) in states.iter().enumerate() {
                    lookup[b] = k;
                }
                blocks.push(real_block(&terms, states, &lookup)?);
            }
            Kind::Real(blocks)
        } else {
            let m = h.to_dense()?;
            let eig = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
            let e = (0..dim).map(|i| eig.S()[i].re).collect();
            Kind::Complex {
                u: eig.U().to_owned(),
                e,
            }
        };
        Ok(Self { n_spins: n, kind })
    }

    /// Always uses the dense complex solver (cross-checks only).
    pub fn new_dense(h: &SpinOperator) -> Result<Self> {
        let n = h.n_sites();
        let m = h.to_dense()?;
        let eig = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
        let e = (0..m.nrows()).map(|i| eig.S()[i].re).collect();
        Ok(Self {
            n_spins: n,
            kind: Kind::Complex {
                u: eig.U().to_owned(),
                e,
            },
        })
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    /// Whether the cached decomposition is real-valued (sector or single block).
    pub fn is_real(&self) -> bool {
        matches!(self.kind, Kind::Real(_))
    }

    pub fn n_blocks(&self) -> usize {
        match &self.kind {
            Kind::Real(b) => b.len(),
            Kind::Complex { .. } => 1,
        }
    }

    /// All eigenvalues, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = match &self.kind {
            Kind::Real(blocks) => blocks.iter().flat_map(|b| b.e.iter().copied()).collect(),
            Kind::Complex { e, .. } => e.clone(),
        };
        e.sort_by(f64::total_cmp);
        e
    }

    /// `ψ ← exp(−iH·dt) ψ`
    pub fn evolve(&self, state: &mut StateVector, dt: f64) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                found: state.dim(),
            });
        }
        if dt == 0.0 {
            return Ok(());
        }
        let mut batch = Mat::from_fn(self.dim(), 1, |i, _| state.amps[i]);
        self.evolve_batch(&mut batch, &[dt])?;
        for (i, a) in state.amps.iter_mut().enumerate() {
            *a = batch[(i, 0)];
        }
        Ok(())
    }

    /// Evolves column `j` of `batch` for `dts[j]`.
    pub fn evolve_batch(&self, batch: &mut Mat<C64>, dts: &[f64]) -> Result<()> {
        if batch.nrows() != self.dim() {
            return Err(Error::Shape {
                expected: self.dim(),
                found: batch.nrows(),
            });
        }
        if dts.len() != batch.ncols() {
            return Err(Error::Shape {
                expected: batch.ncols(),
                found: dts.len(),
            });
        }
        if dts.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("non-finite evolution time"));
        }
        let k = batch.ncols();
        match &self.kind {
            Kind::Real(blocks) => {
                for blk in blocks {
                    let d = blk.states.len();
                    // split real and imaginary parts side by side
                    let mut x = Mat::<f64>::zeros(d, 2 * k);
                    for j in 0..k {
                        for (r, &b) in blk.states.iter().enumerate() {
                            let a = batch[(b, j)];
                            x[(r, j)] = a.re;
                            x[(r, k + j)] = a.im;
                        }
                    }
                    let mut c = Mat::<f64>::zeros(d, 2 * k);
                    matmul(&mut c, Accum::Replace, blk.u.transpose(), &x, 1.0, Par::Seq);
                    for j in 0..k {
                        for r in 0..d {
                            let (s, co) = (blk.e[r] * dts[j]).sin_cos();
                            let (re, im) = (c[(r, j)], c[(r, k + j)]);
                            // (re + i im)(cos − i sin)
                            c[(r, j)] = re * co + im * s;
                            c[(r, k + j)] = im * co - re * s;
                        }
                    }
                    matmul(&mut x, Accum::Replace, &blk.u, &c, 1.0, Par::Seq);
                    for j in 0..k {
                        for (r, &b) in blk.states.iter().enumerate() {
                            batch[(b, j)] = C64::new(x[(r, j)], x[(r, k + j)]);
                        }
                    }
                }
            }
            Kind::Complex { u, e } => {
                let mut c = Mat::<C64>::zeros(self.dim(), k);
                matmul(&mut c, Accum::Replace, u.adjoint(), batch.as_ref(), C64::new(1.0, 0.0), Par::Seq);
                for j in 0..k {
                    for r in 0..self.dim() {
                        let (s, co) = (e[r] * dts[j]).sin_cos();
                        c[(r, j)] *= C64::new(co, -s);
                    }
                }
                matmul(batch.as_mut(), Accum::Replace, u, &c, C64::new(1.0, 0.0), Par::Seq);
            }
        }
        Ok(())
    }

    /// Dense `exp(−iHt)`.
    pub fn unitary(&self, t: f64) -> Mat<C64> {
        let dim = self.dim();
        let mut m = Mat::from_fn(dim, dim, |i, j| if i == j { C64::new(1.0, 0.0) } else { ZERO });
        self.evolve_batch(&mut m, &vec![t; dim]).expect("square identity");
        m
    }

    /// Dense `U diag(E) U†`, for checking the decomposition.
    pub fn reconstruct(&self) -> Mat<C64> {
        let dim = self.dim();
        let mut h = Mat::<C64>::zeros(dim, dim);
        match &self.kind {
            Kind::Real(blocks) => {
                for blk in blocks {
                    let d = blk.states.len();
                    let ue = Mat::from_fn(d, d, |i, j| blk.u[(i, j)] * blk.e[j]);
                    let part = &ue * blk.u.transpose();
                    for (r, &br) in blk.states.iter().enumerate() {
                        for (c, &bc) in blk.states.iter().enumerate() {
                            h[(br, bc)] = C64::new(part[(r, c)], 0.0);
                        }
                    }
                }
            }
            Kind::Complex { u, e } => {
                let ue = Mat::from_fn(dim, dim, |i, j| u[(i, j)] * e[j]);
                h = &ue * u.adjoint();
            }
        }
        h
    }
}

/// Copies a state into a one-column batch.
pub fn to_batch(states: &[StateVector]) -> Result<Mat<C64>> {
    let first = states.first().ok_or_else(|| Error::invalid("empty batch"))?;
    let dim = first.dim();
    if states.iter().any(|s| s.dim() != dim) {
        return Err(Error::invalid("mixed state dimensions in batch"));
    }
    Ok(Mat::from_fn(dim, states.len(), |i, j| states[j].amps[i]))
}

/// Bloch vector of `site` for column `col` of a batch.
pub fn batch_spin_expectation(batch: MatRef<'_, C64>, n_spins: usize, col: usize, site: usize) -> [f64; 3] {
    let c = batch.col(col).try_as_col_major().expect("contiguous column").as_slice();
    spin_expectation(c, n_spins, site)
}

/// Pumped-qubit bit pattern: spin `i` is in |0⟩ (`S_z = −1/2`) with
/// probability `eta_pol`. One uniform draw per spin.
pub fn sample_polarization<R: Rng + ?Sized>(rng: &mut R, n_spins: usize, eta_pol: f64) -> Result<Vec<bool>> {
    check_eta(eta_pol)?;
    Ok((0..n_spins).map(|_| rng.random::<f64>() < eta_pol).collect())
}

fn check_eta(eta_pol: f64) -> Result<()> {
    if !(0.5..=1.0).contains(&eta_pol) {
        return Err(Error::invalid(format!("eta_pol must lie in [0.5, 1], got {eta_pol}")));
    }
    Ok(())
}

/// Product state from a pumped pattern (`true` = |0⟩) rotated by `phi` about x.
///
/// |0⟩ is the `S_z = −1/2` state, so `phi = π/2` aligns pumped spins with +y.
pub fn prepare_pattern(pumped: &[bool], phi: f64) -> Result<StateVector> {
    let up: Vec<bool> = pumped.iter().map(|p| !p).collect();
    let mut s = StateVector::product_z(&up);
    if phi != 0.0 {
        apply_ideal_pulse(&mut s, [1.0, 0.0, 0.0], phi)?;
    }
    Ok(s)
}

/// Samples a pumped pattern and prepares the rotated product state.
pub fn prepare_initial<R: Rng + ?Sized>(rng: &mut R, n_spins: usize, phi: f64, eta_pol: f64) -> Result<StateVector> {
    if !(0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&phi) {
        return Err(Error::invalid(format!("phi must lie in [0, π/2], got {phi}")));
    }
    let pattern = sample_polarization(rng, n_spins, eta_pol)?;
    prepare_pattern(&pattern, phi)
}
