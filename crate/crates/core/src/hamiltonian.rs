//! Dipolar couplings, Lorentzian on-site disorder and the many-body
//! Hamiltonians built from them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::lattice::{dipolar_prefactor, SpinConfiguration};
use crate::operators::{Axis, SpinOperator};
use crate::units::mhz;
use crate::{Error, Result};

/// Largest register the builders accept unless a caller raises it.
pub const DEFAULT_SPIN_CAP: usize = 14;

/// Disorder samples beyond this many FWHM are redrawn.
pub const DEFAULT_TRUNCATION: f64 = 20.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub g_parallel: f64,
    pub g_perp: f64,
    /// μ₀μ_B²g∥²/(4π) in rad·μs⁻¹·nm³.
    pub dipolar_prefactor: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            g_parallel: 6.08,
            g_perp: 0.85,
            dipolar_prefactor: dipolar_prefactor(),
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.dipolar_prefactor > 0.0) {
            return Err(Error::invalid("dipolar prefactor must be positive"));
        }
        if !(self.g_parallel >= self.g_perp && self.g_perp >= 0.0) {
            return Err(Error::invalid("expected g_parallel ≥ g_perp ≥ 0"));
        }
        Ok(())
    }
}

/// `J_ij = −(prefactor/2)(3z² − 1)/r³` with `z` the direction cosine to the c-axis.
pub fn pairwise_coupling(pos_i: [f64; 3], pos_j: [f64; 3], constants: &PhysicalConstants) -> Result<f64> {
    let d = [pos_i[0] - pos_j[0], pos_i[1] - pos_j[1], pos_i[2] - pos_j[2]];
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    if r2 == 0.0 {
        return Err(Error::Singularity(pos_i));
    }
    let r = r2.sqrt();
    let z2 = d[2] * d[2] / r2;
    Ok(-0.5 * constants.dipolar_prefactor * (3.0 * z2 - 1.0) / (r2 * r))
}

/// Symmetric coupling table with zero diagonal, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    n: usize,
    j: Vec<f64>,
}

impl CouplingMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, j: vec![0.0; n * n] }
    }

    /// Builds from an explicit list of `(i, j, J_ij)`; unspecified pairs are 0.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Self::zeros(n);
        for &(i, j, v) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::invalid(format!("bad coupling index pair ({i}, {j})")));
            }
            m.set(i, j, v);
        }
        Ok(m)
    }

    pub fn from_configuration(config: &SpinConfiguration, constants: &PhysicalConstants) -> Result<Self> {
        let n = config.n_spins();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..i {
                let v = pairwise_coupling(config.positions[i], config.positions[j], constants)?;
                m.set(i, j, v);
            }
        }
        Ok(m)
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.j[i * self.n + j] = v;
        self.j[j * self.n + i] = v;
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.j[i * self.n + j]
    }

    /// Iterates `(i, j, J_ij)` for `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| (i + 1..self.n).map(move |j| (i, j, self.get(i, j))))
    }

    /// Pair with the largest |J_ij| over the whole register.
    pub fn strongest_pair(&self) -> Option<(usize, usize, f64)> {
        self.pairs().max_by(|a, b| a.2.abs().total_cmp(&b.2.abs()))
    }

    /// Partner of `site` with the largest |J|.
    pub fn strongest_partner(&self, site: usize) -> Option<(usize, f64)> {
        (0..self.n)
            .filter(|&k| k != site)
            .map(|k| (k, self.get(site, k)))
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
    }

    pub fn is_all_zero(&self) -> bool {
        self.j.iter().all(|v| *v == 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderField {
    pub deltas: Vec<f64>,
    /// Lorentzian FWHM (rad·μs⁻¹).
    pub w: f64,
}

impl DisorderField {
    pub fn zeros(n: usize) -> Self {
        Self {
            deltas: vec![0.0; n],
            w: 0.0,
        }
    }

    pub fn from_deltas(deltas: Vec<f64>) -> Self {
        Self { deltas, w: 0.0 }
    }
}

/// Draws `n` Lorentzian detunings of FWHM `w`, redrawing any sample beyond
/// `truncation · w`.
///
/// Uniforms are consumed the same way for every `w` (including 0), so the
/// generator stays aligned when only the width changes.
pub fn sample_disorder<R: Rng + ?Sized>(rng: &mut R, w: f64, n: usize) -> Result<DisorderField> {
    sample_disorder_truncated(rng, w, n, DEFAULT_TRUNCATION)
}

pub fn sample_disorder_truncated<R: Rng + ?Sized>(
    rng: &mut R,
    w: f64,
    n: usize,
    truncation: f64,
) -> Result<DisorderField> {
    if !(w >= 0.0) || !w.is_finite() {
        return Err(Error::invalid(format!("disorder width must be ≥ 0, got {w}")));
    }
    if !(truncation > 0.0) {
        return Err(Error::invalid("truncation must be positive"));
    }
    let mut deltas = Vec::with_capacity(n);
    for _ in 0..n {
        loop {
            // open interval (0, 1)
            let u: f64 = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            let x = (std::f64::consts::PI * (u - 0.5)).tan();
            if x.abs() * 0.5 <= truncation {
                deltas.push(0.5 * w * x);
                break;
            }
        }
    }
    Ok(DisorderField { deltas, w })
}

/// Labelled pieces of a many-body Hamiltonian.
#[derive(Clone, Debug)]
pub struct HamiltonianTerms {
    pub n_spins: usize,
    pub h_dis: SpinOperator,
    pub h_exchange: SpinOperator,
    pub h_ising_z: SpinOperator,
    pub h_total: SpinOperator,
}

impl HamiltonianTerms {
    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }
}

fn check_shapes(couplings: &CouplingMatrix, disorder: &DisorderField, cap: usize) -> Result<usize> {
    let n = couplings.n();
    if disorder.deltas.len() != n {
        return Err(Error::Shape {
            expected: n,
            found: disorder.deltas.len(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("empty register"));
    }
    if n > cap {
        return Err(Error::Capacity { requested: n, cap });
    }
    Ok(n)
}

/// `Σ Δ_i S_i^axis`
pub fn onsite_hamiltonian(deltas: &[f64], axis: Axis) -> SpinOperator {
    let n = deltas.len();
    let mut h = SpinOperator::zero(n);
    for (i, d) in deltas.iter().enumerate() {
        h.add_scaled(&SpinOperator::single(n, i, axis, 1.0), *d);
    }
    h
}

/// `Σ_{i<j} J_ij S_i^axis S_j^axis`
pub fn ising_hamiltonian(couplings: &CouplingMatrix, axis: Axis) -> SpinOperator {
    let n = couplings.n();
    let mut h = SpinOperator::zero(n);
    for (i, j, v) in couplings.pairs() {
        h.add_scaled(&SpinOperator::pair(n, i, axis, j, axis, 1.0), v);
    }
    h
}

/// `Σ_{i<j} J_ij (S_i^x S_j^x + S_i^y S_j^y)`
pub fn exchange_hamiltonian(couplings: &CouplingMatrix) -> SpinOperator {
    ising_hamiltonian(couplings, Axis::X).plus(&ising_hamiltonian(couplings, Axis::Y))
}

/// `Σ_{i<j} J_ij S_i·S_j`
pub fn heisenberg_hamiltonian(couplings: &CouplingMatrix) -> SpinOperator {
    exchange_hamiltonian(couplings).plus(&ising_hamiltonian(couplings, Axis::Z))
}

/// Disordered dipolar XY model `Σ Δ_i S_i^z + Σ J_ij (S^x S^x + S^y S^y)`.
pub fn build_xy_hamiltonian(couplings: &CouplingMatrix, disorder: &DisorderField) -> Result<HamiltonianTerms> {
    build_xy_hamiltonian_with_cap(couplings, disorder, DEFAULT_SPIN_CAP)
}

pub fn build_xy_hamiltonian_with_cap(
    couplings: &CouplingMatrix,
    disorder: &DisorderField,
    cap: usize,
) -> Result<HamiltonianTerms> {
    let n = check_shapes(couplings, disorder, cap)?;
    let h_dis = onsite_hamiltonian(&disorder.deltas, Axis::Z);
    let h_exchange = exchange_hamiltonian(couplings);
    let h_ising_z = ising_hamiltonian(couplings, Axis::Z);
    let h_total = h_dis.plus(&h_exchange);
    Ok(HamiltonianTerms {
        n_spins: n,
        h_dis,
        h_exchange,
        h_ising_z,
        h_total,
    })
}

/// Field-induced admixture of the clock states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XxzControl {
    /// Field in units where μ_B = 1 and energies are rad·μs⁻¹.
    pub b: f64,
    pub alpha_b: f64,
    /// Qubit transition (rad·μs⁻¹).
    pub omega: f64,
}

impl XxzControl {
    pub const ALPHA_HARD_LIMIT: f64 = 0.3;
    pub const ALPHA_WARN: f64 = 0.1;

    /// Qubit transition 2π × 675 MHz.
    pub fn default_omega() -> f64 {
        mhz(675.0)
    }

    pub fn from_alpha(alpha_b: f64, constants: &PhysicalConstants) -> Self {
        let omega = Self::default_omega();
        Self {
            b: alpha_b * omega / constants.g_parallel,
            alpha_b,
            omega,
        }
    }

    /// `α_B = g∥ μ_B B / ω`
    pub fn from_field(b: f64, omega: f64, constants: &PhysicalConstants) -> Self {
        Self {
            b,
            alpha_b: constants.g_parallel * b / omega,
            omega,
        }
    }
}

/// `(1 − α²/2) H_exchange + 2α² H_Ising^z` plus the unchanged disorder.
pub fn build_xxz_hamiltonian(
    couplings: &CouplingMatrix,
    disorder: &DisorderField,
    control: &XxzControl,
) -> Result<HamiltonianTerms> {
    let a = control.alpha_b;
    if !a.is_finite() || a.abs() > XxzControl::ALPHA_HARD_LIMIT {
        return Err(Error::invalid(format!(
            "admixture ratio {a} outside ±{}",
            XxzControl::ALPHA_HARD_LIMIT
        )));
    }
    if a.abs() > XxzControl::ALPHA_WARN {
        log::warn!("admixture ratio {a} is not small; the perturbative XXZ form may be inaccurate");
    }
    let mut terms = build_xy_hamiltonian(couplings, disorder)?;
    let a2 = a * a;
    terms.h_exchange = terms.h_exchange.scaled(1.0 - 0.5 * a2);
    terms.h_ising_z = terms.h_ising_z.scaled(2.0 * a2);
    terms.h_total = terms.h_dis.plus(&terms.h_exchange).plus(&terms.h_ising_z);
    Ok(terms)
}

/// Lab-frame Hamiltonian with and without the energy-non-conserving
/// flip-flip/flop-flop terms, for checking the secular approximation.
///
/// Returns `(full, secular)` where the full pair term is
/// `(J/2)(S₊S₋ + S₋S₊ + S₊S₊ + S₋S₋) = 2J S^x S^x`.
pub fn build_lab_frame_pair(
    couplings: &CouplingMatrix,
    disorder: &DisorderField,
    omega_q: f64,
) -> Result<(SpinOperator, SpinOperator)> {
    check_shapes(couplings, disorder, DEFAULT_SPIN_CAP)?;
    let shifted: Vec<f64> = disorder.deltas.iter().map(|d| d + omega_q).collect();
    let zeeman = onsite_hamiltonian(&shifted, Axis::Z);
    let full = zeeman.plus(&ising_hamiltonian(couplings, Axis::X).scaled(2.0));
    let secular = zeeman.plus(&exchange_hamiltonian(couplings));
    Ok((full, secular))
}

/// Golden-rule rate ratio Γ(0→Aux)/Γ(0→1) = (g⊥/g∥)⁴.
pub fn aux_leakage_ratio(constants: &PhysicalConstants) -> f64 {
    (constants.g_perp / constants.g_parallel).powi(4)
}

/// Exchange matrix element between a qubit state and the Aux state,
/// `−(1/4)(g⊥/g∥)² J_ij`.
pub fn aux_exchange_element(j_ij: f64, constants: &PhysicalConstants) -> f64 {
    -0.25 * (constants.g_perp / constants.g_parallel).powi(2) * j_ij
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::mean_distance_from_ppm;
    use crate::lattice::mean_j_from_ppm;
    use crate::rng::SimRng;
    use faer::Side;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn eigenvalues(op: &SpinOperator) -> Vec<f64> {
        let m = op.to_dense().unwrap();
        let mut ev: Vec<f64> = m
            .self_adjoint_eigenvalues(Side::Lower)
            .unwrap()
            .into_iter()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn coupling_along_c_axis_equals_mean_j() {
        let k = PhysicalConstants::default();
        let r = mean_distance_from_ppm(46.0).unwrap();
        let j = pairwise_coupling([0.0; 3], [0.0, 0.0, r], &k).unwrap();
        assert!((j.abs() - mean_j_from_ppm(46.0).unwrap()).abs() < 1e-12);
        assert!(j < 0.0);
        let j_down = pairwise_coupling([0.0; 3], [0.0, 0.0, -r], &k).unwrap();
        assert_eq!(j, j_down);
    }

    #[test]
    fn magic_angle_vanishes_and_equator_flips_sign() {
        let k = PhysicalConstants::default();
        // z² = 1/3
        let p = [1.0, 1.0, 1.0];
        assert!(pairwise_coupling([0.0; 3], p, &k).unwrap().abs() < 1e-15);
        let j = pairwise_coupling([0.0; 3], [11.05, 0.0, 0.0], &k).unwrap();
        let expect = 0.5 * mhz(480.0) / 11.05f64.powi(3);
        assert!((j - expect).abs() < 1e-12);
        assert!((j / (2.0 * PI) - 0.178).abs() < 0.001);
    }

    #[test]
    fn coincident_positions_are_singular() {
        let k = PhysicalConstants::default();
        assert!(matches!(pairwise_coupling([1.0; 3], [1.0; 3], &k), Err(Error::Singularity(_))));
    }

    #[test]
    fn zero_width_disorder_is_zero() {
        let mut rng = SimRng::seed_from_u64(1);
        let d = sample_disorder(&mut rng, 0.0, 7).unwrap();
        assert!(d.deltas.iter().all(|x| *x == 0.0));
        assert!(sample_disorder(&mut rng, -1.0, 3).is_err());
    }

    #[test]
    fn disorder_stream_alignment_across_widths() {
        // the same seed gives proportional fields for different widths
        let a = sample_disorder(&mut SimRng::seed_from_u64(9), 1.0, 50).unwrap();
        let b = sample_disorder(&mut SimRng::seed_from_u64(9), 3.0, 50).unwrap();
        for (x, y) in a.deltas.iter().zip(&b.deltas) {
            assert!((3.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn lorentzian_median_is_half_width() {
        let w = mhz(0.65);
        let mut rng = SimRng::seed_from_u64(77);
        let d = sample_disorder(&mut rng, w, 100_000).unwrap();
        let mut mags: Vec<f64> = d.deltas.iter().map(|x| x.abs()).collect();
        mags.sort_by(f64::total_cmp);
        let median = mags[mags.len() / 2];
        // redrawing beyond 40 half-widths conditions the Cauchy law on |x| ≤ 40
        let oracle = 0.5 * w * (40f64.atan() / 2.0).tan();
        assert!((median / oracle - 1.0).abs() < 0.01, "{median} vs {oracle}");
        assert!((median / (w / 2.0) - 1.0).abs() < 0.03);
        assert!(mags.last().unwrap() <= &(20.0 * w));
    }

    #[test]
    fn xy_pair_spectrum() {
        let j = 1.3;
        let c = CouplingMatrix::from_pairs(2, &[(0, 1, j)]).unwrap();
        let h = build_xy_hamiltonian(&c, &DisorderField::zeros(2)).unwrap();
        let ev = eigenvalues(&h.h_total);
        let expect = [-j / 2.0, 0.0, 0.0, j / 2.0];
        for (a, b) in ev.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn single_spin_is_pure_detuning() {
        let c = CouplingMatrix::zeros(1);
        let h = build_xy_hamiltonian(&c, &DisorderField::from_deltas(vec![0.4])).unwrap();
        assert_eq!(h.h_total, SpinOperator::single(1, 0, Axis::Z, 0.4));
    }

    #[test]
    fn capacity_and_shape_errors() {
        let c = CouplingMatrix::zeros(15);
        assert!(matches!(
            build_xy_hamiltonian(&c, &DisorderField::zeros(15)),
            Err(Error::Capacity { .. })
        ));
        let c = CouplingMatrix::zeros(3);
        assert!(matches!(build_xy_hamiltonian(&c, &DisorderField::zeros(2)), Err(Error::Shape { .. })));
    }

    fn random_instance(n: usize, seed: u64) -> (CouplingMatrix, DisorderField) {
        let mut rng = SimRng::seed_from_u64(seed);
        let mut pairs = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                pairs.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
        let c = CouplingMatrix::from_pairs(n, &pairs).unwrap();
        let d = sample_disorder(&mut rng, 0.5, n).unwrap();
        (c, d)
    }

    #[test]
    fn xxz_limits_and_ratio() {
        let (c, d) = random_instance(4, 3);
        let k = PhysicalConstants::default();
        let xy = build_xy_hamiltonian(&c, &d).unwrap();
        let xxz0 = build_xxz_hamiltonian(&c, &d, &XxzControl::from_alpha(0.0, &k)).unwrap();
        assert_eq!(xy.h_total, xxz0.h_total.clone().pruned(0.0));
        let xxz = build_xxz_hamiltonian(&c, &d, &XxzControl::from_alpha(0.1, &k)).unwrap();
        let (i, j, v) = c.pairs().next().unwrap();
        let w_ising = xxz.h_total.coefficient(&[(i, Axis::Z), (j, Axis::Z)]).re / v;
        let w_ex = xxz.h_total.coefficient(&[(i, Axis::X), (j, Axis::X)]).re / v;
        assert!((w_ising / w_ex - 0.0201).abs() < 1e-4);
        assert!(xxz.h_total.is_hermitian(0.0));
        assert!(xxz.h_total.conserves_total_sz());
        assert!(build_xxz_hamiltonian(&c, &d, &XxzControl::from_alpha(0.31, &k)).is_err());
        let f = XxzControl::from_field(4.0, XxzControl::default_omega(), &k);
        assert!((f.alpha_b - k.g_parallel * 4.0 / XxzControl::default_omega()).abs() < 1e-15);
    }

    #[test]
    fn parts_are_hermitian_and_conserve_sz() {
        let (c, d) = random_instance(5, 8);
        let h = build_xy_hamiltonian(&c, &d).unwrap();
        for op in [&h.h_dis, &h.h_exchange, &h.h_ising_z, &h.h_total] {
            assert!(op.is_hermitian(1e-12));
            assert!(op.conserves_total_sz());
            let sz = SpinOperator::collective(5, Axis::Z);
            assert!(op.commutator(&sz).frobenius_norm() < 1e-12);
        }
    }

    #[test]
    fn aux_analytics() {
        let k = PhysicalConstants::default();
        let r = aux_leakage_ratio(&k);
        assert!((r - 3.82e-4).abs() < 0.02e-4, "{r}");
        let iso = PhysicalConstants { g_perp: 6.08, ..k };
        assert_eq!(aux_leakage_ratio(&iso), 1.0);
        let dec = PhysicalConstants { g_perp: 0.0, ..k };
        assert_eq!(aux_leakage_ratio(&dec), 0.0);
        let e = aux_exchange_element(mhz(0.35), &k);
        assert!((e / mhz(1e-3) + 1.71).abs() < 0.01, "{}", e / mhz(1e-3));
        assert_eq!(aux_exchange_element(0.0, &k), 0.0);
        assert!((aux_exchange_element(3.0, &k).abs() / 3.0 - 4.89e-3).abs() < 0.01e-3);
    }

    #[test]
    fn secular_approximation_shifts_levels_by_second_order_only() {
        // a strongly split pair: level shifts from the dropped terms scale as J²/ω
        let j = 0.5;
        let c = CouplingMatrix::from_pairs(3, &[(0, 1, j), (1, 2, -0.7 * j), (0, 2, 0.3 * j)]).unwrap();
        let d = DisorderField::from_deltas(vec![0.1, -0.2, 0.05]);
        let mut last = f64::INFINITY;
        for omega in [50.0, 100.0, 200.0] {
            let (full, secular) = build_lab_frame_pair(&c, &d, omega).unwrap();
            let (ef, es) = (eigenvalues(&full), eigenvalues(&secular));
            let dev = ef.iter().zip(&es).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(dev < 2.0 * j * j / omega, "{dev}");
            assert!(dev < last * 0.6);
            last = dev;
        }
    }

    #[test]
    fn coupling_matrix_helpers() {
        let c = CouplingMatrix::from_pairs(3, &[(0, 1, 0.2), (0, 2, -0.9), (1, 2, 0.5)]).unwrap();
        assert_eq!(c.strongest_pair(), Some((0, 2, -0.9)));
        assert_eq!(c.strongest_partner(1), Some((2, 0.5)));
        assert_eq!(c.get(2, 0), -0.9);
        assert!(CouplingMatrix::from_pairs(2, &[(1, 1, 0.2)]).is_err());
    }
}
