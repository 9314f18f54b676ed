//! Oracle suites: the engine checked against closed forms and identities.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::dynamics::prepare_pattern;
use crate::ensemble::{run_ensemble, EnsembleSpec};
use crate::hamiltonian::{build_xy_hamiltonian, heisenberg_hamiltonian, ising_hamiltonian, CouplingMatrix, DisorderField};
use crate::operators::{Axis, SpinOperator};
use crate::oracles::{
    average_hamiltonian, magnus_error, three_spin_perturbative, three_spin_simulation, three_spin_slow_frequency,
    two_spin_echo_polarization, ThreeSpinParams, TwoSpinParams,
};
use crate::rng::SimRng;
use crate::sequences::{run_spin_echo, PulseTiming, SequenceSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleSuite {
    TwoSpin,
    ThreeSpin,
    Aht,
    Convergence,
}

impl OracleSuite {
    pub const ALL: [OracleSuite; 4] = [
        OracleSuite::TwoSpin,
        OracleSuite::ThreeSpin,
        OracleSuite::Aht,
        OracleSuite::Convergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OracleSuite::TwoSpin => "two-spin",
            OracleSuite::ThreeSpin => "three-spin",
            OracleSuite::Aht => "aht",
            OracleSuite::Convergence => "convergence",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown oracle suite `{s}`")))
    }
}

/// `measured <= limit`, or `measured > limit` when `above` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub label: String,
    pub measured: f64,
    pub limit: Option<f64>,
    pub above: bool,
}

impl CheckLine {
    fn at_most(label: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { label: label.into(), measured, limit: Some(limit), above: false }
    }

    fn above(label: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { label: label.into(), measured, limit: Some(limit), above: true }
    }

    pub fn passed(&self) -> bool {
        match self.limit {
            None => true,
            Some(l) if self.above => self.measured > l,
            Some(l) => self.measured <= l,
        }
    }
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.limit {
            None => write!(f, "INFO {}: {:.3e}", self.label, self.measured),
            Some(l) => write!(
                f,
                "{} {}: {:.3e} {} {:.3e}",
                if self.passed() { "PASS" } else { "FAIL" },
                self.label,
                self.measured,
                if self.above { ">" } else { "<=" },
                l
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub suite: OracleSuite,
    pub lines: Vec<CheckLine>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.lines.iter().all(CheckLine::passed)
    }
}

/// Inputs shared by the suites.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Base ensemble for the convergence family; `n_spins` is overridden.
    pub ensemble: EnsembleSpec,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            ensemble: EnsembleSpec {
                n_realizations: 1000,
                ..EnsembleSpec::default()
            },
        }
    }
}

pub fn run_suite(suite: OracleSuite, opts: &SuiteOptions) -> Result<CheckReport> {
    let lines = match suite {
        OracleSuite::TwoSpin => two_spin(opts.seed)?,
        OracleSuite::ThreeSpin => three_spin()?,
        OracleSuite::Aht => aht(opts.seed)?,
        OracleSuite::Convergence => convergence(&opts.ensemble)?,
    };
    Ok(CheckReport { suite, lines })
}

/// Largest `|engine − formula|` over `samples` random pairs.
pub fn two_spin_max_deviation(seed: u64, samples: usize) -> Result<f64> {
    let mut rng = SimRng::seed_from_u64(seed);
    let state = prepare_pattern(&[true, true], FRAC_PI_2)?;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let j = rng.random_range(-2.0 * PI..2.0 * PI);
        let (d1, d2) = (rng.random_range(-2.0 * PI..2.0 * PI), rng.random_range(-2.0 * PI..2.0 * PI));
        let tau = rng.random_range(0.0..10.0);
        let c = CouplingMatrix::from_pairs(2, &[(0, 1, j)])?;
        let h = build_xy_hamiltonian(&c, &DisorderField::from_deltas(vec![d1, d2]))?.h_total;
        let v = run_spin_echo(&state, &h, tau, 0)?;
        let o = two_spin_echo_polarization(TwoSpinParams { j, delta: d1 - d2 }, tau);
        worst = worst.max((v - o).abs());
    }
    Ok(worst)
}

fn two_spin(seed: u64) -> Result<Vec<CheckLine>> {
    Ok(vec![CheckLine::at_most(
        "engine vs pair formula, 100 samples",
        two_spin_max_deviation(seed, 100)?,
        1e-10,
    )])
}

/// Empirical constant in `max|exact − perturbative| ≈ C·r³`.
pub const THREE_SPIN_DEVIATION_CONSTANT: f64 = 16.0;

/// `(max deviation on [0, 20/J₀], relative slow-frequency error)`.
pub fn three_spin_deviation(p: &ThreeSpinParams) -> Result<(f64, f64)> {
    let j0 = p.j0.abs();
    let taus: Vec<f64> = (0..=2000).map(|i| 20.0 / j0 * i as f64 / 2000.0).collect();
    let sim = three_spin_simulation(p, &taus)?;
    let mut dev: f64 = 0.0;
    for (t, v) in taus.iter().zip(&sim) {
        dev = dev.max((v - three_spin_perturbative(p, *t)?).abs());
    }
    let predicted = (p.j1 * p.j2 / p.j0).abs();
    let w = three_spin_slow_frequency(p, 20.0)?;
    Ok((dev, (w / predicted - 1.0).abs()))
}

fn three_spin() -> Result<Vec<CheckLine>> {
    let mut lines = Vec::new();
    for (a, b) in [(0.2, 0.2), (0.2, -0.3)] {
        let p = ThreeSpinParams::new(1.0, a, b)?;
        let (dev, ferr) = three_spin_deviation(&p)?;
        let r = p.ratio();
        lines.push(CheckLine::at_most(format!("({a}, {b}) max deviation"), dev, 0.1));
        lines.push(CheckLine::at_most(
            format!("({a}, {b}) max deviation vs C·r³"),
            dev,
            THREE_SPIN_DEVIATION_CONSTANT * r.powi(3),
        ));
        lines.push(CheckLine::at_most(format!("({a}, {b}) slow frequency rel. error"), ferr, 0.05));
    }
    Ok(lines)
}

fn random_instance(n: usize, rng: &mut SimRng) -> Result<(CouplingMatrix, Vec<f64>, SpinOperator)> {
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j, rng.random_range(-1.0..1.0)));
        }
    }
    let c = CouplingMatrix::from_pairs(n, &pairs)?;
    let d: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let h = build_xy_hamiltonian(&c, &DisorderField::from_deltas(d.clone()))?.h_total;
    Ok((c, d, h))
}

fn rel(a: &SpinOperator, b: &SpinOperator) -> f64 {
    a.minus(b).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

fn cpmg(tau: f64, epsilon: f64) -> SequenceSpec {
    SequenceSpec::EpsCpmg { tau, epsilon, k: 1, t_p: 0.0, mode: PulseTiming::Ideal }
}

/// Printed first-order term for `ε = −π/2`.
pub fn cpmg_first_order_closed_form(c: &CouplingMatrix, d: &[f64], tau: f64) -> SpinOperator {
    let n = d.len();
    let mut out = SpinOperator::zero(n);
    for i in 0..n {
        out.add_scaled(&SpinOperator::single(n, i, Axis::Y, 1.0), d[i] * d[i]);
        for j in 0..n {
            if i != j {
                let k = d[i] * c.get(i, j);
                out.add_scaled(&SpinOperator::pair(n, i, Axis::Z, j, Axis::Y, 2.0), k);
                out.add_scaled(&SpinOperator::pair(n, i, Axis::Y, j, Axis::Z, -1.0), k);
            }
        }
    }
    out.scaled(tau / 4.0)
}

fn aht(seed: u64) -> Result<Vec<CheckLine>> {
    let mut rng = SimRng::seed_from_u64(seed);
    let (c, _, h) = random_instance(4, &mut rng)?;
    let heis = heisenberg_hamiltonian(&c);
    let iy = ising_hamiltonian(&c, Axis::Y);
    let iz = ising_hamiltonian(&c, Axis::Z);
    let tol = 1e-8;
    let mut lines = Vec::new();

    let r = average_hamiltonian(&cpmg(0.2, -FRAC_PI_2), &h, 1)?;
    lines.push(CheckLine::at_most("eps=-pi/2 H0 = Iy/2 + Heis/2", rel(&r.h0, &iy.scaled(0.5).plus(&heis.scaled(0.5))), tol));
    let r = average_hamiltonian(&cpmg(0.2, 0.0), &h, 1)?;
    lines.push(CheckLine::at_most("eps=0 H0 = Heis - Iz", rel(&r.h0, &heis.minus(&iz)), tol));
    lines.push(CheckLine::at_most("eps=0 |H1|/|H|", r.h1.frobenius_norm() / h.frobenius_norm(), tol));
    let wahuha = SequenceSpec::WahuhaEcho { tau: 0.2, k: 1, t_p: 0.0, mode: PulseTiming::Ideal };
    let r = average_hamiltonian(&wahuha, &h, 0)?;
    lines.push(CheckLine::at_most("WAHUHA H0 = 2/3 Heis", rel(&r.h0, &heis.scaled(2.0 / 3.0)), tol));
    let omega = 2.0 * PI * 10.0;
    let r = average_hamiltonian(&SequenceSpec::SpinLock { omega_y: omega, t: 1.0 }, &h, 0)?;
    let expect = SpinOperator::collective(4, Axis::Y).scaled(omega).plus(&iy.scaled(0.5)).plus(&heis.scaled(0.5));
    lines.push(CheckLine::at_most("spin-lock H0", rel(&r.h0, &expect), tol));

    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (c, d, h) = random_instance(3, &mut rng)?;
        let tau = rng.random_range(0.05..0.5);
        let r = average_hamiltonian(&cpmg(tau, -FRAC_PI_2), &h, 1)?;
        worst = worst.max(rel(&r.h1, &cpmg_first_order_closed_form(&c, &d, tau)));
    }
    lines.push(CheckLine::at_most("eps=-pi/2 H1 closed form, 5 instances", worst, tol));

    let (_, _, h) = random_instance(4, &mut rng)?;
    let errs: Vec<f64> = [0.08, 0.04, 0.02]
        .iter()
        .map(|t| magnus_error(&h, &cpmg(*t, -FRAC_PI_2), 0))
        .collect::<Result<_>>()?;
    for k in 0..2 {
        lines.push(CheckLine::above(format!("Magnus error ratio, halving {}", k + 1), errs[k] / errs[k + 1], 3.5));
    }
    Ok(lines)
}

/// Spin-echo ensemble means for each size on a shared grid.
pub fn size_family(base: &EnsembleSpec, sizes: &[usize], grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    sizes
        .iter()
        .map(|&n| {
            let spec = EnsembleSpec { n_spins: n, ..base.clone() };
            Ok(run_ensemble(&spec, &SequenceSpec::SpinEcho { tau: 0.0 }, grid)?.mean)
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn convergence(base: &EnsembleSpec) -> Result<Vec<CheckLine>> {
    let sizes = [2, 8, 9, 10];
    let grid: Vec<f64> = (0..=40).map(|i| 0.1 * i as f64).collect();
    let m = size_family(base, &sizes, &grid)?;
    Ok(vec![
        CheckLine::above("N=2 vs N=10 max deviation", max_abs_diff(&m[0], &m[3]), 0.1),
        CheckLine::at_most("N=8 vs N=9 max deviation", max_abs_diff(&m[1], &m[2]), 0.05),
        CheckLine::at_most("N=8 vs N=10 max deviation", max_abs_diff(&m[1], &m[3]), 0.05),
        CheckLine::at_most("N=9 vs N=10 max deviation", max_abs_diff(&m[2], &m[3]), 0.05),
    ])
}
