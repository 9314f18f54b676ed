//! Exact engine against the pair spin-echo formula.

use std::f64::consts::FRAC_PI_2;

use spinlab::dynamics::prepare_pattern;
use spinlab::hamiltonian::{build_xy_hamiltonian, CouplingMatrix, DisorderField};
use spinlab::oracles::{two_spin_echo_polarization, TwoSpinParams};
use spinlab::sequences::run_spin_echo;
use spinlab::units::mhz;

fn main() -> spinlab::Result<()> {
    let (j, d1, d2) = (mhz(0.35), mhz(0.4), mhz(-0.1));
    let c = CouplingMatrix::from_pairs(2, &[(0, 1, j)])?;
    let h = build_xy_hamiltonian(&c, &DisorderField::from_deltas(vec![d1, d2]))?.h_total;
    let state = prepare_pattern(&[true, true], FRAC_PI_2)?;
    println!("tau_us,engine,formula");
    for i in 0..=10 {
        let tau = 0.5 * i as f64;
        let engine = run_spin_echo(&state, &h, tau, 0)?;
        let formula = two_spin_echo_polarization(TwoSpinParams { j, delta: d1 - d2 }, tau);
        println!("{tau},{engine:.12},{formula:.12}");
    }
    Ok(())
}
