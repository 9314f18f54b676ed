//! Coherence after eight ε-CPMG blocks as the pulse angle is varied.

use std::f64::consts::PI;

use spinlab::ensemble::{run_ensemble, EnsembleSpec};
use spinlab::sequences::{PulseTiming, SequenceSpec};

fn main() -> spinlab::Result<()> {
    let spec = EnsembleSpec { n_realizations: 60, n_spins: 7, ..EnsembleSpec::default() };
    let (tau, k) = (0.3, 8);
    println!("epsilon_over_pi,coherence,stderr");
    for i in -4..=4 {
        let epsilon = i as f64 * PI / 4.0;
        let seq = SequenceSpec::EpsCpmg { tau, epsilon, k, t_p: 0.0, mode: PulseTiming::Ideal };
        let s = run_ensemble(&spec, &seq, &[k as f64 * tau])?;
        println!("{},{:.4},{:.4}", i as f64 / 4.0, s.mean[0], s.stderr_at(0).unwrap_or(0.0));
    }
    Ok(())
}
