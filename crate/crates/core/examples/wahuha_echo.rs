//! WAHUHA decoupling compared with a plain echo at the same total time.

use spinlab::ensemble::{run_ensemble, EnsembleSpec};
use spinlab::sequences::{PulseTiming, SequenceSpec};

fn main() -> spinlab::Result<()> {
    let spec = EnsembleSpec { n_realizations: 60, n_spins: 7, ..EnsembleSpec::default() };
    let t = 6.0;
    let echo = run_ensemble(&spec, &SequenceSpec::SpinEcho { tau: 0.0 }, &[t])?;
    println!("spin echo at {t} μs: {:.3}", echo.mean[0]);
    for tau in [0.2, 0.1, 0.05] {
        let k = (t / (6.0 * tau)).round() as usize;
        let seq = SequenceSpec::WahuhaEcho { tau, k, t_p: 0.0, mode: PulseTiming::Ideal };
        let s = run_ensemble(&spec, &seq, &[k as f64 * 6.0 * tau])?;
        println!("WAHUHA τ = {:>3.0} ns, {k:>3} cycles: {:.3}", tau * 1e3, s.mean[0]);
    }
    Ok(())
}
