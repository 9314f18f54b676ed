//! Average Hamiltonians of the decoupling sequences on a random cluster,
//! expressed as Heisenberg, Ising and on-site weights.

use std::f64::consts::FRAC_PI_2;

use spinlab::ensemble::{EnsembleSpec, RealizationSource};
use spinlab::oracles::{average_hamiltonian, magnus_error};
use spinlab::sequences::{PulseTiming, SequenceSpec};
use spinlab::units::mhz;

fn main() -> spinlab::Result<()> {
    let spec = EnsembleSpec { n_spins: 4, ..EnsembleSpec::default() };
    let real = RealizationSource::new(&spec)?.realization(0)?;
    let h = real.hamiltonian()?;
    let deltas = real.disorder.deltas.clone();
    let cpmg = |tau, epsilon| SequenceSpec::EpsCpmg { tau, epsilon, k: 1, t_p: 0.0, mode: PulseTiming::Ideal };
    // the on-site family is the detuning pattern, or the uniform drive for spin lock
    let drive = vec![mhz(10.0); deltas.len()];
    let sequences = [
        ("ε-CPMG ε = 0", cpmg(0.3, 0.0), &deltas),
        ("ε-CPMG ε = −π/2", cpmg(0.3, -FRAC_PI_2), &deltas),
        ("WAHUHA", SequenceSpec::WahuhaEcho { tau: 0.05, k: 1, t_p: 0.0, mode: PulseTiming::Ideal }, &deltas),
        ("spin lock", SequenceSpec::SpinLock { omega_y: mhz(10.0), t: 1.0 }, &drive),
    ];
    for (name, seq, field) in &sequences {
        let w = average_hamiltonian(seq, &h, 0)?.decompose(&real.couplings, field)?;
        println!(
            "{name:<16} Heis {:+.3}  Ising xyz {:+.3} {:+.3} {:+.3}  on-site xyz {:+.3} {:+.3} {:+.3}  residual {:.1e}",
            w.heisenberg, w.ising[0], w.ising[1], w.ising[2], w.onsite[0], w.onsite[1], w.onsite[2], w.relative_residual
        );
    }
    for tau in [0.02, 0.01, 0.005] {
        println!("τ = {tau} μs: ‖U − exp(−iH0 T)‖ = {:.3e}", magnus_error(&h, &cpmg(tau, -FRAC_PI_2), 0)?);
    }
    Ok(())
}
