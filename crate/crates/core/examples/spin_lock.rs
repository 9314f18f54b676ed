//! Spin locking along y at two drive strengths.

use spinlab::ensemble::{run_ensemble, EnsembleSpec};
use spinlab::sequences::SequenceSpec;
use spinlab::units::mhz;

fn main() -> spinlab::Result<()> {
    let spec = EnsembleSpec { n_realizations: 40, n_spins: 7, ..EnsembleSpec::default() };
    let times: Vec<f64> = (0..=8).map(|i| 2.5 * i as f64).collect();
    for f in [0.5, 10.0] {
        let s = run_ensemble(&spec, &SequenceSpec::SpinLock { omega_y: mhz(f), t: 20.0 }, &times)?;
        let row: Vec<String> = s.mean.iter().map(|v| format!("{v:.3}")).collect();
        println!("Ω = 2π×{f:>4} MHz: {}", row.join(" "));
    }
    Ok(())
}
