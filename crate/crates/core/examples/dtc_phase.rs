//! Coarse time-crystal phase diagram and its boundary.

use std::f64::consts::PI;

use spinlab::dtc::{boundary_slope, build_phase_diagram, DtcProtocol};
use spinlab::ensemble::EnsembleSpec;

fn main() -> spinlab::Result<()> {
    let spec = EnsembleSpec { n_realizations: 20, n_spins: 6, ..EnsembleSpec::default() };
    let taus: Vec<f64> = (0..5).map(|i| 0.2 * i as f64).collect();
    let eps: Vec<f64> = (0..6).map(|j| 0.03 * j as f64 * PI).collect();
    let d = build_phase_diagram(&spec, &taus, &eps, &DtcProtocol::default())?;
    println!("rows τ (ns), columns ε/π = {:?}", eps.iter().map(|e| e / PI).collect::<Vec<_>>());
    for (i, row) in d.intensity.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
        let star = d.boundary[i].eps_star.map_or("-".to_string(), |e| format!("{:.3}", e / PI));
        println!("{:>4.0}: {}  ε*/π = {star}", taus[i] * 1e3, cells.join(" "));
    }
    match boundary_slope(&d) {
        Ok(s) => println!("boundary slope {s:.4} rad/μs"),
        Err(e) => println!("no slope: {e}"),
    }
    Ok(())
}
