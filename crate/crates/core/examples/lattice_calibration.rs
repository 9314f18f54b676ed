//! Concentration to coupling scale, and one sampled cluster.

use rand::SeedableRng;
use spinlab::hamiltonian::{CouplingMatrix, PhysicalConstants};
use spinlab::lattice::{mean_distance_from_ppm, mean_j_from_ppm, sample_configuration, CrystalLattice};
use spinlab::rng::SimRng;
use spinlab::units::to_mhz;

fn main() -> spinlab::Result<()> {
    for ppm in [10.0, 25.0, 46.0, 100.0] {
        println!(
            "{ppm:>5} ppm: mean distance {:.2} nm, mean J = 2π×{:.3} MHz",
            mean_distance_from_ppm(ppm)?,
            to_mhz(mean_j_from_ppm(ppm)?)
        );
    }

    let mut rng = SimRng::seed_from_u64(1);
    let cfg = sample_configuration(&mut rng, &CrystalLattice::yvo4(), 46.0, 9)?;
    let c = CouplingMatrix::from_configuration(&cfg, &PhysicalConstants::default())?;
    let (partner, j) = c.strongest_partner(cfg.center_index).expect("cluster has partners");
    println!(
        "9-spin cluster: nearest partner of the readout spin at {:.2} nm, strongest coupling to spin {partner} = 2π×{:.3} MHz",
        cfg.center_nearest_distance(),
        to_mhz(j)
    );
    Ok(())
}
