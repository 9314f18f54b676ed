//! Y-sublattice generation, random substitution of spins and the
//! concentration ↔ spacing ↔ coupling relations.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::units::mhz;
use crate::{Error, Result};

/// Dipolar prefactor 2π·480 MHz·nm³ (rad·μs⁻¹·nm³).
pub fn dipolar_prefactor() -> f64 {
    mhz(480.0)
}

const SITE_TOL: f64 = 1e-9;

/// Tetragonal host lattice with four Y sites per conventional cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrystalLattice {
    /// Basal constant (nm).
    pub a: f64,
    /// Axial constant along the c-axis = z (nm).
    pub c: f64,
    /// Fractional coordinates of the four Y sites.
    pub basis: [[f64; 3]; 4],
}

impl Default for CrystalLattice {
    fn default() -> Self {
        Self::yvo4()
    }
}

impl CrystalLattice {
    /// YVO₄ with Y on the 4a positions of I4₁/amd.
    pub fn yvo4() -> Self {
        Self {
            a: 0.7119,
            c: 0.6290,
            basis: [
                [0.0, 0.75, 0.125],
                [0.5, 0.75, 0.375],
                [0.0, 0.25, 0.625],
                [0.5, 0.25, 0.875],
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.c > 0.0) {
            return Err(Error::invalid("lattice constants must be positive"));
        }
        if self
            .basis
            .iter()
            .flatten()
            .any(|f| !(0.0..1.0).contains(f))
        {
            return Err(Error::invalid("basis coordinates must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Y sites per nm³.
    pub fn site_density(&self) -> f64 {
        4.0 / (self.a * self.a * self.c)
    }
}

/// Concentration together with the derived spacing and mean coupling.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub n_s: f64,
    pub mean_nn_distance: f64,
    pub mean_j: f64,
}

impl DensitySpec {
    pub fn from_ppm(n_s: f64) -> Result<Self> {
        Ok(Self {
            n_s,
            mean_nn_distance: mean_distance_from_ppm(n_s)?,
            mean_j: mean_j_from_ppm(n_s)?,
        })
    }
}

/// Average nearest-neighbour distance (nm) at concentration `n_s` (ppm):
/// ⟨r⟩ = 0.629 / ((4·n_s)^{1/3}·10⁻²).
pub fn mean_distance_from_ppm(n_s: f64) -> Result<f64> {
    if !(n_s > 0.0) || !n_s.is_finite() {
        return Err(Error::invalid(format!("concentration must be positive, got {n_s}")));
    }
    Ok(0.629 / ((4.0 * n_s).cbrt() * 1e-2))
}

/// Mean interaction J = 2π·480 MHz·nm³ / ⟨r⟩³ as an angular frequency.
pub fn mean_j_from_ppm(n_s: f64) -> Result<f64> {
    let r = mean_distance_from_ppm(n_s)?;
    Ok(dipolar_prefactor() / (r * r * r))
}

/// All Y sites inside the half-open box `[-e/2, e/2)` per axis, with the box
/// centred on a Y ion placed at the origin.
///
/// Ordering is lexicographic in cell index `(i, j, k)` then basis index.
pub fn generate_sites(lattice: &CrystalLattice, extent: [f64; 3]) -> Result<Vec<[f64; 3]>> {
    lattice.validate()?;
    if extent.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::invalid(format!("extent components must be positive, got {extent:?}")));
    }
    let cell = [lattice.a, lattice.a, lattice.c];
    let origin = lattice.basis[0];
    let half = [extent[0] / 2.0, extent[1] / 2.0, extent[2] / 2.0];
    let range = |axis: usize| -> (i64, i64) {
        let lo = (-half[axis] / cell[axis]).floor() as i64 - 1;
        let hi = (half[axis] / cell[axis]).ceil() as i64 + 1;
        (lo, hi)
    };
    let (ri, rj, rk) = (range(0), range(1), range(2));
    let inside = |x: f64, h: f64| x >= -h - SITE_TOL && x < h - SITE_TOL;

    let mut sites = Vec::new();
    for i in ri.0..=ri.1 {
        for j in rj.0..=rj.1 {
            for k in rk.0..=rk.1 {
                for b in &lattice.basis {
                    let p = [
                        (i as f64 + b[0] - origin[0]) * cell[0],
                        (j as f64 + b[1] - origin[1]) * cell[1],
                        (k as f64 + b[2] - origin[2]) * cell[2],
                    ];
                    if (0..3).all(|ax| inside(p[ax], half[ax])) {
                        sites.push(p);
                    }
                }
            }
        }
    }
    if sites.is_empty() {
        return Err(Error::EmptyRegion { extent });
    }
    Ok(sites)
}

/// Positions of the substituted spins. `positions[center_index]` is the
/// readout spin, located at the lattice site nearest the region centre.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    pub positions: Vec<[f64; 3]>,
    pub center_index: usize,
    pub region_extent: [f64; 3],
}

impl SpinConfiguration {
    pub fn new(positions: Vec<[f64; 3]>, center_index: usize, region_extent: [f64; 3]) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("configuration needs at least one spin"));
        }
        if center_index >= positions.len() {
            return Err(Error::invalid("center index out of range"));
        }
        Ok(Self {
            positions,
            center_index,
            region_extent,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.positions.len()
    }

    /// Distance from the readout spin to its closest partner.
    pub fn center_nearest_distance(&self) -> f64 {
        let c = self.positions[self.center_index];
        self.positions
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.center_index)
            .map(|(_, p)| distance(c, *p))
            .fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Precomputed sampling region for a fixed `(lattice, n_s, N)`.
///
/// The region is a cube whose volume holds `N` spins on average at the given
/// concentration; the centre site is always occupied and the remaining
/// `N − 1` spins are drawn uniformly without replacement from the other sites.
#[derive(Clone, Debug)]
pub struct SiteSampler {
    sites: Vec<[f64; 3]>,
    center_site: usize,
    n_spins: usize,
    extent: [f64; 3],
}

impl SiteSampler {
    pub fn new(lattice: &CrystalLattice, n_s: f64, n_spins: usize) -> Result<Self> {
        if n_spins < 2 {
            return Err(Error::invalid(format!("need at least 2 spins, got {n_spins}")));
        }
        if !(n_s > 0.0) || !n_s.is_finite() {
            return Err(Error::invalid(format!("concentration must be positive, got {n_s}")));
        }
        let density = n_s * 1e-6 * lattice.site_density();
        let side = (n_spins as f64 / density).cbrt();
        let extent = [side; 3];
        let sites = generate_sites(lattice, extent)?;
        if sites.len() < n_spins {
            return Err(Error::Configuration {
                available: sites.len(),
                requested: n_spins,
            });
        }
        let center_site = sites
            .iter()
            .enumerate()
            .min_by(|(_, p), (_, q)| norm2(**p).total_cmp(&norm2(**q)))
            .map(|(i, _)| i)
            .expect("non-empty");
        Ok(Self {
            sites,
            center_site,
            n_spins,
            extent,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn extent(&self) -> [f64; 3] {
        self.extent
    }

    /// Draws one configuration. The readout spin is stored first.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> SpinConfiguration {
        let others = self.sites.len() - 1;
        let picks = index::sample(rng, others, self.n_spins - 1);
        let mut positions = Vec::with_capacity(self.n_spins);
        positions.push(self.sites[self.center_site]);
        for idx in picks.iter() {
            // skip over the centre site in the draw
            let site = if idx >= self.center_site { idx + 1 } else { idx };
            positions.push(self.sites[site]);
        }
        SpinConfiguration {
            positions,
            center_index: 0,
            region_extent: self.extent,
        }
    }
}

fn norm2(p: [f64; 3]) -> f64 {
    p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
}

/// One-shot convenience over [`SiteSampler`].
pub fn sample_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    lattice: &CrystalLattice,
    n_s: f64,
    n_spins: usize,
) -> Result<SpinConfiguration> {
    Ok(SiteSampler::new(lattice, n_s, n_spins)?.sample(rng))
}
