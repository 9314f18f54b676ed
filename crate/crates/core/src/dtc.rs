//! Stroboscopic spectra and discrete-time-crystal phase diagrams.
//!
//! Spectra use `S(ν) = (1/K) Σ_k P(k) e^{−2πiνk}` on the grid `ν = j/K`,
//! so a perfect period-two alternation of the signed polarization gives
//! `|S(1/2)|² = 1`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::ensemble::{map_realizations, EnsembleSpec};
use crate::sequences::{DtcJob, DtcSimulator};
use crate::units::mhz;
use crate::{Error, Result, C64};

pub use crate::sequences::PolarizationSeries;

/// Which series the spectrum is taken of.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMode {
    /// `(C₊ − C₋)/(C₊ + C₋)`, which alternates sign in the crystal phase.
    #[default]
    Signed,
    /// Its magnitude `P(k)`.
    Contrast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Frequencies in units of the inverse cycle period.
    pub nu: Vec<f64>,
    pub intensity: Vec<f64>,
}

fn series_values(series: &PolarizationSeries, mode: SpectrumMode) -> Vec<f64> {
    match mode {
        SpectrumMode::Signed => series.signed.clone(),
        SpectrumMode::Contrast => series.contrast(),
    }
}

/// `S(ν)` of a sequence indexed from `k = 1`.
pub fn dft_at(values: &[f64], nu: f64) -> C64 {
    let k_len = values.len() as f64;
    values
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let ph = -2.0 * PI * nu * (i + 1) as f64;
            C64::new(p * ph.cos(), p * ph.sin())
        })
        .fold(C64::new(0.0, 0.0), |a, b| a + b)
        / k_len
}

/// Spectrum on the native grid `ν = j/K`.
pub fn dft_spectrum(series: &PolarizationSeries, mode: SpectrumMode) -> Result<Spectrum> {
    if series.len() < 4 {
        return Err(Error::invalid(format!("spectra need at least 4 cycles, got {}", series.len())));
    }
    let values = series_values(series, mode);
    let k = values.len();
    let nu: Vec<f64> = (0..k).map(|j| j as f64 / k as f64).collect();
    let intensity = nu.iter().map(|n| dft_at(&values, *n).norm_sqr()).collect();
    Ok(Spectrum { nu, intensity })
}

/// `|S(1/2)|²`; the grid must contain `ν = 1/2`.
pub fn subharmonic_intensity(spectrum: &Spectrum) -> Result<f64> {
    spectrum
        .nu
        .iter()
        .position(|n| (n - 0.5).abs() < 1e-12)
        .map(|i| spectrum.intensity[i])
        .ok_or_else(|| Error::invalid("frequency grid lacks ν = 1/2 (odd cycle count)"))
}

/// Drive and analysis settings of a DTC run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DtcProtocol {
    pub omega_y: f64,
    pub k_cycles: usize,
    pub phi: f64,
    pub threshold: f64,
    pub mode: SpectrumMode,
}

impl Default for DtcProtocol {
    fn default() -> Self {
        Self {
            omega_y: mhz(10.0),
            k_cycles: 60,
            phi: FRAC_PI_2,
            threshold: 0.4,
            mode: SpectrumMode::Signed,
        }
    }
}

impl DtcProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.k_cycles < 8 || self.k_cycles % 2 != 0 {
            return Err(Error::invalid(format!(
                "k_cycles must be even and at least 8, got {}",
                self.k_cycles
            )));
        }
        if !(0.0..=FRAC_PI_2 + 1e-12).contains(&self.phi) {
            return Err(Error::invalid(format!("phi must lie in [0, π/2], got {}", self.phi)));
        }
        if !self.omega_y.is_finite() {
            return Err(Error::invalid("omega_y must be finite"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("threshold must be positive"));
        }
        Ok(())
    }
}

/// Ensemble-averaged signed series of one `(τ, ε)` point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub tau: f64,
    pub epsilon: f64,
    /// Mean signed series, divided by `2η − 1`.
    pub series: PolarizationSeries,
    /// `S(1/2)` of each realization's signed series has this spread over `√n`.
    pub s_half_stderr: Option<f64>,
}

impl SeriesStats {
    pub fn spectrum(&self, mode: SpectrumMode) -> Result<Spectrum> {
        dft_spectrum(&self.series, mode)
    }

    pub fn intensity(&self, mode: SpectrumMode) -> Result<f64> {
        subharmonic_intensity(&self.spectrum(mode)?)
    }

    /// Delta-method error of the signed `|S(1/2)|²`.
    pub fn intensity_stderr(&self) -> Option<f64> {
        let s = dft_at(&self.series.signed, 0.5).re;
        self.s_half_stderr.map(|e| 2.0 * s.abs() * e)
    }
}

/// Runs every `(τ, ε)` job on every realization. All jobs of a realization
/// share its positions, detunings and polarization pattern.
pub fn ensemble_series(spec: &EnsembleSpec, jobs: &[(f64, f64)], protocol: &DtcProtocol) -> Result<Vec<SeriesStats>> {
    protocol.validate()?;
    if jobs.is_empty() {
        return Err(Error::invalid("no (tau, epsilon) points"));
    }
    for (tau, eps) in jobs {
        if !(*tau >= 0.0) || !(eps.abs() <= PI) {
            return Err(Error::invalid(format!("invalid DTC point tau {tau}, epsilon {eps}")));
        }
    }
    let k = protocol.k_cycles;
    let dtc_jobs: Vec<DtcJob> = jobs
        .iter()
        .map(|(tau, epsilon)| DtcJob {
            tau: *tau,
            epsilon: *epsilon,
            phi: protocol.phi,
        })
        .collect();
    let rows = map_realizations(spec, |real| {
        let h = real.hamiltonian()?;
        let sim = DtcSimulator::new(&h, protocol.omega_y, real.center())?;
        let branches = real.center_branches(spec.eta_pol);
        let patterns: Vec<Vec<bool>> = branches.iter().map(|(p, _)| p.clone()).collect();
        let out = sim.run(&patterns, &dtc_jobs, k)?;
        let mut flat = vec![0.0; jobs.len() * k];
        for ((_, w), per_job) in branches.iter().zip(&out) {
            for (j, s) in per_job.iter().enumerate() {
                for (c, v) in s.signed.iter().enumerate() {
                    flat[j * k + c] += w * v;
                }
            }
        }
        Ok(flat)
    })?;
    let n = rows.len() as f64;
    let norm = 1.0 / (2.0 * spec.eta_pol - 1.0);
    let mut out = Vec::with_capacity(jobs.len());
    for (j, (tau, epsilon)) in jobs.iter().enumerate() {
        let mut mean = vec![0.0; k];
        for r in &rows {
            for c in 0..k {
                mean[c] += r[j * k + c];
            }
        }
        mean.iter_mut().for_each(|v| *v *= norm / n);
        let s_half_stderr = (rows.len() > 1).then(|| {
            let per: Vec<f64> = rows.iter().map(|r| norm * dft_at(&r[j * k..(j + 1) * k], 0.5).re).collect();
            let mu = per.iter().sum::<f64>() / n;
            let var = per.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        out.push(SeriesStats {
            tau: *tau,
            epsilon: *epsilon,
            series: PolarizationSeries::new(mean, *tau)?,
            s_half_stderr,
        });
    }
    Ok(out)
}

/// Threshold crossing of one τ row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub tau: f64,
    /// Mean of the crossings found on the two sides of `ε = 0`.
    pub eps_star: Option<f64>,
    pub eps_plus: Option<f64>,
    pub eps_minus: Option<f64>,
    /// Intensity rises above the threshold again beyond the crossing.
    pub reentrant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub tau_grid: Vec<f64>,
    pub eps_grid: Vec<f64>,
    /// `intensity[i][j]` at `(tau_grid[i], eps_grid[j])`.
    pub intensity: Vec<Vec<f64>>,
    pub intensity_stderr: Option<Vec<Vec<f64>>>,
    pub boundary: Vec<BoundaryPoint>,
    pub threshold: f64,
    pub phi: f64,
}

impl PhaseDiagram {
    /// Builds the boundary from an intensity matrix.
    pub fn from_intensity(
        tau_grid: Vec<f64>,
        eps_grid: Vec<f64>,
        intensity: Vec<Vec<f64>>,
        threshold: f64,
        phi: f64,
    ) -> Result<Self> {
        if intensity.len() != tau_grid.len() {
            return Err(Error::Shape {
                expected: tau_grid.len(),
                found: intensity.len(),
            });
        }
        if let Some(row) = intensity.iter().find(|r| r.len() != eps_grid.len()) {
            return Err(Error::Shape {
                expected: eps_grid.len(),
                found: row.len(),
            });
        }
        let boundary = tau_grid
            .iter()
            .zip(&intensity)
            .map(|(tau, row)| row_boundary(*tau, &eps_grid, row, threshold))
            .collect();
        Ok(Self {
            tau_grid,
            eps_grid,
            intensity,
            intensity_stderr: None,
            boundary,
            threshold,
            phi,
        })
    }

    /// Fraction of grid cells at or above the threshold.
    pub fn subharmonic_fraction(&self) -> f64 {
        let total = self.tau_grid.len() * self.eps_grid.len();
        let above = self.intensity.iter().flatten().filter(|v| **v >= self.threshold).count();
        above as f64 / total.max(1) as f64
    }
}

/// Outward scan on one side: `side` holds `(|ε|, intensity)` sorted by `|ε|`.
fn side_crossing(side: &[(f64, f64)], threshold: f64) -> (Option<f64>, bool) {
    let Some(&(_, first)) = side.first() else {
        return (None, false);
    };
    if first < threshold {
        return (None, false);
    }
    for w in 1..side.len() {
        let (e0, i0) = side[w - 1];
        let (e1, i1) = side[w];
        if i1 < threshold {
            // linear interpolation of the crossing between the two points
            let eps = e0 + (i0 - threshold) / (i0 - i1) * (e1 - e0);
            let reentrant = side[w + 1..].iter().any(|(_, i)| *i >= threshold);
            return (Some(eps), reentrant);
        }
    }
    (None, false)
}

fn row_boundary(tau: f64, eps: &[f64], row: &[f64], threshold: f64) -> BoundaryPoint {
    let mut plus: Vec<(f64, f64)> = eps.iter().zip(row).filter(|(e, _)| **e >= 0.0).map(|(e, i)| (*e, *i)).collect();
    let mut minus: Vec<(f64, f64)> = eps.iter().zip(row).filter(|(e, _)| **e <= 0.0).map(|(e, i)| (-*e, *i)).collect();
    plus.sort_by(|a, b| a.0.total_cmp(&b.0));
    minus.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (eps_plus, r_plus) = if plus.len() >= 2 { side_crossing(&plus, threshold) } else { (None, false) };
    let (eps_minus, r_minus) = if minus.len() >= 2 { side_crossing(&minus, threshold) } else { (None, false) };
    let eps_star = match (eps_plus, eps_minus) {
        (Some(a), Some(b)) => Some(0.5 * (a + b)),
        (a, b) => a.or(b),
    };
    BoundaryPoint {
        tau,
        eps_star,
        eps_plus,
        eps_minus,
        reentrant: r_plus || r_minus,
    }
}

/// `|S(1/2)|²` over the `(τ, ε)` grid and its threshold boundary.
pub fn build_phase_diagram(
    spec: &EnsembleSpec,
    tau_grid: &[f64],
    eps_grid: &[f64],
    protocol: &DtcProtocol,
) -> Result<PhaseDiagram> {
    if tau_grid.is_empty() || eps_grid.is_empty() {
        return Err(Error::invalid("phase diagram grids must be non-empty"));
    }
    let jobs: Vec<(f64, f64)> = tau_grid
        .iter()
        .flat_map(|t| eps_grid.iter().map(move |e| (*t, *e)))
        .collect();
    let stats = ensemble_series(spec, &jobs, protocol)?;
    let ne = eps_grid.len();
    let mut intensity = Vec::with_capacity(tau_grid.len());
    let mut errs = Vec::with_capacity(tau_grid.len());
    for row in stats.chunks(ne) {
        intensity.push(row.iter().map(|s| s.intensity(protocol.mode)).collect::<Result<Vec<_>>>()?);
        errs.push(row.iter().map(|s| s.intensity_stderr()).collect::<Option<Vec<_>>>());
    }
    let mut d = PhaseDiagram::from_intensity(
        tau_grid.to_vec(),
        eps_grid.to_vec(),
        intensity,
        protocol.threshold,
        protocol.phi,
    )?;
    if protocol.mode == SpectrumMode::Signed {
        d.intensity_stderr = errs.into_iter().collect();
    }
    Ok(d)
}

/// Least-squares slope of `ε*(τ)` over rows that have a boundary.
pub fn boundary_slope(diagram: &PhaseDiagram) -> Result<f64> {
    let pts: Vec<(f64, f64)> = diagram.boundary.iter().filter_map(|b| b.eps_star.map(|e| (b.tau, e))).collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope needs at least 3 boundary points, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("boundary points share one tau".into()));
    }
    Ok(pts.iter().map(|p| (p.0 - mt) * (p.1 - me)).sum::<f64>() / sxx)
}
