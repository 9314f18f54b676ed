//! Exact-diagonalization laboratory for strongly interacting, disordered
//! dipolar XY spin ensembles.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`] places spins on the Y sublattice of a zircon-type host and
//!   converts doping concentration into mean spacing and mean coupling.
//! * [`hamiltonian`] builds dipolar couplings, Lorentzian on-site disorder and
//!   the XY / XXZ many-body Hamiltonians as symbolic [`operators::SpinOperator`]s.
//! * [`dynamics`] propagates state vectors exactly through cached
//!   eigendecompositions and applies global pulses.
//! * [`sequences`] describes and runs Ramsey, spin-echo, ε-CPMG, WAHUHA-echo,
//!   spin-lock and DTC Floquet protocols.
//! * [`oracles`] holds closed-form and perturbative references and numerical
//!   average Hamiltonian theory.
//! * [`ensemble`] averages seeded realizations deterministically and fits decays.
//! * [`dtc`] turns stroboscopic polarization into spectra and phase diagrams.
//! * [`config`], [`io`] and [`app`] form the command-line front end.
//!
//! Units: time in μs, frequencies stored as angular frequencies in rad/μs,
//! lengths in nm. The crystal c-axis is z.

pub mod app;
pub mod checks;
pub mod config;
pub mod dtc;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod hamiltonian;
pub mod io;
pub mod lattice;
pub(crate) mod linalg;
pub mod operators;
pub mod oracles;
pub mod rng;
pub mod sequences;
pub mod units;

pub use error::{Error, Result};

/// Complex scalar used throughout (identical to `num_complex::Complex<f64>`).
pub type C64 = faer::c64;
