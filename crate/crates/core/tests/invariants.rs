use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;
use rand::SeedableRng;
use spinlab::dtc::{dft_spectrum, subharmonic_intensity, SpectrumMode};
use spinlab::dynamics::{prepare_pattern, Propagator, StateVector};
use spinlab::ensemble::{rescale_by_polarization, run_ensemble, EnsembleSpec};
use spinlab::hamiltonian::{
    build_xy_hamiltonian, pairwise_coupling, CouplingMatrix, DisorderField, PhysicalConstants,
};
use spinlab::lattice::{mean_j_from_ppm, sample_configuration, CrystalLattice};
use spinlab::oracles::{two_spin_echo_polarization, TwoSpinParams};
use spinlab::rng::{derive_seed, SimRng};
use spinlab::sequences::{run_spin_echo, PolarizationSeries, SequenceSpec};
use spinlab::C64;

fn instance() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (2usize..=5).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec(-3.0f64..3.0, n * (n - 1) / 2),
            prop::collection::vec(-3.0f64..3.0, n),
        )
    })
}

fn build(n: usize, js: &[f64], ds: &[f64]) -> (CouplingMatrix, spinlab::operators::SpinOperator) {
    let mut pairs = Vec::new();
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j, js[k]));
            k += 1;
        }
    }
    let c = CouplingMatrix::from_pairs(n, &pairs).unwrap();
    let h = build_xy_hamiltonian(&c, &DisorderField::from_deltas(ds.to_vec())).unwrap().h_total;
    (c, h)
}

fn random_state(n: usize, seed: u64) -> StateVector {
    use rand::Rng;
    let mut rng = SimRng::seed_from_u64(seed);
    let amps: Vec<C64> = (0..1usize << n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    StateVector::new(n, amps.into_iter().map(|a| a / norm).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hamiltonian_is_hermitian_and_conserves_sz((n, js, ds) in instance()) {
        let (c, h) = build(n, &js, &ds);
        prop_assert!(h.is_hermitian(1e-12));
        prop_assert!(h.conserves_total_sz());
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
    }

    #[test]
    fn evolution_preserves_norm_and_energy((n, js, ds) in instance(), t in 0.0f64..20.0, seed in any::<u64>()) {
        let (_, h) = build(n, &js, &ds);
        let p = Propagator::new(&h).unwrap();
        let mut psi = random_state(n, seed);
        let e0 = psi.expectation(&h).unwrap();
        p.evolve(&mut psi, t).unwrap();
        prop_assert!((psi.norm() - 1.0).abs() < 1e-10);
        prop_assert!((psi.expectation(&h).unwrap() - e0).abs() < 1e-9 * (1.0 + e0.abs()));
    }

    #[test]
    fn pair_echo_matches_closed_form(j in -6.0f64..6.0, d1 in -6.0f64..6.0, d2 in -6.0f64..6.0, tau in 0.0f64..10.0) {
        let c = CouplingMatrix::from_pairs(2, &[(0, 1, j)]).unwrap();
        let h = build_xy_hamiltonian(&c, &DisorderField::from_deltas(vec![d1, d2])).unwrap().h_total;
        let state = prepare_pattern(&[true, true], FRAC_PI_2).unwrap();
        let engine = run_spin_echo(&state, &h, tau, 0).unwrap();
        let formula = two_spin_echo_polarization(TwoSpinParams { j, delta: d1 - d2 }, tau);
        prop_assert!((engine - formula).abs() < 1e-10);
    }

    #[test]
    fn coupling_is_symmetric_and_scales_as_inverse_cube(
        a in prop::array::uniform3(-5.0f64..5.0),
        b in prop::array::uniform3(-5.0f64..5.0),
        s in 0.5f64..3.0,
    ) {
        let k = PhysicalConstants::default();
        prop_assume!(a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() > 0.25);
        let jab = pairwise_coupling(a, b, &k).unwrap();
        prop_assert!((jab - pairwise_coupling(b, a, &k).unwrap()).abs() <= 1e-12 * jab.abs());
        let scaled = pairwise_coupling(a.map(|x| x * s), b.map(|x| x * s), &k).unwrap();
        prop_assert!((scaled * s.powi(3) - jab).abs() <= 1e-9 * jab.abs().max(1e-12));
    }

    #[test]
    fn mean_coupling_is_linear_in_concentration(ppm in 1.0f64..500.0, f in 0.1f64..10.0) {
        let a = mean_j_from_ppm(ppm).unwrap();
        let b = mean_j_from_ppm(ppm * f).unwrap();
        prop_assert!((b / a - f).abs() < 1e-9 * f);
    }

    #[test]
    fn spectrum_obeys_parseval_and_mirror_symmetry(values in prop::collection::vec(-1.0f64..1.0, 4..40)) {
        let mut values = values;
        if values.len() % 2 == 1 {
            values.pop();
        }
        let k = values.len() as f64;
        let s = dft_spectrum(&PolarizationSeries::new(values.clone(), 0.1).unwrap(), SpectrumMode::Signed).unwrap();
        let power: f64 = s.intensity.iter().sum();
        let energy: f64 = values.iter().map(|v| v * v).sum::<f64>() / k;
        prop_assert!((power - energy).abs() < 1e-10);
        let len = s.nu.len();
        for j in 1..len {
            prop_assert!((s.intensity[j] - s.intensity[len - j]).abs() < 1e-10);
        }
    }

    #[test]
    fn alternating_series_is_pure_subharmonic(a in 0.01f64..1.0, half in 2usize..40) {
        let values: Vec<f64> = (0..2 * half).map(|i| if i % 2 == 0 { -a } else { a }).collect();
        let s = dft_spectrum(&PolarizationSeries::new(values, 0.0).unwrap(), SpectrumMode::Signed).unwrap();
        prop_assert!((subharmonic_intensity(&s).unwrap() - a * a).abs() < 1e-12);
        let contrast = dft_spectrum(&PolarizationSeries::new(vec![a; 2 * half], 0.0).unwrap(), SpectrumMode::Signed).unwrap();
        prop_assert!(subharmonic_intensity(&contrast).unwrap() < 1e-20);
    }

    #[test]
    fn derived_seeds_are_pure(master in any::<u64>(), path in prop::collection::vec(any::<u64>(), 0..4)) {
        prop_assert_eq!(derive_seed(master, &path), derive_seed(master, &path));
    }

    #[test]
    fn sampled_configurations_respect_lattice_sites(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = SimRng::seed_from_u64(seed);
        let lattice = CrystalLattice::yvo4();
        let cfg = sample_configuration(&mut rng, &lattice, 46.0, n).unwrap();
        prop_assert_eq!(cfg.n_spins(), n);
        let min_yy = ((lattice.a / 2.0).powi(2) + (lattice.c / 4.0).powi(2)).sqrt();
        for i in 0..n {
            for j in i + 1..n {
                let d: f64 = (0..3).map(|k| (cfg.positions[i][k] - cfg.positions[j][k]).powi(2)).sum::<f64>().sqrt();
                prop_assert!(d >= min_yy - 1e-12, "sites closer than the lattice allows: {}", d);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn ensemble_coherence_is_bounded_and_reproducible(seed in any::<u64>(), ppm in 10.0f64..80.0) {
        let spec = EnsembleSpec { n_realizations: 6, master_seed: seed, n_spins: 4, ppm, ..EnsembleSpec::default() };
        let times = [0.0, 0.5, 1.5, 3.0];
        let seq = SequenceSpec::SpinEcho { tau: 0.0 };
        let a = run_ensemble(&spec, &seq, &times).unwrap();
        let b = run_ensemble(&spec, &seq, &times).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!((a.mean[0] - 1.0).abs() < 1e-12);
        prop_assert!(a.mean.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        let same = rescale_by_polarization(&a, 1.0).unwrap();
        prop_assert_eq!(same.mean, a.mean);
    }
}

#[test]
fn echo_refocuses_static_detuning() {
    let h = spinlab::operators::SpinOperator::single(1, 0, spinlab::operators::Axis::Z, 2.0 * PI * 3.7);
    let state = prepare_pattern(&[true], FRAC_PI_2).unwrap();
    for tau in [0.1, 1.0, 7.3] {
        assert!((run_spin_echo(&state, &h, tau, 0).unwrap() - 1.0).abs() < 1e-12);
    }
}
