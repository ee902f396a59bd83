mod common;

use proptest::prelude::*;

use common::{max_abs_diff, populations, random_couplings, reference_evolve};
use ionmag::adiabatic::{
    energy_expectation, evolve, ground_population, parity_expectation, uniform_samples, RampSchedule, StepControl,
};
use ionmag::coupling::{coupling_matrix, CouplingMatrix, RamanDrive};
use ionmag::ising::{bit_of, classical_ground_manifold, initial_sector, sector_hamiltonian};
use ionmag::measure::{basis_populations, ground_state_fraction, ks_distance, sample_shots, Basis, PopulationHistogram};
use ionmag::modes::transverse_modes;
use ionmag::state::initial_state;
use ionmag::trap::{dimensionless_potential, equilibrium_positions, trap_preset, TrapParams};
use ionmag::units::khz;
use nalgebra::SymmetricEigen;

fn positions(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), n).prop_filter_map("ions too close", |v| {
        let p: Vec<[f64; 2]> = v.into_iter().map(|(x, y)| [x, y]).collect();
        let ok = (0..p.len()).all(|i| (i + 1..p.len()).all(|j| (p[i][0] - p[j][0]).hypot(p[i][1] - p[j][1]) > 0.3));
        ok.then_some(p)
    })
}

fn short_schedule(n: usize) -> RampSchedule {
    RampSchedule::from_end_fraction(khz(29.0) * (n as f64 / 4.0).max(0.5), 20e-6, 0.05).unwrap()
}

/// New configuration bits for ions relabelled so that new ion `a` is old ion `perm[a]`.
fn permute_config(config: usize, perm: &[usize]) -> usize {
    let n = perm.len();
    (0..n).fold(0, |acc, a| acc | (((config >> bit_of(perm[a], n)) & 1) << bit_of(a, n)))
}

fn rotate(p: &[[f64; 2]], theta: f64) -> Vec<[f64; 2]> {
    let (s, c) = theta.sin_cos();
    p.iter().map(|q| [c * q[0] - s * q[1], s * q[0] + c * q[1]]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_finite_differences(
        p in (2usize..7).prop_flat_map(positions),
        fx in 400.0..800.0f64,
        fy in 400.0..800.0f64,
    ) {
        let trap = TrapParams::ytterbium_khz(fx, fy, 3000.0).unwrap();
        let (_, grad) = dimensionless_potential(&p, &trap).unwrap();
        let h = 1e-6;
        for i in 0..p.len() {
            for d in 0..2 {
                let mut up = p.clone();
                let mut down = p.clone();
                up[i][d] += h;
                down[i][d] -= h;
                let fd = (dimensionless_potential(&up, &trap).unwrap().0 - dimensionless_potential(&down, &trap).unwrap().0) / (2.0 * h);
                prop_assert!((fd - grad[i][d]).abs() <= 1e-6 * (1.0 + grad[i][d].abs()), "{fd} vs {}", grad[i][d]);
            }
        }
    }

    #[test]
    fn isotropic_potential_is_rotation_invariant(p in (2usize..8).prop_flat_map(positions), theta in 0.0..std::f64::consts::TAU) {
        let trap = TrapParams::ytterbium_khz(600.0, 600.0, 3000.0).unwrap();
        let e0 = dimensionless_potential(&p, &trap).unwrap().0;
        let e1 = dimensionless_potential(&rotate(&p, theta), &trap).unwrap().0;
        prop_assert!((e0 - e1).abs() <= 1e-12 * e0.abs());
    }

    #[test]
    fn per_ion_rabi_scaling_scales_rows_and_columns(ion in 0usize..4, factor in 0.2..3.0f64, detune in 5.0..80.0f64) {
        let preset = trap_preset("rhombus4").unwrap();
        let trap = preset.trap();
        let crystal = equilibrium_positions(&trap, 4, 8, 0).unwrap();
        let spectrum = transverse_modes(&crystal, &trap).unwrap();
        let mu = spectrum.frequencies[0] + khz(detune);
        let base = RamanDrive::new(vec![khz(200.0); 4], mu, khz(15.0)).unwrap();
        let mut rabi = vec![khz(200.0); 4];
        rabi[ion] *= factor;
        let scaled = RamanDrive::new(rabi, mu, khz(15.0)).unwrap();
        let j0 = coupling_matrix(&spectrum, &base).unwrap();
        let j1 = coupling_matrix(&spectrum, &scaled).unwrap();
        let scale = j0.max_abs();
        for a in 0..4 {
            for b in 0..4 {
                let f = if (a == ion) != (b == ion) { factor } else { 1.0 };
                prop_assert!((j1.j[a][b] - f * j0.j[a][b]).abs() <= 1e-12 * scale * factor.max(1.0));
            }
        }
    }

    #[test]
    fn manifold_is_permutation_covariant(n in 2usize..9, seed in any::<u64>(), perm_seed in any::<u64>()) {
        let j = random_couplings(n, 1.0, seed);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let m = classical_ground_manifold(&j).unwrap();
        let mp = classical_ground_manifold(&j.permuted(&perm)).unwrap();
        let mut mapped: Vec<usize> = m.configs.iter().map(|&c| permute_config(c, &perm)).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, mp.configs);
        prop_assert!((m.energy - mp.energy).abs() <= 1e-12 * (1.0 + m.energy.abs()));
    }

    #[test]
    fn manifold_is_flip_symmetric(n in 2usize..10, seed in any::<u64>()) {
        let m = classical_ground_manifold(&random_couplings(n, 1.0, seed)).unwrap();
        let mask = (1usize << n) - 1;
        for &c in &m.configs {
            prop_assert!(m.contains(c ^ mask));
        }
    }

    #[test]
    fn shots_are_deterministic_and_close_to_the_histogram(
        weights in prop::collection::vec(0.0..1.0f64, 16),
        seed in any::<u64>(),
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-3);
        let total: f64 = weights.iter().sum();
        let hist = PopulationHistogram {
            n_spins: 4,
            basis: Basis::Y,
            probs: weights.iter().map(|w| w / total).collect(),
            labels: (0..16).map(|c| format!("{c}")).collect(),
        };
        let n = 4000;
        let a = sample_shots(&hist, n, 0.0, seed).unwrap();
        let b = sample_shots(&hist, n, 0.0, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.iter().sum::<u64>(), n as u64);
        prop_assert!(ks_distance(&a, &hist.probs) < 3.0 / (n as f64).sqrt());
        for (c, &k) in a.iter().enumerate() {
            if hist.probs[c] == 0.0 {
                prop_assert_eq!(k, 0);
            }
        }
    }

    #[test]
    fn half_prep_error_gives_uniform_marginals(peak in 0usize..32, seed in any::<u64>()) {
        let mut probs = vec![0.0; 32];
        probs[peak] = 1.0;
        let hist = PopulationHistogram { n_spins: 5, basis: Basis::X, probs, labels: vec![String::new(); 32] };
        let n = 8000;
        let counts = sample_shots(&hist, n, 0.5, seed).unwrap();
        for bit in 0..5 {
            let set: u64 = counts.iter().enumerate().filter(|(c, _)| c >> bit & 1 == 1).map(|(_, k)| k).sum();
            let frac = set as f64 / n as f64;
            prop_assert!((frac - 0.5).abs() < 3.0 / (n as f64).sqrt(), "bit {bit}: {frac}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn equilibrium_is_deterministic(seed in any::<u64>(), name in prop::sample::select(vec!["pair2", "rhombus4", "hexagon7"])) {
        let p = trap_preset(name).unwrap();
        let trap = p.trap();
        let a = equilibrium_positions(&trap, p.n_ions, 6, seed).unwrap();
        let b = equilibrium_positions(&trap, p.n_ions, 6, seed).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn evolution_is_unitary_and_conserves_parity(n in 2usize..7, seed in any::<u64>()) {
        let j = random_couplings(n, khz(3.0), seed);
        let schedule = short_schedule(n);
        let traj = evolve(&initial_state(n).unwrap(), &j, &schedule, &uniform_samples(schedule.duration, 5), &StepControl::default()).unwrap();
        prop_assert!(traj.max_norm_drift() < 1e-9);
        let sector = f64::from(initial_sector(n));
        for p in &traj.points {
            prop_assert!((parity_expectation(&p.state) - sector).abs() < 1e-9);
            let hist = basis_populations(&p.state, Basis::Y);
            let mask = (1usize << n) - 1;
            for c in 0..=mask {
                prop_assert!((hist.probs[c] - hist.probs[c ^ mask]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn evolution_matches_dense_reference(n in 2usize..5, seed in any::<u64>()) {
        let j = random_couplings(n, khz(3.0), seed);
        let schedule = short_schedule(n);
        let times = uniform_samples(schedule.duration, 4);
        let psi0 = initial_state(n).unwrap();
        let traj = evolve(&psi0, &j, &schedule, &times, &StepControl::default()).unwrap();
        let reference = reference_evolve(&psi0.amplitudes, &j, &schedule, &times, 50e-9);
        for (p, r) in traj.points.iter().zip(&reference) {
            prop_assert!(max_abs_diff(&p.state.probabilities(), &populations(r)) < 1e-6);
        }
    }

    #[test]
    fn energy_stays_above_the_sector_ground(n in 2usize..7, seed in any::<u64>()) {
        let j = random_couplings(n, khz(3.0), seed);
        let schedule = short_schedule(n);
        let times = uniform_samples(schedule.duration, 5);
        let traj = evolve(&initial_state(n).unwrap(), &j, &schedule, &times, &StepControl::default()).unwrap();
        for p in &traj.points {
            let h = sector_hamiltonian(&j, p.b_field, initial_sector(n)).unwrap();
            let e0 = SymmetricEigen::new(h).eigenvalues.min();
            let e = energy_expectation(&p.state, &j, p.b_field).unwrap();
            prop_assert!(e >= e0 - 1e-9 * (1.0 + e0.abs()), "{e} < {e0}");
        }
    }

    #[test]
    fn fraction_agrees_with_ground_population(n in 2usize..7, seed in any::<u64>()) {
        let j = random_couplings(n, khz(3.0), seed);
        let m = classical_ground_manifold(&j).unwrap();
        let traj = evolve(&initial_state(n).unwrap(), &j, &short_schedule(n), &[], &StepControl::default()).unwrap();
        let state = traj.final_state();
        let a = ground_state_fraction(&basis_populations(state, Basis::Y), &m).unwrap();
        let b = ground_population(state, &m).unwrap();
        prop_assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn zero_couplings_keep_the_transverse_ground_state() {
    let j = CouplingMatrix::zeros(3);
    let traj = evolve(&initial_state(3).unwrap(), &j, &short_schedule(3), &[], &StepControl::default()).unwrap();
    let overlap = traj.final_state().inner(&initial_state(3).unwrap()).norm_sqr();
    assert!((overlap - 1.0).abs() < 1e-12);
}
