//! Acceptance suite. Prints one PASS/FAIL line per criterion. Exits non-zero
//! on any failure only when `ACCEPTANCE_STRICT` is set, so the remaining test
//! targets still run under `cargo test`.

mod common;

use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{c, max_abs_diff, max_principal_sine, populations, random_couplings, reference_evolve};
use ionmag::adiabatic::{
    duration_ladder, evolve, exact_inverse_return, time_reversal_protocol, uniform_samples, RampSchedule, StepControl,
    DEFAULT_B0,
};
use ionmag::config::ExperimentConfig;
use ionmag::coupling::{coupling_matrix, diagram_preset, CouplingMatrix, RamanDrive, DIAGRAM_PRESETS};
use ionmag::ising::{classical_ground_manifold, quantum_ground_space};
use ionmag::measure::{basis_populations, ground_state_fraction, sx_distribution, Basis};
use ionmag::modes::{transverse_modes, ModeSpectrum};
use ionmag::pipeline::{load_json, run_pipeline, write_run, RunRecord};
use ionmag::state::{initial_state, y_basis_state};
use ionmag::trap::{equilibrium_positions, trap_preset, TrapParams, DEFAULT_RESTARTS};
use ionmag::units::{khz, HBAR};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(id: u32, name: &str, budget: Duration, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = out.pass && in_time;
    let line = format!(
        "criterion {id:2} [{name}]: {} ({}; {:.2}s of {:.0}s budget)\n",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(line.as_bytes());
    let _ = stdout.flush();
    pass
}

fn two_ion_analytic() -> Outcome {
    let mut worst_sep = 0.0f64;
    let mut worst_eig = 0.0f64;
    for az in [4.0, 9.0, 25.0] {
        let trap = TrapParams::ytterbium_khz(500.0, 500.0, 500.0 * f64::sqrt(az)).unwrap();
        let crystal = equilibrium_positions(&trap, 2, 4, 1).unwrap();
        worst_sep = worst_sep.max((crystal.distance(0, 1) - 2f64.powf(1.0 / 3.0)).abs());
        let s = transverse_modes(&crystal, &trap).unwrap();
        worst_eig = worst_eig.max((s.eigenvalues[0] - az).abs()).max((s.eigenvalues[1] - (az - 1.0)).abs());
    }
    check(
        worst_sep < 1e-10 && worst_eig < 1e-10,
        format!("separation error {worst_sep:.1e}, eigenvalue error {worst_eig:.1e}"),
    )
}

fn mode_integrity() -> Outcome {
    let mut worst_orth = 0.0f64;
    let mut worst_resid = 0.0f64;
    let mut worst_com = 0.0f64;
    for name in ["pair2", "rhombus4", "hexagon7", "crystal10", "crystal12"] {
        let p = trap_preset(name).unwrap();
        let trap = p.trap();
        let crystal = equilibrium_positions(&trap, p.n_ions, DEFAULT_RESTARTS, 0).unwrap();
        let s = transverse_modes(&crystal, &trap).unwrap();
        let n = p.n_ions;
        let b = s.as_matrix();
        worst_orth = worst_orth.max((b.transpose() * &b - DMatrix::identity(n, n)).abs().max());
        // stiffness rebuilt from positions
        let mut k = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            k[(i, i)] = trap.a_z();
            for j in 0..n {
                if i != j {
                    let d = crystal.distance(i, j);
                    k[(i, j)] = 1.0 / d.powi(3);
                    k[(i, i)] -= 1.0 / d.powi(3);
                }
            }
        }
        for m in 0..n {
            let v = b.column(m);
            worst_resid = worst_resid.max((&k * v - v * s.eigenvalues[m]).abs().max());
        }
        let uniform = 1.0 / (n as f64).sqrt();
        let com_vec = (0..n).map(|i| (s.b(i, 0) - uniform).abs()).fold(0.0, f64::max);
        worst_com = worst_com.max((s.frequencies[0] / trap.omega_z - 1.0).abs()).max(com_vec);
    }
    check(
        worst_orth < 1e-10 && worst_resid < 1e-10 && worst_com < 1e-10,
        format!("orthonormality {worst_orth:.1e}, residual {worst_resid:.1e}, COM {worst_com:.1e}"),
    )
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
    a.qr().q()
}

fn coupling_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mass = 171.0 * 1.660_539_066_60e-27;
    let trap = TrapParams::ytterbium_khz(500.0, 500.0, 1450.0).unwrap();
    let mut worst = 0.0f64;
    let mut worst_scaling = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(2..=12);
        let q = random_orthogonal(n, &mut rng);
        let mut freqs: Vec<f64> = (0..n).map(|_| khz(1000.0 + 500.0 * rng.random::<f64>())).collect();
        freqs.sort_by(|a, b| b.total_cmp(a));
        let mu = loop {
            let mu = khz(950.0 + 600.0 * rng.random::<f64>());
            if freqs.iter().all(|w| (mu - w).abs() > khz(5.0)) {
                break mu;
            }
        };
        let spectrum = ModeSpectrum {
            n_ions: n,
            eigenvalues: freqs.iter().map(|w| (w / trap.omega_ref()).powi(2)).collect(),
            frequencies: freqs.clone(),
            mode_matrix: (0..n).map(|i| (0..n).map(|m| q[(i, m)]).collect()).collect(),
            trap_ref: trap,
        };
        let rabi: Vec<f64> = (0..n).map(|_| khz(50.0 + 250.0 * rng.random::<f64>())).collect();
        let delta_k = 2.0e7 + 1.0e7 * rng.random::<f64>();
        let drive = RamanDrive::from_wavevector(rabi.clone(), mu, delta_k, mass).unwrap();
        let j = coupling_matrix(&spectrum, &drive).unwrap();

        let mut oracle = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let mut sum = 0.0;
                for m in 0..n {
                    sum += q[(a, m)] * q[(b, m)] / (mu * mu - freqs[m] * freqs[m]);
                }
                oracle[a][b] = rabi[a] * rabi[b] * HBAR * delta_k * delta_k / (2.0 * mass) * sum;
            }
        }
        let scale = oracle.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for a in 0..n {
            for b in 0..n {
                worst = worst.max((j.j[a][b] - oracle[a][b]).abs() / scale);
            }
        }

        let factor = 0.5 + rng.random::<f64>();
        let scaled = RamanDrive::from_wavevector(rabi.iter().map(|w| w * factor).collect(), mu, delta_k, mass).unwrap();
        let js = coupling_matrix(&spectrum, &scaled).unwrap();
        for a in 0..n {
            for b in 0..n {
                worst_scaling = worst_scaling.max((js.j[a][b] - factor * factor * j.j[a][b]).abs() / scale);
            }
        }
    }
    check(
        worst < 1e-12 && worst_scaling < 1e-12,
        format!("max relative error {worst:.1e}, Omega-scaling error {worst_scaling:.1e}"),
    )
}

fn degeneracies() -> Outcome {
    let expected = [
        ("fm4", 2),
        ("neel4", 2),
        ("hex7_case1", 4),
        ("hex7_case2", 2),
        ("hex7_case3", 4),
        ("frustrated10", 8),
    ];
    let mut found = Vec::new();
    let mut ok = true;
    for (name, want) in expected {
        let m = classical_ground_manifold(&diagram_preset(name).unwrap().couplings()).unwrap();
        ok &= m.degeneracy == want;
        found.push(format!("{name}={}", m.degeneracy));
    }
    check(ok, found.join(" "))
}

fn quantum_classical() -> Outcome {
    let mut worst = 0.0f64;
    let mut dims_ok = true;
    for p in DIAGRAM_PRESETS.iter().filter(|p| p.n_ions <= 10) {
        let j = p.couplings();
        let m = classical_ground_manifold(&j).unwrap();
        let (_, q) = quantum_ground_space(&j).unwrap();
        let q1 = q.map(|x| c(x, 0.0));
        let dim = 1 << p.n_ions;
        let q2 = DMatrix::from_fn(dim, m.degeneracy, |r, col| y_basis_state(p.n_ions, m.configs[col]).amplitudes[r]);
        dims_ok &= q1.ncols() == q2.ncols();
        worst = worst.max(max_principal_sine(&q1, &q2));
    }
    check(
        dims_ok && worst < 1e-8,
        format!("subspace dimensions match: {dims_ok}, max principal angle {:.1e}", worst.asin()),
    )
}

fn propagator_equivalence() -> Outcome {
    let n = 6;
    let j = random_couplings(n, khz(3.0), 6);
    let schedule = RampSchedule::standard();
    let times = uniform_samples(schedule.duration, 11);
    let psi0 = initial_state(n).unwrap();
    let traj = evolve(&psi0, &j, &schedule, &times, &StepControl::default()).unwrap();
    let reference = reference_evolve(&psi0.amplitudes, &j, &schedule, &times, 50e-9);
    let mut worst = 0.0f64;
    for (p, r) in traj.points.iter().zip(&reference) {
        worst = worst.max(max_abs_diff(&p.state.probabilities(), &populations(r)));
        let ours = basis_populations(&p.state, Basis::Y).probs;
        let theirs = basis_populations(&ionmag::SpinState::new(n, r.clone()).unwrap(), Basis::Y).probs;
        worst = worst.max(max_abs_diff(&ours, &theirs));
    }
    let drift = traj.max_norm_drift();
    check(
        worst < 1e-6 && drift < 1e-9,
        format!("max population error {worst:.1e}, norm drift {drift:.1e}"),
    )
}

fn adiabatic_limit() -> Outcome {
    let j = diagram_preset("fm4").unwrap().couplings();
    let m = classical_ground_manifold(&j).unwrap();
    let schedule = RampSchedule::standard();
    let ladder = duration_ladder(&j, &schedule, &[1.0, 3.0, 10.0], &m, &StepControl::default()).unwrap();
    let monotone = ladder.windows(2).all(|w| w[1] >= w[0] - 1e-6);
    check(
        schedule.b0 == DEFAULT_B0 && ladder[2] >= 0.99 && monotone && ladder[0] >= 0.73,
        format!(
            "ground population 1x {:.4}, 3x {:.4}, 10x {:.4}; monotone {monotone}",
            ladder[0], ladder[1], ladder[2]
        ),
    )
}

fn frustration_signature() -> Outcome {
    let j = diagram_preset("hex7_case1").unwrap().couplings();
    let m = classical_ground_manifold(&j).unwrap();
    let schedule = RampSchedule::standard().slowed(10.0);
    let traj = evolve(&initial_state(7).unwrap(), &j, &schedule, &[], &StepControl::default()).unwrap();
    let hist = basis_populations(traj.final_state(), Basis::Y);
    let fraction = ground_state_fraction(&hist, &m).unwrap();
    let probs: Vec<f64> = m.configs.iter().map(|&c| hist.probs[c]).collect();
    let lo = probs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = probs.iter().copied().fold(0.0, f64::max);
    let ratio = hi / lo;
    let sx = sx_distribution(traj.final_state()).mean();
    let (a, b, s) = (fraction >= 0.95, m.degeneracy == 4 && ratio <= 2.0, sx.abs() < 0.1);
    check(
        a && b && s,
        format!(
            "manifold fraction {fraction:.4} [{}], max/min config ratio {ratio:.3} [{}], mean S_x {sx:.3} [{}]",
            ok(a),
            ok(b),
            ok(s)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fails"
    }
}

fn time_reversal() -> Outcome {
    let control = StepControl::default();
    let schedule = RampSchedule::standard();
    let j = diagram_preset("hex7_case1").unwrap().couplings();
    let frustrated = time_reversal_protocol(&j, &schedule, &[], &control).unwrap().return_probability;
    let free = time_reversal_protocol(&CouplingMatrix::zeros(7), &schedule, &[], &control)
        .unwrap()
        .return_probability;
    let inverse = exact_inverse_return(&j, &schedule, &control).unwrap();
    check(
        frustrated >= 0.80 && (free - 1.0).abs() < 1e-9 && (inverse - 1.0).abs() < 1e-9,
        format!(
            "return probability {frustrated:.4}, J=0 error {:.1e}, exact-inverse error {:.1e}",
            (free - 1.0).abs(),
            (inverse - 1.0).abs()
        ),
    )
}

fn read_all(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    files.sort();
    files
}

fn determinism_round_trip() -> Outcome {
    let cfg = ExperimentConfig::from_preset("fm4").unwrap();
    let runs: Vec<_> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            let record = run_pipeline(&cfg, None).unwrap();
            write_run(&record, dir.path()).unwrap();
            (record, read_all(dir.path()), dir)
        })
        .collect();
    let identical = runs[0].1 == runs[1].1 && !runs[0].1.is_empty();

    let record = &runs[0].0;
    let reloaded: RunRecord = load_json(&runs[0].2.path().join("record.json")).unwrap();
    let record_ok = &reloaded == record;
    let cfg_back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    let state_json = serde_json::to_string(&record.evolution.final_state).unwrap();
    let state_back: ionmag::SpinState = serde_json::from_str(&state_json).unwrap();
    let max_amp = state_back
        .amplitudes
        .iter()
        .zip(&record.evolution.final_state.amplitudes)
        .map(|(a, b): (&C64, &C64)| (a - b).norm())
        .fold(0.0, f64::max);
    let ok = identical && record_ok && cfg_back == cfg && max_amp <= 1e-12;
    check(
        ok,
        format!(
            "{} files byte-identical: {identical}; record round-trip exact: {record_ok}; config round-trip: {}",
            runs[0].1.len(),
            cfg_back == cfg
        ),
    )
}

fn main() {
    let secs = Duration::from_secs;
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 10] = [
        (1, "two-ion analytic suite", secs(1), two_ion_analytic),
        (2, "mode integrity", secs(5), mode_integrity),
        (3, "coupling oracle", secs(5), coupling_oracle),
        (4, "degeneracy reproduction", secs(10), degeneracies),
        (5, "quantum-classical ground equivalence", secs(120), quantum_classical),
        (6, "propagator equivalence", secs(120), propagator_equivalence),
        (7, "adiabatic limit", secs(300), adiabatic_limit),
        (8, "frustration signature", secs(300), frustration_signature),
        (9, "time-reversal coherence", secs(300), time_reversal),
        (10, "determinism and round-trip", secs(300), determinism_round_trip),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| x == &id.to_string()) {
            continue;
        }
        if !run(id, name, budget, f) {
            failed += 1;
        }
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
