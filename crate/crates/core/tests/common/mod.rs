//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ionmag::adiabatic::RampSchedule;
use ionmag::coupling::CouplingMatrix;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Single-spin operator on ion `ion` of `n` (ion 0 is the leftmost factor).
pub fn embed(n: usize, ion: usize, op: &DMatrix<C64>) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let mut out = DMatrix::<C64>::identity(1, 1);
    for k in 0..n {
        out = out.kronecker(if k == ion { op } else { &id });
    }
    out
}

/// Pauli matrices in the (↓, ↑) = (bit 0, bit 1) order.
pub fn sigma_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn sigma_y() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0)])
}

/// `Σ_{i<j} J σ_yσ_y` and `Σ σ_x` as dense Kronecker sums.
pub fn hamiltonian_parts(j: &CouplingMatrix) -> (DMatrix<C64>, DMatrix<C64>) {
    let n = j.n_ions;
    let dim = 1 << n;
    let ys: Vec<_> = (0..n).map(|i| embed(n, i, &sigma_y())).collect();
    let mut hj = DMatrix::<C64>::zeros(dim, dim);
    for a in 0..n {
        for b in a + 1..n {
            hj += (&ys[a] * &ys[b]) * c(j.j[a][b], 0.0);
        }
    }
    let mut hx = DMatrix::<C64>::zeros(dim, dim);
    for i in 0..n {
        hx += embed(n, i, &sigma_x());
    }
    (hj, hx)
}

/// `exp(−iK)` for Hermitian `K`.
pub fn expm_hermitian(k: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(k.clone());
    let v = &eig.eigenvectors;
    let phases = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| C64::from_polar(1.0, -l)));
    v * DMatrix::from_diagonal(&phases) * v.adjoint()
}

/// Dense propagation over piecewise slices of length ≤ `slice`, each
/// exponentiating the two-point Gauss (fourth-order Magnus) generator.
/// Returns the state at every time in `times` (ascending, starting at 0).
pub fn reference_evolve(
    psi0: &[C64],
    j: &CouplingMatrix,
    schedule: &RampSchedule,
    times: &[f64],
    slice: f64,
) -> Vec<Vec<C64>> {
    let (hj, hx) = hamiltonian_parts(j);
    let h_at = |t: f64| &hj + &hx * c(schedule.field_at(t), 0.0);
    let g = 0.5 - 3f64.sqrt() / 6.0;
    let mut psi = DVector::from_column_slice(psi0);
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let m = (span / slice).ceil() as usize;
            let tau = span / m as f64;
            for s in 0..m {
                let t0 = t + s as f64 * tau;
                let h1 = h_at(t0 + g * tau);
                let h2 = h_at(t0 + (1.0 - g) * tau);
                let comm = &h2 * &h1 - &h1 * &h2;
                let k = (&h1 + &h2) * c(tau / 2.0, 0.0) - comm * c(0.0, 3f64.sqrt() / 12.0 * tau * tau);
                psi = expm_hermitian(&k) * psi;
            }
        }
        t = target;
        out.push(psi.iter().copied().collect());
    }
    out
}

/// Symmetric random couplings with `|J| ≤ scale`, zero diagonal.
pub fn random_couplings(n: usize, scale: f64, seed: u64) -> CouplingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut j = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let v = scale * (2.0 * rng.random::<f64>() - 1.0);
            j[a][b] = v;
            j[b][a] = v;
        }
    }
    CouplingMatrix::from_rows(j).unwrap()
}

/// Largest sine of the principal angles between the column spans of two
/// orthonormal bases, from the singular values of `(I − Q1Q1†)Q2`.
pub fn max_principal_sine(q1: &DMatrix<C64>, q2: &DMatrix<C64>) -> f64 {
    let resid = q2 - q1 * (q1.adjoint() * q2);
    resid.svd(false, false).singular_values.iter().copied().fold(0.0, f64::max)
}

pub fn populations(amps: &[C64]) -> Vec<f64> {
    amps.iter().map(|a| a.norm_sqr()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
