//! Transverse (out-of-plane) normal modes of a planar crystal.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trap::{transverse_stiffness, IonCrystal, TrapParams};
use crate::units::to_mhz;

/// Relative eigenvalue spread below which modes are treated as degenerate.
const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpectrum {
    pub n_ions: usize,
    /// ω_m in rad/s, descending; index 0 is the COM mode.
    pub frequencies: Vec<f64>,
    /// Dimensionless stiffness eigenvalues λ_m, ω_m = ω_ref·√λ_m.
    pub eigenvalues: Vec<f64>,
    /// Row i, column m: participation `b_{i,m}` of ion i in mode m.
    pub mode_matrix: Vec<Vec<f64>>,
    pub trap_ref: TrapParams,
}

impl ModeSpectrum {
    pub fn b(&self, ion: usize, mode: usize) -> f64 {
        self.mode_matrix[ion][mode]
    }

    pub fn mode_vector(&self, mode: usize) -> Vec<f64> {
        self.mode_matrix.iter().map(|row| row[mode]).collect()
    }

    pub fn as_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_ions, self.n_ions, |i, m| self.mode_matrix[i][m])
    }

    pub fn frequencies_mhz(&self) -> Vec<f64> {
        self.frequencies.iter().map(|&w| to_mhz(w)).collect()
    }
}

/// Flips the sign so the largest-magnitude entry (first one on ties) is positive.
fn fix_sign(v: &mut DVector<f64>) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(pivot) = v.iter().find(|x| x.abs() >= max - 1e-9) {
        if *pivot < 0.0 {
            v.neg_mut();
        }
    }
}

fn rounded_key(v: &DVector<f64>) -> Vec<i64> {
    v.iter().map(|x| (x * 1e8).round() as i64).collect()
}

/// Replaces an eigenbasis of a degenerate subspace by the Gram-Schmidt
/// orthonormalization of the unit vectors e_0, e_1, ... projected into it.
fn canonical_subspace_basis(basis: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = basis[0].len();
    let d = basis.len();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(d);
    for k in 0..n {
        if out.len() == d {
            break;
        }
        let mut v = DVector::zeros(n);
        for b in basis {
            v.axpy(b[k], b, 1.0);
        }
        for _ in 0..2 {
            for u in &out {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            out.push(v / norm);
        }
    }
    out
}

pub fn transverse_modes(crystal: &IonCrystal, trap: &TrapParams) -> Result<ModeSpectrum> {
    let n = crystal.n_ions;
    let k = transverse_stiffness(&crystal.positions, trap.a_z());
    let eig = SymmetricEigen::new(k);

    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(m, &lam)| (lam, eig.eigenvectors.column(m).into_owned()))
        .collect();
    if let Some(&(lam, _)) = pairs.iter().find(|(lam, _)| *lam <= 0.0) {
        return Err(Error::UnstableCrystal(lam));
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    // Group degenerate eigenvalues and fix a deterministic basis in each group.
    let scale = trap.a_z();
    let mut ordered: Vec<(f64, DVector<f64>)> = Vec::with_capacity(n);
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && (pairs[end - 1].0 - pairs[end].0).abs() <= DEGENERACY_TOL * scale {
            end += 1;
        }
        let group = &pairs[start..end];
        if group.len() == 1 {
            let mut v = group[0].1.clone();
            fix_sign(&mut v);
            ordered.push((group[0].0, v));
        } else {
            let mean = group.iter().map(|(l, _)| l).sum::<f64>() / group.len() as f64;
            let basis: Vec<_> = group.iter().map(|(_, v)| v.clone()).collect();
            let mut fixed = canonical_subspace_basis(&basis);
            fixed.iter_mut().for_each(fix_sign);
            fixed.sort_by_key(|v| std::cmp::Reverse(rounded_key(v)));
            ordered.extend(fixed.into_iter().map(|v| (mean, v)));
        }
        start = end;
    }

    let omega_ref = trap.omega_ref();
    Ok(ModeSpectrum {
        n_ions: n,
        frequencies: ordered.iter().map(|(l, _)| omega_ref * l.sqrt()).collect(),
        eigenvalues: ordered.iter().map(|(l, _)| *l).collect(),
        mode_matrix: (0..n).map(|i| ordered.iter().map(|(_, v)| v[i]).collect()).collect(),
        trap_ref: *trap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeLine {
    /// 1 = COM, counting down in frequency.
    pub index: usize,
    pub frequency_mhz: f64,
    /// |b_{i,m}|² for each ion.
    pub weights: Vec<f64>,
}

pub fn mode_comb(spectrum: &ModeSpectrum) -> Vec<ModeLine> {
    (0..spectrum.n_ions)
        .map(|m| ModeLine {
            index: m + 1,
            frequency_mhz: to_mhz(spectrum.frequencies[m]),
            weights: (0..spectrum.n_ions).map(|i| spectrum.b(i, m).powi(2)).collect(),
        })
        .collect()
}
