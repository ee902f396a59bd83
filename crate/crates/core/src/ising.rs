//! Exact classical and quantum diagnostics of the transverse-field Ising model
//! `H(B) = Σ_{i<j} J_ij σ_y^i σ_y^j + B Σ_i σ_x^i`.
//!
//! Index convention for all 2^N vectors: ion 1 is the most significant bit,
//! and a set bit means the spin points up (+1 eigenvalue of the Pauli operator
//! of the basis in use).

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::adiabatic::RampSchedule;
use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::par;

pub const MAX_CLASSICAL_SPINS: usize = 24;
pub const MAX_DENSE_SPINS: usize = 14;
pub const MAX_GAP_SPINS: usize = 12;
/// Degeneracy window relative to the classical spectral width.
pub const DEGENERACY_EPS: f64 = 1e-9;
/// Minimum |⟨e|Σσ_x|g⟩| for an excited level to count as coupled.
pub const COUPLING_EPS: f64 = 1e-8;

/// Bit of the basis index that holds ion `ion` (0-based).
#[inline]
pub fn bit_of(ion: usize, n: usize) -> usize {
    n - 1 - ion
}

/// ±1 value of ion `ion` in basis state `config`.
#[inline]
pub fn spin_value(config: usize, ion: usize, n: usize) -> f64 {
    if (config >> bit_of(ion, n)) & 1 == 1 {
        1.0
    } else {
        -1.0
    }
}

/// `↑↓…` label, ion 1 first.
pub fn config_label(config: usize, n: usize) -> String {
    (0..n)
        .map(|i| if (config >> bit_of(i, n)) & 1 == 1 { '↑' } else { '↓' })
        .collect()
}

pub fn config_bits(config: usize, n: usize) -> String {
    (0..n)
        .map(|i| if (config >> bit_of(i, n)) & 1 == 1 { '1' } else { '0' })
        .collect()
}

/// `E(s) = Σ_{i<j} J_ij s_i s_j` evaluated directly.
pub fn classical_energy(j: &CouplingMatrix, config: usize) -> f64 {
    let n = j.n_ions;
    j.pairs()
        .map(|(a, b, v)| v * spin_value(config, a, n) * spin_value(config, b, n))
        .sum()
}

/// All 2^N classical energies in index order.
pub fn classical_energies(j: &CouplingMatrix) -> Result<Vec<f64>> {
    let n = j.n_ions;
    if n > MAX_DENSE_SPINS {
        return Err(Error::TooManySpins {
            n,
            max: MAX_DENSE_SPINS,
            what: "energy table",
        });
    }
    let pairs: Vec<_> = j.pairs().filter(|p| p.2 != 0.0).collect();
    Ok(par::map_range(1 << n, |c| {
        pairs
            .iter()
            .map(|&(a, b, v)| v * spin_value(c, a, n) * spin_value(c, b, n))
            .sum()
    }))
}

/// Visits every configuration whose high bits equal `block`, walking the low
/// `low_bits` in Gray-code order with incremental energy updates.
fn scan_block<F: FnMut(usize, f64)>(j: &CouplingMatrix, block: usize, low_bits: usize, mut visit: F) {
    let n = j.n_ions;
    let mut config = block << low_bits;
    let mut spins: Vec<f64> = (0..n).map(|i| spin_value(config, i, n)).collect();
    let mut energy = classical_energy(j, config);
    visit(config, energy);
    for step in 1usize..(1 << low_bits) {
        let bit = step.trailing_zeros() as usize;
        let ion = n - 1 - bit;
        let field: f64 = (0..n).filter(|&k| k != ion).map(|k| j.j[ion][k] * spins[k]).sum();
        energy -= 2.0 * spins[ion] * field;
        spins[ion] = -spins[ion];
        config ^= 1 << bit;
        visit(config, energy);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundManifold {
    pub n_spins: usize,
    /// rad/s
    pub energy: f64,
    /// Sorted ascending; set bit = +1 eigenstate of σ_y.
    pub configs: Vec<usize>,
    pub degeneracy: usize,
}

impl GroundManifold {
    pub fn labels(&self) -> Vec<String> {
        self.configs.iter().map(|&c| config_label(c, self.n_spins)).collect()
    }

    pub fn contains(&self, config: usize) -> bool {
        self.configs.binary_search(&config).is_ok()
    }
}

pub fn classical_ground_manifold(j: &CouplingMatrix) -> Result<GroundManifold> {
    let n = j.n_ions;
    if n > MAX_CLASSICAL_SPINS {
        return Err(Error::TooManySpins {
            n,
            max: MAX_CLASSICAL_SPINS,
            what: "classical enumeration",
        });
    }
    if n == 0 {
        return Err(Error::validation("couplings", "no spins"));
    }
    let low_bits = n.min(12);
    let blocks = 1usize << (n - low_bits);

    let extremes = par::map_range(blocks, |b| {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        scan_block(j, b, low_bits, |_, e| {
            lo = lo.min(e);
            hi = hi.max(e);
        });
        (lo, hi)
    });
    let (e_min, e_max) = extremes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(a, b)| (lo.min(a), hi.max(b)));
    let window = DEGENERACY_EPS * (e_max - e_min);
    // Gray-code drift is far below the window, but leave room for it.
    let slack = window + 1e-12 * (e_max.abs() + e_min.abs());

    let candidates: Vec<Vec<usize>> = par::map_range(blocks, |b| {
        let mut found = Vec::new();
        scan_block(j, b, low_bits, |c, e| {
            if e - e_min <= slack {
                found.push(c);
            }
        });
        found
    });
    let mut configs: Vec<usize> = candidates.into_iter().flatten().collect();

    // Re-evaluate candidates exactly and keep those inside the window.
    let exact: Vec<f64> = configs.iter().map(|&c| classical_energy(j, c)).collect();
    let best = exact.iter().copied().fold(f64::INFINITY, f64::min);
    let mut kept: Vec<usize> = configs
        .drain(..)
        .zip(exact)
        .filter(|(_, e)| e - best <= window)
        .map(|(c, _)| c)
        .collect();
    kept.sort_unstable();
    let energy = classical_energy(j, kept[0]);
    Ok(GroundManifold {
        n_spins: n,
        energy,
        degeneracy: kept.len(),
        configs: kept,
    })
}

fn check_dense(n: usize, max: usize, what: &'static str) -> Result<()> {
    if n > max {
        Err(Error::TooManySpins { n, max, what })
    } else {
        Ok(())
    }
}

/// Nonzero entries of column `c` of `H` in the σ_z basis. `H` is real there:
/// `σ_y^a σ_y^b |c⟩ = −s_a s_b |c ⊕ a ⊕ b⟩`.
fn column_entries(j: &CouplingMatrix, b_field: f64, c: usize, out: &mut Vec<(usize, f64)>) {
    let n = j.n_ions;
    out.clear();
    if b_field != 0.0 {
        for i in 0..n {
            out.push((c ^ (1 << bit_of(i, n)), b_field));
        }
    }
    for (a, b, v) in j.pairs() {
        if v != 0.0 {
            let d = c ^ (1 << bit_of(a, n)) ^ (1 << bit_of(b, n));
            out.push((d, -v * spin_value(c, a, n) * spin_value(c, b, n)));
        }
    }
}

/// Dense `H(B)` in the computational σ_z basis. The matrix is real symmetric.
pub fn dense_hamiltonian(j: &CouplingMatrix, b_field: f64) -> Result<DMatrix<f64>> {
    let n = j.n_ions;
    check_dense(n, MAX_DENSE_SPINS, "dense Hamiltonian")?;
    let dim = 1usize << n;
    let mut h = DMatrix::zeros(dim, dim);
    let mut entries = Vec::new();
    for c in 0..dim {
        column_entries(j, b_field, c, &mut entries);
        for &(d, v) in &entries {
            h[(d, c)] += v;
        }
    }
    Ok(h)
}

/// `H(B)` restricted to the eigenspace of `P = Π σ_x^i` with eigenvalue
/// `parity`, in the basis `(|r⟩ + parity·|r̄⟩)/√2` for `r < 2^(N−1)`.
pub fn sector_hamiltonian(j: &CouplingMatrix, b_field: f64, parity: i8) -> Result<DMatrix<f64>> {
    let n = j.n_ions;
    check_dense(n, MAX_DENSE_SPINS, "sector Hamiltonian")?;
    let dim = 1usize << (n - 1);
    let top = 1usize << (n - 1);
    let p = f64::from(parity.signum());
    let mut h = DMatrix::zeros(dim, dim);
    let mut entries = Vec::new();
    for c in 0..dim {
        column_entries(j, b_field, c, &mut entries);
        for &(d, v) in &entries {
            if d & top == 0 {
                h[(d, c)] += v;
            } else {
                h[(d ^ (2 * top - 1), c)] += p * v;
            }
        }
    }
    Ok(h)
}

/// Parity of the transverse-field ground state `|−x⟩^⊗N` under `Π σ_x^i`.
pub fn initial_sector(n: usize) -> i8 {
    if n % 2 == 0 {
        1
    } else {
        -1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSample {
    /// s
    pub t: f64,
    /// rad/s
    pub b_field: f64,
    /// Lowest sector eigenvalues, ascending, rad/s.
    pub eigenvalues: Vec<f64>,
    /// rad/s
    pub gap: f64,
    /// False when no excited level couples through Σσ_x and the gap falls back
    /// to the first excited level.
    pub coupled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapProfile {
    pub n_spins: usize,
    pub sector: i8,
    pub samples: Vec<GapSample>,
}

fn sample_gap(j: &CouplingMatrix, t: f64, b: f64, sector: i8, k: usize) -> Result<GapSample> {
    let n = j.n_ions;
    let eig = SymmetricEigen::new(sector_hamiltonian(j, b, sector)?);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().take(k.max(1)).map(|&i| eig.eigenvalues[i]).collect();
    let e0 = eig.eigenvalues[order[0]];

    let x = sector_hamiltonian(&CouplingMatrix::zeros(n), 1.0, sector)?;
    let g = eig.eigenvectors.column(order[0]);
    let xg = &x * g;
    let coupled_level = order[1..]
        .iter()
        .find(|&&i| eig.eigenvectors.column(i).dot(&xg).abs() > COUPLING_EPS)
        .map(|&i| eig.eigenvalues[i]);

    let (gap, coupled) = match coupled_level {
        Some(e) => (e - e0, true),
        None if order.len() > 1 => (eig.eigenvalues[order[1]] - e0, false),
        None => {
            // one-dimensional sector: use the full spectrum
            let full = SymmetricEigen::new(dense_hamiltonian(j, b)?);
            let mut ev: Vec<f64> = full.eigenvalues.iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            let e1 = ev.iter().copied().find(|&e| e > e0 + 1e-12 * e0.abs().max(1.0)).unwrap_or(e0);
            (e1 - e0, false)
        }
    };
    Ok(GapSample {
        t,
        b_field: b,
        eigenvalues,
        gap: gap.max(0.0),
        coupled,
    })
}

/// Gap to the lowest Σσ_x-coupled excited level along the ramp, inside the
/// symmetry sector of the initial state.
pub fn gap_profile(j: &CouplingMatrix, schedule: &RampSchedule, n_samples: usize, k: usize) -> Result<GapProfile> {
    let n = j.n_ions;
    check_dense(n, MAX_GAP_SPINS, "gap profile")?;
    let sector = initial_sector(n);
    let times: Vec<f64> = match n_samples {
        0 => Vec::new(),
        1 => vec![0.0],
        m => (0..m).map(|i| schedule.duration * i as f64 / (m - 1) as f64).collect(),
    };
    let samples = par::map_slice(&times, |&t| sample_gap(j, t, schedule.field_at(t), sector, k))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(GapProfile {
        n_spins: n,
        sector,
        samples,
    })
}

/// Orthonormal eigenvectors spanning the B = 0 ground space of the dense
/// Hamiltonian (σ_z basis), with the energy.
pub fn quantum_ground_space(j: &CouplingMatrix) -> Result<(f64, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(dense_hamiltonian(j, 0.0)?);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let window = DEGENERACY_EPS * (hi - lo).max(f64::MIN_POSITIVE);
    let cols: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] - lo <= window)
        .collect();
    let basis = DMatrix::from_fn(eig.eigenvectors.nrows(), cols.len(), |r, c| eig.eigenvectors[(r, cols[c])]);
    Ok((lo, basis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{diagram_preset, DIAGRAM_PRESETS};

    fn brute_force_min(j: &CouplingMatrix) -> (f64, Vec<usize>) {
        let n = j.n_ions;
        let e: Vec<f64> = (0..1usize << n).map(|c| classical_energy(j, c)).collect();
        let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let configs = (0..e.len()).filter(|&c| e[c] - lo <= 1e-9 * (hi - lo)).collect();
        (lo, configs)
    }

    #[test]
    fn labels_put_ion_one_first() {
        assert_eq!(config_bits(0b1000, 4), "1000");
        assert_eq!(config_label(0b1000, 4), "↑↓↓↓");
        assert_eq!(spin_value(0b1000, 0, 4), 1.0);
        assert_eq!(spin_value(0b1000, 3, 4), -1.0);
    }

    #[test]
    fn fm4_manifold_is_all_up_and_all_down() {
        let m = classical_ground_manifold(&diagram_preset("fm4").unwrap().couplings()).unwrap();
        assert_eq!(m.configs, vec![0b0000, 0b1111]);
        assert_eq!(m.labels(), vec!["↓↓↓↓", "↑↑↑↑"]);
    }

    #[test]
    fn gray_code_enumeration_matches_direct_enumeration() {
        for p in DIAGRAM_PRESETS {
            let j = p.couplings();
            let m = classical_ground_manifold(&j).unwrap();
            let (lo, configs) = brute_force_min(&j);
            assert_eq!(m.configs, configs, "{}", p.name);
            assert!((m.energy - lo).abs() < 1e-12 * lo.abs());
            assert_eq!(m.degeneracy, p.expected_degeneracy, "{}", p.name);
        }
    }

    #[test]
    fn manifolds_are_closed_under_global_flip() {
        for p in DIAGRAM_PRESETS {
            let m = classical_ground_manifold(&p.couplings()).unwrap();
            let all = (1usize << m.n_spins) - 1;
            assert!(m.configs.iter().all(|&c| m.contains(c ^ all)), "{}", p.name);
        }
    }

    #[test]
    fn too_many_spins() {
        let j = CouplingMatrix::zeros(25);
        assert!(matches!(classical_ground_manifold(&j), Err(Error::TooManySpins { .. })));
        assert!(matches!(dense_hamiltonian(&CouplingMatrix::zeros(15), 1.0), Err(Error::TooManySpins { .. })));
    }

    #[test]
    fn single_spin_hamiltonian_is_b_sigma_x() {
        let h = dense_hamiltonian(&CouplingMatrix::zeros(1), 3.0).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[0.0, 3.0, 3.0, 0.0]));
    }

    #[test]
    fn dense_hamiltonian_is_symmetric() {
        let h = dense_hamiltonian(&diagram_preset("hex7_case1").unwrap().couplings(), 1234.5).unwrap();
        assert_eq!(h, h.transpose());
    }

    #[test]
    fn b_zero_spectrum_equals_classical_energies() {
        let j = diagram_preset("neel4").unwrap().couplings();
        let mut q: Vec<f64> = SymmetricEigen::new(dense_hamiltonian(&j, 0.0).unwrap())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        let mut c = classical_energies(&j).unwrap();
        q.sort_by(f64::total_cmp);
        c.sort_by(f64::total_cmp);
        for (a, b) in q.iter().zip(&c) {
            assert!((a - b).abs() < 1e-10 * j.max_abs());
        }
    }

    #[test]
    fn sectors_partition_the_spectrum() {
        let j = diagram_preset("neel4").unwrap().couplings();
        let b = 0.7 * j.max_abs();
        let mut full: Vec<f64> = SymmetricEigen::new(dense_hamiltonian(&j, b).unwrap()).eigenvalues.iter().copied().collect();
        let mut parts: Vec<f64> = [1i8, -1]
            .iter()
            .flat_map(|&p| SymmetricEigen::new(sector_hamiltonian(&j, b, p).unwrap()).eigenvalues.iter().copied().collect::<Vec<_>>())
            .collect();
        full.sort_by(f64::total_cmp);
        parts.sort_by(f64::total_cmp);
        for (a, c) in full.iter().zip(&parts) {
            assert!((a - c).abs() < 1e-9 * j.max_abs());
        }
    }
}
