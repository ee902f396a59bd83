//! State vectors of N spin-½ particles and the single-spin basis changes
//! used for propagation and readout.
//!
//! Single-spin matrices are written in the `(↓, ↑) = (bit 0, bit 1)` order of
//! the σ_z basis, so `σ_z = diag(−1, 1)` and `σ_y = [[0, i], [−i, 0]]`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::bit_of;
use crate::par;

pub const MAX_STATE_SPINS: usize = 14;

/// Arrays shorter than this are processed on the calling thread.
const PAR_MIN_LEN: usize = 1 << 13;

pub type Gate = [[C64; 2]; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinState {
    pub n_spins: usize,
    /// σ_z-basis amplitudes in binary order (ion 1 = most significant bit).
    pub amplitudes: Vec<C64>,
}

impl SpinState {
    pub fn new(n_spins: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != 1 << n_spins {
            return Err(Error::DimensionMismatch {
                expected: 1 << n_spins,
                got: amplitudes.len(),
            });
        }
        Ok(SpinState { n_spins, amplitudes })
    }

    pub fn basis_state(n_spins: usize, index: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n_spins];
        amplitudes[index] = C64::new(1.0, 0.0);
        SpinState { n_spins, amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn inner(&self, other: &SpinState) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }
}

/// Transverse-field ground state: every spin in the −1 eigenstate of σ_x.
pub fn initial_state(n_spins: usize) -> Result<SpinState> {
    if n_spins == 0 || n_spins > MAX_STATE_SPINS {
        return Err(Error::TooManySpins {
            n: n_spins,
            max: MAX_STATE_SPINS,
            what: "state vector",
        });
    }
    let amp = (0.5f64).powf(n_spins as f64 / 2.0);
    let amplitudes = (0..1usize << n_spins)
        .map(|c| C64::new(if c.count_ones() % 2 == 0 { amp } else { -amp }, 0.0))
        .collect();
    Ok(SpinState { n_spins, amplitudes })
}

/// Applies `gate` to ion `ion` of an `n`-spin amplitude vector.
pub fn apply_single(amps: &mut [C64], n: usize, ion: usize, gate: &Gate) {
    let bit = bit_of(ion, n);
    let stride = 1usize << bit;
    let block = stride << 1;
    let kernel = |chunk: &mut [C64]| {
        for base in (0..chunk.len()).step_by(block) {
            for k in base..base + stride {
                let a0 = chunk[k];
                let a1 = chunk[k + stride];
                chunk[k] = gate[0][0] * a0 + gate[0][1] * a1;
                chunk[k + stride] = gate[1][0] * a0 + gate[1][1] * a1;
            }
        }
    };
    if amps.len() >= PAR_MIN_LEN {
        par::for_each_chunk_mut(amps, block.max(PAR_MIN_LEN / 4), |_, c| kernel(c));
    } else {
        kernel(amps);
    }
}

pub fn apply_all(amps: &mut [C64], n: usize, gate: &Gate) {
    for ion in 0..n {
        apply_single(amps, n, ion, gate);
    }
}

/// Multiplies amplitude `c` by `phases[c]`.
pub fn apply_diagonal(amps: &mut [C64], phases: &[C64]) {
    if amps.len() >= PAR_MIN_LEN {
        par::for_each_chunk_mut(amps, PAR_MIN_LEN / 4, |ci, chunk| {
            let off = ci * (PAR_MIN_LEN / 4);
            for (k, a) in chunk.iter_mut().enumerate() {
                *a *= phases[off + k];
            }
        });
    } else {
        amps.iter_mut().zip(phases).for_each(|(a, p)| *a *= p);
    }
}

const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `U = (1 − iσ_x)/√2`: `U σ_y U† = σ_z`, `U σ_x U† = σ_x`. Maps the σ_y
/// eigenbasis onto the computational basis with a fixed phase convention.
pub const TO_Y_FRAME: Gate = [[c(H, 0.0), c(0.0, -H)], [c(0.0, -H), c(H, 0.0)]];
pub const FROM_Y_FRAME: Gate = [[c(H, 0.0), c(0.0, H)], [c(0.0, H), c(H, 0.0)]];

/// Rows are `⟨−x|` and `⟨+x|`: maps the σ_x eigenbasis onto (↓, ↑).
pub const TO_X_FRAME: Gate = [[c(H, 0.0), c(-H, 0.0)], [c(H, 0.0), c(H, 0.0)]];

/// `exp(−iθσ_x)`.
pub fn x_rotation(theta: f64) -> Gate {
    let (s, co) = theta.sin_cos();
    [[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]
}

pub fn to_y_frame(state: &SpinState) -> Vec<C64> {
    let mut v = state.amplitudes.clone();
    apply_all(&mut v, state.n_spins, &TO_Y_FRAME);
    v
}

pub fn from_y_frame(n: usize, amps: &[C64]) -> SpinState {
    let mut v = amps.to_vec();
    apply_all(&mut v, n, &FROM_Y_FRAME);
    SpinState { n_spins: n, amplitudes: v }
}

/// σ_z-basis representation of the σ_y product state `config`.
pub fn y_basis_state(n: usize, config: usize) -> SpinState {
    from_y_frame(n, &SpinState::basis_state(n, config).amplitudes)
}
