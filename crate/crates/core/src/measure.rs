//! Readout: basis histograms, S_x distributions and finite-shot sampling.
//!
//! The y-basis readout applies `(1 − iσ_x)/√2` to every spin before taking
//! |amplitude|², so a set bit means the +1 eigenstate of σ_y. The x-basis map
//! sends `|−x⟩` to bit 0 and `|+x⟩` to bit 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{config_label, GroundManifold};
use crate::state::{self, SpinState, TO_X_FRAME, TO_Y_FRAME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub fn as_str(self) -> &'static str {
        match self {
            Basis::X => "x",
            Basis::Y => "y",
            Basis::Z => "z",
        }
    }
}

impl std::str::FromStr for Basis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Basis::X),
            "y" => Ok(Basis::Y),
            "z" => Ok(Basis::Z),
            _ => Err(Error::validation("analysis.basis", format!("unknown basis {s:?}, expected x, y or z"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationHistogram {
    pub n_spins: usize,
    pub basis: Basis,
    /// Binary order, ion 1 = most significant bit.
    pub probs: Vec<f64>,
    pub labels: Vec<String>,
}

impl PopulationHistogram {
    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Indices sorted by descending probability, lower index first on ties.
    pub fn top(&self, k: usize) -> Vec<(usize, f64)> {
        let mut idx: Vec<usize> = (0..self.probs.len()).collect();
        idx.sort_by(|&a, &b| self.probs[b].total_cmp(&self.probs[a]).then(a.cmp(&b)));
        idx.into_iter().take(k).map(|i| (i, self.probs[i])).collect()
    }
}

fn histogram_from(n: usize, basis: Basis, probs: Vec<f64>) -> PopulationHistogram {
    let probs = probs.into_iter().map(|p| p.max(0.0)).collect();
    PopulationHistogram {
        n_spins: n,
        basis,
        probs,
        labels: (0..1usize << n).map(|c| config_label(c, n)).collect(),
    }
}

pub fn basis_populations(state: &SpinState, basis: Basis) -> PopulationHistogram {
    let n = state.n_spins;
    let mut v = state.amplitudes.clone();
    match basis {
        Basis::X => state::apply_all(&mut v, n, &TO_X_FRAME),
        Basis::Y => state::apply_all(&mut v, n, &TO_Y_FRAME),
        Basis::Z => {}
    }
    histogram_from(n, basis, v.iter().map(|a| a.norm_sqr()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxDistribution {
    /// −N/2 … N/2 in unit steps.
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl SxDistribution {
    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }
}

pub fn sx_distribution(state: &SpinState) -> SxDistribution {
    let hist = basis_populations(state, Basis::X);
    sx_from_x_histogram(&hist)
}

fn sx_from_x_histogram(hist: &PopulationHistogram) -> SxDistribution {
    let n = hist.n_spins;
    let mut probs = vec![0.0; n + 1];
    for (c, p) in hist.probs.iter().enumerate() {
        probs[c.count_ones() as usize] += p;
    }
    SxDistribution {
        values: (0..=n).map(|k| k as f64 - n as f64 / 2.0).collect(),
        probs,
    }
}

pub fn ground_state_fraction(hist: &PopulationHistogram, manifold: &GroundManifold) -> Result<f64> {
    if hist.basis != Basis::Y {
        return Err(Error::BasisMismatch {
            expected: "y".into(),
            got: hist.basis.as_str().into(),
        });
    }
    if hist.n_spins != manifold.n_spins {
        return Err(Error::DimensionMismatch {
            expected: hist.n_spins,
            got: manifold.n_spins,
        });
    }
    Ok(manifold.configs.iter().map(|&c| hist.probs[c]).sum())
}

/// Multinomial draw from `hist` followed by an independent flip of each spin
/// with probability `prep_error`. Returns counts per basis index.
pub fn sample_shots(hist: &PopulationHistogram, n_shots: usize, prep_error: f64, seed: u64) -> Result<Vec<u64>> {
    if !(0.0..=1.0).contains(&prep_error) {
        return Err(Error::validation("analysis.prep_error", "must lie in [0, 1]"));
    }
    let total = hist.total();
    if !(total > 0.0) {
        return Err(Error::validation("histogram", "probabilities sum to zero"));
    }
    let mut cdf = Vec::with_capacity(hist.probs.len());
    let mut acc = 0.0;
    for p in &hist.probs {
        acc += p / total;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; hist.probs.len()];
    for _ in 0..n_shots {
        let u: f64 = rng.random();
        let mut c = cdf.partition_point(|&x| x <= u).min(last);
        while hist.probs[c] == 0.0 && c > 0 {
            c -= 1;
        }
        if prep_error > 0.0 {
            for bit in 0..hist.n_spins {
                if rng.random::<f64>() < prep_error {
                    c ^= 1 << bit;
                }
            }
        }
        counts[c] += 1;
    }
    Ok(counts)
}

/// Kolmogorov-Smirnov distance between empirical counts and `probs`,
/// both taken in index order.
pub fn ks_distance(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return 1.0;
    }
    let (mut ce, mut cp, mut d) = (0.0, 0.0, 0.0f64);
    for (c, p) in counts.iter().zip(probs) {
        ce += *c as f64 / n as f64;
        cp += p;
        d = d.max((ce - cp).abs());
    }
    d
}
