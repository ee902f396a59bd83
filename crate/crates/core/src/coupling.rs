//! Phonon-mediated Ising couplings and interaction-diagram presets.
//!
//! `J_ij = Ω_i Ω_j · ħ(δk)²/(2M) · Σ_m b_{i,m} b_{j,m} / (μ² − ω_m²)`, with
//! the sign convention that `J > 0` is antiferromagnetic for
//! `H = Σ_{i<j} J_ij σ_y^i σ_y^j`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modes::ModeSpectrum;
use crate::units::{khz, HBAR, YB171_HYPERFINE_HZ};

pub const DEFAULT_RESONANCE_GUARD: f64 = 2.0 * std::f64::consts::PI * 1e3;
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamanDrive {
    /// Ω_i per ion, rad/s.
    pub rabi: Vec<f64>,
    /// Net wavevector δk, 1/m (informational when `recoil` was given directly).
    pub delta_k: Option<f64>,
    /// Detuning μ from the carrier, rad/s.
    pub mu: f64,
    /// ħ(δk)²/(2M), rad/s.
    pub recoil: f64,
    /// Carrier frequency metadata, Hz.
    pub carrier_hint: f64,
    /// rad/s
    pub resonance_guard: f64,
}

impl RamanDrive {
    pub fn new(rabi: Vec<f64>, mu: f64, recoil: f64) -> Result<Self> {
        let drive = RamanDrive {
            rabi,
            delta_k: None,
            mu,
            recoil,
            carrier_hint: YB171_HYPERFINE_HZ,
            resonance_guard: DEFAULT_RESONANCE_GUARD,
        };
        drive.validate()?;
        Ok(drive)
    }

    pub fn from_wavevector(rabi: Vec<f64>, mu: f64, delta_k: f64, ion_mass: f64) -> Result<Self> {
        let recoil = HBAR * delta_k * delta_k / (2.0 * ion_mass);
        let mut drive = Self::new(rabi, mu, recoil)?;
        drive.delta_k = Some(delta_k);
        Ok(drive)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rabi.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::validation("drive.rabi_khz", "Rabi frequencies must be finite and >= 0"));
        }
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::validation("drive.mu_mhz", "detuning must be > 0"));
        }
        if !(self.recoil.is_finite() && self.recoil > 0.0) {
            return Err(Error::validation("drive.recoil_khz", "recoil frequency must be > 0"));
        }
        if !(self.resonance_guard.is_finite() && self.resonance_guard >= 0.0) {
            return Err(Error::validation("drive.resonance_guard_khz", "guard must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingMatrix {
    pub n_ions: usize,
    /// rad/s, symmetric with zero diagonal.
    pub j: Vec<Vec<f64>>,
    pub sign_flip: bool,
}

impl CouplingMatrix {
    pub fn zeros(n: usize) -> Self {
        CouplingMatrix {
            n_ions: n,
            j: vec![vec![0.0; n]; n],
            sign_flip: false,
        }
    }

    /// Builds from a full matrix; checks symmetry, finiteness and zero diagonal.
    pub fn from_rows(j: Vec<Vec<f64>>) -> Result<Self> {
        let n = j.len();
        for (i, row) in j.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: row.len() });
            }
            if row[i] != 0.0 {
                return Err(Error::validation("couplings", format!("diagonal entry {i} is non-zero")));
            }
            for (k, v) in row.iter().enumerate() {
                if !v.is_finite() || *v != j[k][i] {
                    return Err(Error::validation("couplings", format!("entry ({i},{k}) breaks symmetry")));
                }
            }
        }
        Ok(CouplingMatrix {
            n_ions: n,
            j,
            sign_flip: false,
        })
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.j[i][k]
    }

    pub fn max_abs(&self) -> f64 {
        self.j.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Upper-triangle pairs `(i, k, J_ik)` with `i < k`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_ions).flat_map(move |i| (i + 1..self.n_ions).map(move |k| (i, k, self.j[i][k])))
    }

    /// Relabels ions: new ion `a` is old ion `perm[a]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n_ions;
        CouplingMatrix {
            n_ions: n,
            j: (0..n).map(|a| (0..n).map(|b| self.j[perm[a]][perm[b]]).collect()).collect(),
            sign_flip: self.sign_flip,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CouplingMatrix {
            n_ions: self.n_ions,
            j: self.j.iter().map(|r| r.iter().map(|v| v * factor).collect()).collect(),
            sign_flip: self.sign_flip,
        }
    }
}

pub fn coupling_matrix(spectrum: &ModeSpectrum, drive: &RamanDrive) -> Result<CouplingMatrix> {
    drive.validate()?;
    let n = spectrum.n_ions;
    if drive.rabi.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: drive.rabi.len(),
        });
    }
    for (m, &w) in spectrum.frequencies.iter().enumerate() {
        if (drive.mu - w).abs() <= drive.resonance_guard {
            return Err(Error::ResonantDetuning {
                mode: m + 1,
                offset_hz: (drive.mu - w) / (2.0 * std::f64::consts::PI),
            });
        }
    }
    let inv_den: Vec<f64> = spectrum
        .frequencies
        .iter()
        .map(|w| 1.0 / (drive.mu * drive.mu - w * w))
        .collect();

    let mut j = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let row_a = &spectrum.mode_matrix[a];
            let row_b = &spectrum.mode_matrix[b];
            let sum: f64 = (0..n).map(|m| row_a[m] * row_b[m] * inv_den[m]).sum();
            let v = drive.rabi[a] * drive.rabi[b] * drive.recoil * sum;
            j[a][b] = v;
            j[b][a] = v;
        }
    }
    Ok(CouplingMatrix {
        n_ions: n,
        j,
        sign_flip: false,
    })
}

/// Global sign reversal, standing in for ground-state tracking from the
/// highest excited state.
pub fn apply_sign_flip(j: &CouplingMatrix) -> CouplingMatrix {
    CouplingMatrix {
        n_ions: j.n_ions,
        j: j.j.iter().map(|r| r.iter().map(|v| -v).collect()).collect(),
        sign_flip: !j.sign_flip,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// J < 0
    Fm,
    /// J > 0
    Afm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    /// 1-based ion labels.
    pub a: usize,
    pub b: usize,
    pub value: f64,
    pub relative: f64,
    pub kind: EdgeKind,
    /// 0 = strongest magnitude tier.
    pub tier: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionDiagram {
    pub n_ions: usize,
    pub max_abs: f64,
    pub edge_threshold: f64,
    pub edges: Vec<Edge>,
    /// Sub-threshold pairs, 1-based.
    pub dropped: Vec<(usize, usize)>,
    /// Representative |J|/max of each tier.
    pub tiers: Vec<f64>,
}

impl InteractionDiagram {
    pub fn edge(&self, a: usize, b: usize) -> Option<&Edge> {
        let (a, b) = (a.min(b), a.max(b));
        self.edges.iter().find(|e| e.a == a && e.b == b)
    }

    pub fn is_complete(&self) -> bool {
        self.dropped.is_empty()
    }

    pub fn single_sign(&self) -> Option<EdgeKind> {
        let first = self.edges.first()?.kind;
        self.edges.iter().all(|e| e.kind == first).then_some(first)
    }
}

/// Magnitudes within this ratio of a tier's top edge share that tier.
const TIER_RATIO: f64 = 0.85;

pub fn classify_graph(j: &CouplingMatrix, edge_threshold: f64) -> Result<InteractionDiagram> {
    if !(edge_threshold > 0.0 && edge_threshold < 1.0) {
        return Err(Error::validation("analysis.edge_threshold", "must lie in (0, 1)"));
    }
    let max_abs = j.max_abs();
    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    let mut dropped = Vec::new();
    for (a, b, v) in j.pairs() {
        if max_abs > 0.0 && v.abs() >= edge_threshold * max_abs {
            kept.push((a, b, v));
        } else {
            dropped.push((a + 1, b + 1));
        }
    }

    let mut mags: Vec<f64> = kept.iter().map(|e| e.2.abs() / max_abs).collect();
    mags.sort_by(|x, y| y.total_cmp(x));
    let mut tiers: Vec<f64> = Vec::new();
    for m in mags {
        match tiers.last() {
            Some(&top) if m >= TIER_RATIO * top => {}
            _ => tiers.push(m),
        }
    }

    let edges = kept
        .into_iter()
        .map(|(a, b, v)| {
            let relative = v.abs() / max_abs;
            Edge {
                a: a + 1,
                b: b + 1,
                value: v,
                relative,
                kind: if v < 0.0 { EdgeKind::Fm } else { EdgeKind::Afm },
                tier: tiers
                    .iter()
                    .position(|&t| relative >= TIER_RATIO * t - 1e-12)
                    .unwrap_or(tiers.len().saturating_sub(1)),
            }
        })
        .collect();

    Ok(InteractionDiagram {
        n_ions: j.n_ions,
        max_abs,
        edge_threshold,
        edges,
        dropped,
        tiers,
    })
}

/// Next-nearest-neighbour strength relative to nearest neighbours in the
/// hand-coded diagrams. Chosen so the classical degeneracies come out as in
/// the experiments; not a measured value.
pub const NEXT_NEAREST_RATIO: f64 = 0.4;

/// Nearest-neighbour coupling scale of the diagram presets, `J0/2π` in kHz.
/// Chosen together with the default ramp so the ideal adiabatic runs sit in
/// the experimental regime (b0 = 2π·29 kHz, 300 µs).
pub const DIAGRAM_J0_KHZ: f64 = 2.75;

/// A hand-coded signed interaction diagram. Ion labels are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagramPreset {
    pub name: &'static str,
    pub trap_preset: &'static str,
    pub n_ions: usize,
    /// (a, b, sign, next_nearest)
    pub edges: &'static [(usize, usize, i8, bool)],
    pub expected_degeneracy: usize,
    pub description: &'static str,
}

impl DiagramPreset {
    pub fn couplings(&self) -> CouplingMatrix {
        self.couplings_with_scale(khz(DIAGRAM_J0_KHZ))
    }

    pub fn couplings_with_scale(&self, j0: f64) -> CouplingMatrix {
        let mut m = CouplingMatrix::zeros(self.n_ions);
        for &(a, b, sign, nnn) in self.edges {
            let mag = if nnn { NEXT_NEAREST_RATIO * j0 } else { j0 };
            let v = f64::from(sign) * mag;
            m.j[a - 1][b - 1] = v;
            m.j[b - 1][a - 1] = v;
        }
        m
    }
}

const F: i8 = -1;
const A: i8 = 1;

// Rhombus: perimeter 1-3-2-4, diagonals 1-2 (short) and 3-4 (long).
// Hexagon: centre ion 1, ring 2-3-4-5-6-7 in order.
// Ten ions: inner ions 1 and 2, ring 3..10 in order.
pub const DIAGRAM_PRESETS: &[DiagramPreset] = &[
    DiagramPreset {
        name: "fm4",
        trap_preset: "rhombus4",
        n_ions: 4,
        edges: &[
            (1, 2, F, false),
            (1, 3, F, false),
            (1, 4, F, false),
            (2, 3, F, false),
            (2, 4, F, false),
            (3, 4, F, false),
        ],
        expected_degeneracy: 2,
        description: "all-to-all ferromagnet",
    },
    DiagramPreset {
        name: "neel4",
        trap_preset: "rhombus4",
        n_ions: 4,
        edges: &[
            (1, 3, A, false),
            (3, 2, A, false),
            (2, 4, A, false),
            (4, 1, A, false),
            (1, 2, F, true),
            (3, 4, F, true),
        ],
        expected_degeneracy: 2,
        description: "nearest-neighbour AFM, next-nearest FM; two alternating orders",
    },
    DiagramPreset {
        name: "hex7_case1",
        trap_preset: "hexagon7",
        n_ions: 7,
        edges: &[
            (2, 3, A, false),
            (3, 4, A, false),
            (4, 5, A, false),
            (5, 6, A, false),
            (6, 7, A, false),
            (7, 2, A, false),
            (2, 4, F, true),
            (3, 5, F, true),
            (4, 6, F, true),
            (5, 7, F, true),
            (6, 2, F, true),
            (7, 3, F, true),
            (1, 2, F, false),
            (1, 3, F, false),
            (1, 4, A, false),
            (1, 5, F, false),
            (1, 6, F, false),
            (1, 7, A, false),
        ],
        expected_degeneracy: 4,
        description: "ring AFM/NNN FM; centre with four FM and two AFM bonds (frustrated)",
    },
    DiagramPreset {
        name: "hex7_case2",
        trap_preset: "hexagon7",
        n_ions: 7,
        edges: &[
            (2, 3, F, false),
            (3, 4, A, false),
            (4, 5, A, false),
            (5, 6, F, false),
            (6, 7, A, false),
            (7, 2, A, false),
            (2, 4, A, true),
            (3, 5, F, true),
            (4, 6, A, true),
            (5, 7, A, true),
            (6, 2, F, true),
            (7, 3, A, true),
            (1, 2, A, false),
            (1, 3, A, false),
            (1, 4, F, false),
            (1, 5, A, false),
            (1, 6, A, false),
            (1, 7, F, false),
        ],
        expected_degeneracy: 2,
        description: "sub-lattices 1-4-7 and 2-3-5-6, FM within and AFM between",
    },
    DiagramPreset {
        name: "hex7_case3",
        trap_preset: "hexagon7",
        n_ions: 7,
        edges: &[
            (2, 3, A, false),
            (3, 4, F, false),
            (4, 5, F, false),
            (5, 6, A, false),
            (6, 7, F, false),
            (7, 2, F, false),
            (2, 4, A, true),
            (3, 5, F, true),
            (4, 6, A, true),
            (5, 7, A, true),
            (6, 2, F, true),
            (7, 3, A, true),
            (1, 2, F, false),
            (1, 3, F, false),
            (1, 4, F, false),
            (1, 5, F, false),
            (1, 6, F, false),
            (1, 7, F, false),
        ],
        expected_degeneracy: 4,
        description: "left 2-6-7 and right 3-4-5 anti-aligned; centre FM to all (frustrated)",
    },
    DiagramPreset {
        name: "frustrated10",
        trap_preset: "crystal10",
        n_ions: 10,
        edges: &[
            (3, 4, A, false),
            (4, 5, A, false),
            (5, 6, A, false),
            (6, 7, A, false),
            (7, 8, A, false),
            (8, 9, A, false),
            (9, 10, A, false),
            (10, 3, A, false),
            (3, 5, F, true),
            (4, 6, F, true),
            (5, 7, F, true),
            (6, 8, F, true),
            (7, 9, F, true),
            (8, 10, F, true),
            (9, 3, F, true),
            (10, 4, F, true),
            (1, 3, F, false),
            (1, 4, F, false),
            (1, 5, F, false),
            (1, 6, F, false),
            (2, 7, F, false),
            (2, 8, F, false),
            (2, 9, F, false),
            (2, 10, F, false),
        ],
        expected_degeneracy: 8,
        description: "Néel outer ring of eight; both inner ions see cancelling fields",
    },
];

pub fn diagram_preset(name: &str) -> Result<&'static DiagramPreset> {
    DIAGRAM_PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}
