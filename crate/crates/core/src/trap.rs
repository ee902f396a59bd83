//! Planar Coulomb crystals in an anisotropic harmonic trap.
//!
//! Positions are dimensionless, in units of
//! `ℓ = (q² / (4πε₀ M ω_ref²))^(1/3)` with `ω_ref = min(ω_x, ω_y)`. In these
//! units the potential is `Σ_i (a_x x_i² + a_y y_i²)/2 + Σ_{i<j} 1/|u_i − u_j|`
//! with `a_k = (ω_k / ω_ref)²`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::lbfgs;
use crate::par;
use crate::units::{khz, ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, VACUUM_PERMITTIVITY, YB171_MASS_AMU};

pub const DEFAULT_GRAD_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;
pub const DEFAULT_RESTARTS: usize = 32;
const COINCIDENT_DISTANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapParams {
    /// Angular frequencies, rad/s.
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    /// kg
    pub ion_mass: f64,
    /// C
    pub ion_charge: f64,
}

impl TrapParams {
    pub fn new(omega_x: f64, omega_y: f64, omega_z: f64, ion_mass: f64, ion_charge: f64) -> Result<Self> {
        let trap = TrapParams {
            omega_x,
            omega_y,
            omega_z,
            ion_mass,
            ion_charge,
        };
        trap.validate()?;
        Ok(trap)
    }

    /// ¹⁷¹Yb⁺ in a trap given by frequencies `ω/2π` in kHz.
    pub fn ytterbium_khz(fx_khz: f64, fy_khz: f64, fz_khz: f64) -> Result<Self> {
        Self::new(
            khz(fx_khz),
            khz(fy_khz),
            khz(fz_khz),
            YB171_MASS_AMU * ATOMIC_MASS_UNIT,
            ELEMENTARY_CHARGE,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("omega_x", self.omega_x), ("omega_y", self.omega_y), ("omega_z", self.omega_z)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::validation(format!("trap.{name}"), "trap frequency must be strictly positive"));
            }
        }
        if !(self.ion_mass.is_finite() && self.ion_mass > 0.0) {
            return Err(Error::validation("trap.mass", "ion mass must be strictly positive"));
        }
        if !(self.ion_charge.is_finite() && self.ion_charge != 0.0) {
            return Err(Error::validation("trap.charge", "ion charge must be non-zero"));
        }
        Ok(())
    }

    /// Planar-crystal condition: `ω_z > max(ω_x, ω_y)`.
    pub fn check_planar(&self) -> Result<()> {
        if self.omega_z > self.omega_x.max(self.omega_y) {
            Ok(())
        } else {
            Err(Error::validation(
                "trap.omega_z_khz",
                "planar-crystal condition violated: omega_z must exceed max(omega_x, omega_y)",
            ))
        }
    }

    pub fn omega_ref(&self) -> f64 {
        self.omega_x.min(self.omega_y)
    }

    pub fn a_x(&self) -> f64 {
        (self.omega_x / self.omega_ref()).powi(2)
    }

    pub fn a_y(&self) -> f64 {
        (self.omega_y / self.omega_ref()).powi(2)
    }

    pub fn a_z(&self) -> f64 {
        (self.omega_z / self.omega_ref()).powi(2)
    }

    /// Length unit ℓ in metres.
    pub fn length_scale(&self) -> f64 {
        let q2 = self.ion_charge * self.ion_charge;
        (q2 / (4.0 * std::f64::consts::PI * VACUUM_PERMITTIVITY * self.ion_mass * self.omega_ref().powi(2))).cbrt()
    }

    pub fn is_isotropic_in_plane(&self) -> bool {
        (self.omega_x - self.omega_y).abs() <= 1e-12 * self.omega_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonCrystal {
    pub n_ions: usize,
    pub positions: Vec<[f64; 2]>,
    pub potential_energy: f64,
    pub gradient_norm: f64,
}

impl IonCrystal {
    /// Positions in micrometres.
    pub fn positions_um(&self, trap: &TrapParams) -> Vec<[f64; 2]> {
        let l = trap.length_scale() * 1e6;
        self.positions.iter().map(|p| [p[0] * l, p[1] * l]).collect()
    }

    pub fn centroid(&self) -> [f64; 2] {
        centroid(&self.positions)
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(self.positions[i], self.positions[j])
    }

    pub fn min_pair_distance(&self) -> f64 {
        let mut m = f64::INFINITY;
        for i in 0..self.n_ions {
            for j in i + 1..self.n_ions {
                m = m.min(self.distance(i, j));
            }
        }
        m
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn centroid(p: &[[f64; 2]]) -> [f64; 2] {
    let n = p.len().max(1) as f64;
    let (sx, sy) = p.iter().fold((0.0, 0.0), |(sx, sy), q| (sx + q[0], sy + q[1]));
    [sx / n, sy / n]
}

/// Energy and analytic gradient of the dimensionless trap-plus-Coulomb potential.
pub fn dimensionless_potential(positions: &[[f64; 2]], trap: &TrapParams) -> Result<(f64, Vec<[f64; 2]>)> {
    potential_with(positions, trap.a_x(), trap.a_y())
}

fn potential_with(positions: &[[f64; 2]], ax: f64, ay: f64) -> Result<(f64, Vec<[f64; 2]>)> {
    let n = positions.len();
    let mut energy = 0.0;
    let mut grad = vec![[0.0; 2]; n];
    for (i, p) in positions.iter().enumerate() {
        energy += 0.5 * (ax * p[0] * p[0] + ay * p[1] * p[1]);
        grad[i][0] += ax * p[0];
        grad[i][1] += ay * p[1];
    }
    for i in 0..n {
        for j in i + 1..n {
            let dx = positions[i][0] - positions[j][0];
            let dy = positions[i][1] - positions[j][1];
            let r = dx.hypot(dy);
            if !(r >= COINCIDENT_DISTANCE) {
                return Err(Error::CoincidentIons(i, j, r));
            }
            let inv = 1.0 / r;
            energy += inv;
            let inv3 = inv * inv * inv;
            grad[i][0] -= dx * inv3;
            grad[i][1] -= dy * inv3;
            grad[j][0] += dx * inv3;
            grad[j][1] += dy * inv3;
        }
    }
    Ok((energy, grad))
}

/// In-plane Hessian (2N×2N, coordinates interleaved x0, y0, x1, ...).
pub fn in_plane_hessian(positions: &[[f64; 2]], trap: &TrapParams) -> DMatrix<f64> {
    hessian_with(positions, trap.a_x(), trap.a_y())
}

fn hessian_with(positions: &[[f64; 2]], ax: f64, ay: f64) -> DMatrix<f64> {
    let n = positions.len();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        h[(2 * i, 2 * i)] += ax;
        h[(2 * i + 1, 2 * i + 1)] += ay;
    }
    for i in 0..n {
        for j in i + 1..n {
            let r = [positions[i][0] - positions[j][0], positions[i][1] - positions[j][1]];
            let d = r[0].hypot(r[1]);
            let d3 = d * d * d;
            let d5 = d3 * d * d;
            for a in 0..2 {
                for b in 0..2 {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    let block = 3.0 * r[a] * r[b] / d5 - delta / d3;
                    h[(2 * i + a, 2 * i + b)] += block;
                    h[(2 * j + a, 2 * j + b)] += block;
                    h[(2 * i + a, 2 * j + b)] -= block;
                    h[(2 * j + a, 2 * i + b)] -= block;
                }
            }
        }
    }
    h
}

/// Dimensionless transverse stiffness: `K_ii = a_z − Σ_k 1/d_ik³`, `K_ij = 1/d_ij³`.
pub fn transverse_stiffness(positions: &[[f64; 2]], a_z: f64) -> DMatrix<f64> {
    let n = positions.len();
    let mut k = DMatrix::from_diagonal_element(n, n, a_z);
    for i in 0..n {
        for j in i + 1..n {
            let inv3 = dist(positions[i], positions[j]).powi(-3);
            k[(i, j)] = inv3;
            k[(j, i)] = inv3;
            k[(i, i)] -= inv3;
            k[(j, j)] -= inv3;
        }
    }
    k
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub min_in_plane_eigenvalue: f64,
    pub min_transverse_eigenvalue: f64,
    pub planar_unstable: bool,
}

pub fn verify_stability(crystal: &IonCrystal, trap: &TrapParams) -> StabilityReport {
    let min_eig = |m: DMatrix<f64>| {
        if m.nrows() == 0 {
            return f64::INFINITY;
        }
        SymmetricEigen::new(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let min_in_plane_eigenvalue = min_eig(in_plane_hessian(&crystal.positions, trap));
    let min_transverse_eigenvalue = min_eig(transverse_stiffness(&crystal.positions, trap.a_z()));
    StabilityReport {
        min_in_plane_eigenvalue,
        min_transverse_eigenvalue,
        planar_unstable: min_transverse_eigenvalue <= 0.0,
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MinimizerOptions {
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizerOptions {
    fn default() -> Self {
        MinimizerOptions {
            grad_tol: DEFAULT_GRAD_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

fn flatten(p: &[[f64; 2]]) -> Vec<f64> {
    p.iter().flat_map(|q| [q[0], q[1]]).collect()
}

fn unflatten(x: &[f64]) -> Vec<[f64; 2]> {
    x.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

struct Relaxed {
    positions: Vec<[f64; 2]>,
    energy: f64,
    grad_norm: f64,
}

/// Quasi-Newton descent followed by a few Newton steps in the non-singular
/// subspace of the Hessian to reach the tight gradient tolerance.
fn relax(start: Vec<[f64; 2]>, ax: f64, ay: f64, opts: MinimizerOptions) -> Option<Relaxed> {
    let objective = |x: &[f64]| {
        potential_with(&unflatten(x), ax, ay)
            .ok()
            .map(|(e, g)| (e, flatten(&g)))
    };
    // L-BFGS gets a looser target; Newton finishes.
    let coarse_tol = (opts.grad_tol * 1e3).max(1e-8);
    let out = lbfgs(flatten(&start), objective, coarse_tol, opts.max_iters)?;
    let mut x = out.x;
    let mut used = out.iterations;
    let (mut e, g) = potential_with(&unflatten(&x), ax, ay).ok()?;
    let mut g = flatten(&g);
    let mut gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();

    while gn >= opts.grad_tol && used < opts.max_iters {
        used += 1;
        let h = hessian_with(&unflatten(&x), ax, ay);
        let eig = SymmetricEigen::new(h);
        let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        let mut step = vec![0.0; x.len()];
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam.abs() <= 1e-10 * scale {
                continue;
            }
            let v = eig.eigenvectors.column(k);
            let coef = v.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / lam.abs();
            step.iter_mut().zip(v.iter()).for_each(|(s, vi)| *s -= coef * vi);
        }
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            if let Ok((et, gt)) = potential_with(&unflatten(&trial), ax, ay) {
                let gt = flatten(&gt);
                let gtn = gt.iter().map(|v| v * v).sum::<f64>().sqrt();
                if gtn < gn || et < e {
                    x = trial;
                    e = et;
                    g = gt;
                    gn = gtn;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }

    Some(Relaxed {
        positions: unflatten(&x),
        energy: e,
        grad_norm: gn,
    })
}

fn quantize(v: f64) -> i64 {
    (v * 1e9).round() as i64
}

fn sorted_lex(mut p: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    p.sort_by_key(|q| (quantize(q[0]), quantize(q[1])));
    p
}

fn lex_key(p: &[[f64; 2]]) -> Vec<(i64, i64)> {
    p.iter().map(|q| (quantize(q[0]), quantize(q[1]))).collect()
}

/// Fixes the residual symmetry freedom so equal crystals print identically.
fn canonicalize(positions: Vec<[f64; 2]>, isotropic: bool) -> Vec<[f64; 2]> {
    let mut p = positions;
    if isotropic {
        let c = centroid(&p);
        let far = p
            .iter()
            .map(|q| dist(*q, c))
            .enumerate()
            .fold((0, -1.0), |best, (i, r)| if r > best.1 { (i, r) } else { best });
        if far.1 > 1e-12 {
            let (dx, dy) = (p[far.0][0] - c[0], p[far.0][1] - c[1]);
            let theta = -dy.atan2(dx);
            let (s, co) = theta.sin_cos();
            p = p
                .iter()
                .map(|q| {
                    let (x, y) = (q[0] - c[0], q[1] - c[1]);
                    [co * x - s * y + c[0], s * x + co * y + c[1]]
                })
                .collect();
        }
    }
    let mirrors: &[[f64; 2]] = if isotropic {
        &[[1.0, 1.0], [1.0, -1.0]]
    } else {
        &[[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]]
    };
    mirrors
        .iter()
        .map(|m| sorted_lex(p.iter().map(|q| [m[0] * q[0], m[1] * q[1]]).collect()))
        .min_by(|a, b| lex_key(a).cmp(&lex_key(b)))
        .unwrap_or_default()
}

fn finish(relaxed: Relaxed, trap: &TrapParams) -> Result<IonCrystal> {
    let positions = canonicalize(relaxed.positions, trap.is_isotropic_in_plane());
    let (energy, grad) = dimensionless_potential(&positions, trap)?;
    let grad_norm = grad.iter().map(|g| g[0] * g[0] + g[1] * g[1]).sum::<f64>().sqrt();
    Ok(IonCrystal {
        n_ions: positions.len(),
        positions,
        potential_energy: energy,
        gradient_norm: grad_norm,
    })
}

/// Uniform sample in a disc of radius `2·√N`.
fn random_start(n: usize, seed: u64, restart: usize) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    let radius = 2.0 * (n as f64).sqrt();
    (0..n)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect()
}

/// Lowest-energy stationary configuration over `restarts` random starts.
pub fn equilibrium_positions(trap: &TrapParams, n_ions: usize, restarts: usize, rng_seed: u64) -> Result<IonCrystal> {
    equilibrium_positions_with(trap, n_ions, restarts, rng_seed, MinimizerOptions::default())
}

pub fn equilibrium_positions_with(
    trap: &TrapParams,
    n_ions: usize,
    restarts: usize,
    rng_seed: u64,
    opts: MinimizerOptions,
) -> Result<IonCrystal> {
    trap.validate()?;
    trap.check_planar()?;
    if restarts == 0 {
        return Err(Error::validation("trap.restarts", "at least one restart is required"));
    }
    if n_ions == 0 {
        return Err(Error::validation("trap.n_ions", "at least one ion is required"));
    }
    let (ax, ay) = (trap.a_x(), trap.a_y());
    let runs = par::map_range(restarts, |r| relax(random_start(n_ions, rng_seed, r), ax, ay, opts));

    let mut best: Option<Relaxed> = None;
    let mut best_grad = f64::INFINITY;
    for run in runs.into_iter().flatten() {
        best_grad = best_grad.min(run.grad_norm);
        if run.grad_norm >= opts.grad_tol {
            continue;
        }
        // strict improvement beyond round-off keeps the lower restart index on ties
        let better = match &best {
            None => true,
            Some(b) => run.energy < b.energy - 1e-12 * b.energy.abs().max(1.0),
        };
        if better {
            best = Some(run);
        }
    }
    match best {
        Some(b) => finish(b, trap),
        None => Err(Error::NoConvergence {
            grad_tol: opts.grad_tol,
            max_iters: opts.max_iters,
            best: best_grad,
        }),
    }
}

/// Relaxes a given configuration (no random restarts).
pub fn relax_from(trap: &TrapParams, start: &[[f64; 2]]) -> Result<IonCrystal> {
    let opts = MinimizerOptions::default();
    dimensionless_potential(start, trap)?;
    let relaxed = relax(start.to_vec(), trap.a_x(), trap.a_y(), opts).ok_or(Error::NoConvergence {
        grad_tol: opts.grad_tol,
        max_iters: opts.max_iters,
        best: f64::NAN,
    })?;
    if relaxed.grad_norm >= opts.grad_tol {
        return Err(Error::NoConvergence {
            grad_tol: opts.grad_tol,
            max_iters: opts.max_iters,
            best: relaxed.grad_norm,
        });
    }
    finish(relaxed, trap)
}

/// Named trap configuration (frequencies are `ω/2π` in kHz, ¹⁷¹Yb⁺ ions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrapPreset {
    pub name: &'static str,
    pub n_ions: usize,
    pub fx_khz: f64,
    pub fy_khz: f64,
    pub fz_khz: f64,
    pub description: &'static str,
}

impl TrapPreset {
    pub fn trap(&self) -> TrapParams {
        TrapParams::ytterbium_khz(self.fx_khz, self.fy_khz, self.fz_khz).expect("preset frequencies are valid")
    }
}

// In-plane anisotropies were chosen by scanning until the target geometry
// class is the lowest minimum over the default restarts (see tests).
pub const TRAP_PRESETS: &[TrapPreset] = &[
    TrapPreset {
        name: "pair2",
        n_ions: 2,
        fx_khz: 500.0,
        fy_khz: 500.0,
        fz_khz: 1450.0,
        description: "two ions, isotropic in-plane confinement",
    },
    TrapPreset {
        name: "rhombus4",
        n_ions: 4,
        fx_khz: 500.0,
        fy_khz: 650.0,
        fz_khz: 1450.0,
        description: "four ions forming a rhombus of two near-equilateral triangles",
    },
    TrapPreset {
        name: "hexagon7",
        n_ions: 7,
        fx_khz: 500.0,
        fy_khz: 500.0,
        fz_khz: 1450.0,
        description: "seven ions, centered hexagon",
    },
    TrapPreset {
        name: "crystal10",
        n_ions: 10,
        fx_khz: 450.0,
        fy_khz: 450.0,
        fz_khz: 1450.0,
        description: "ten ions, two inner ions inside an eight-ion ring",
    },
    TrapPreset {
        name: "crystal12",
        n_ions: 12,
        fx_khz: 420.0,
        fy_khz: 420.0,
        fz_khz: 1450.0,
        description: "twelve ions, three inner ions inside a nine-ion ring",
    },
];

pub fn trap_preset(name: &str) -> Result<&'static TrapPreset> {
    TRAP_PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}
