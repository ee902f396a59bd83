//! Ramped transverse-field evolution and the time-reversal protocol.
//!
//! Propagation runs in the σ_y eigenframe, where the Ising term is diagonal
//! (the classical energy table) and the field term is a product of single-spin
//! σ_x rotations. Steps are symmetric second-order splittings composed to
//! fourth order with the triple-jump coefficients.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingMatrix;
use crate::error::{Error, Result};
use crate::ising::{classical_energies, GroundManifold};
use crate::par;
use crate::state::{self, SpinState, MAX_STATE_SPINS, TO_X_FRAME, TO_Y_FRAME};

/// s
pub const DEFAULT_DURATION: f64 = 300e-6;
pub const DEFAULT_B_END_FRACTION: f64 = 0.01;
/// rad/s
pub const DEFAULT_B0: f64 = 2.0 * std::f64::consts::PI * 29e3;
/// s
pub const DEFAULT_MAX_STEP: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-6;
/// s
pub const DEFAULT_MIN_STEP: f64 = 1e-10;
const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reversed,
}

/// `B(t) = b0/(1 + αt)` with J held constant; the reversed ramp is the mirror
/// image `B(duration − t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampSchedule {
    /// rad/s
    pub b0: f64,
    /// 1/s
    pub alpha: f64,
    /// s
    pub duration: f64,
    pub direction: Direction,
}

impl RampSchedule {
    pub fn new(b0: f64, alpha: f64, duration: f64) -> Result<Self> {
        let s = RampSchedule {
            b0,
            alpha,
            duration,
            direction: Direction::Forward,
        };
        s.validate()?;
        Ok(s)
    }

    /// α chosen so that `B(duration) = end_fraction · b0`.
    pub fn from_end_fraction(b0: f64, duration: f64, end_fraction: f64) -> Result<Self> {
        if !(end_fraction > 0.0 && end_fraction < 1.0) {
            return Err(Error::validation("schedule.b_end_fraction", "must lie in (0, 1)"));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::validation("schedule.duration_us", "must be positive"));
        }
        Self::new(b0, (1.0 / end_fraction - 1.0) / duration, duration)
    }

    pub fn standard() -> Self {
        Self::from_end_fraction(DEFAULT_B0, DEFAULT_DURATION, DEFAULT_B_END_FRACTION)
            .expect("default schedule is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0 && self.b0.is_finite()) {
            return Err(Error::validation("schedule.b0_khz", "must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::validation("schedule.alpha", "must be positive"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::validation("schedule.duration_us", "must be positive"));
        }
        Ok(())
    }

    pub fn field_at(&self, t: f64) -> f64 {
        let tau = match self.direction {
            Direction::Forward => t,
            Direction::Reversed => self.duration - t,
        };
        self.b0 / (1.0 + self.alpha * tau)
    }

    pub fn end_fraction(&self) -> f64 {
        1.0 / (1.0 + self.alpha * self.duration)
    }

    pub fn reversed(&self) -> Self {
        let direction = match self.direction {
            Direction::Forward => Direction::Reversed,
            Direction::Reversed => Direction::Forward,
        };
        RampSchedule { direction, ..*self }
    }

    /// Same start and end fields over `factor` times the duration.
    pub fn slowed(&self, factor: f64) -> Self {
        RampSchedule {
            duration: self.duration * factor,
            alpha: self.alpha / factor,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Initial step, s.
    pub max_step: f64,
    /// Bound on the change of any basis population when the step is halved.
    pub tol: f64,
    /// Halving stops with an error below this step, s.
    pub min_step: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            max_step: DEFAULT_MAX_STEP,
            tol: DEFAULT_TOL,
            min_step: DEFAULT_MIN_STEP,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(Error::validation("schedule.max_step_us", "must be positive"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::validation("schedule.tol", "must be positive"));
        }
        if !(self.min_step > 0.0 && self.min_step <= self.max_step) {
            return Err(Error::validation("schedule.min_step", "must lie in (0, max_step]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    /// s
    pub t: f64,
    /// rad/s
    pub b_field: f64,
    pub state: SpinState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub n_spins: usize,
    pub schedule: RampSchedule,
    /// Accepted step, s.
    pub step: f64,
    /// Largest amplitude change between the accepted run and the run at twice the step.
    pub step_error: f64,
    pub points: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn final_state(&self) -> &SpinState {
        &self.points.last().expect("trajectory has endpoints").state
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.points.iter().map(|p| (p.state.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_8;
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3;

/// Integrator state for one Hamiltonian: the y-frame energy table.
struct Propagator<'a> {
    n: usize,
    energies: &'a [f64],
}

impl Propagator<'_> {
    fn phases(&self, tau: f64) -> Vec<C64> {
        par::map_slice(self.energies, |&e| C64::from_polar(1.0, -e * tau))
    }

    /// `D(h/2) X(h·B(t+h/2)) D(h/2)`, given the phase table for `h/2`.
    fn strang(&self, amps: &mut [C64], half: &[C64], b_mid: f64, h: f64) {
        state::apply_diagonal(amps, half);
        state::apply_all(amps, self.n, &state::x_rotation(h * b_mid));
        state::apply_diagonal(amps, half);
    }

    /// Advances `amps` from `t0` to `t1` in `steps` fourth-order steps;
    /// `t1 < t0` runs the exact inverse of the forward grid.
    fn advance(&self, amps: &mut [C64], schedule: &RampSchedule, t0: f64, t1: f64, steps: usize) {
        if steps == 0 {
            return;
        }
        let h = (t1 - t0) / steps as f64;
        let (a, b) = (YOSHIDA_W1 * h, YOSHIDA_W0 * h);
        let d_a = self.phases(a / 2.0);
        let d_b = self.phases(b / 2.0);
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            self.strang(amps, &d_a, schedule.field_at(t + a / 2.0), a);
            self.strang(amps, &d_b, schedule.field_at(t + a + b / 2.0), b);
            self.strang(amps, &d_a, schedule.field_at(t + a + b + a / 2.0), a);
        }
    }
}

fn check_inputs(state: &SpinState, j: &CouplingMatrix, schedule: &RampSchedule, control: &StepControl) -> Result<()> {
    if state.n_spins > MAX_STATE_SPINS {
        return Err(Error::TooManySpins {
            n: state.n_spins,
            max: MAX_STATE_SPINS,
            what: "evolution",
        });
    }
    if j.n_ions != state.n_spins {
        return Err(Error::DimensionMismatch {
            expected: state.n_spins,
            got: j.n_ions,
        });
    }
    if state.dim() != 1 << state.n_spins {
        return Err(Error::DimensionMismatch {
            expected: 1 << state.n_spins,
            got: state.dim(),
        });
    }
    if (state.norm() - 1.0).abs() > NORM_TOL {
        return Err(Error::validation("state", "amplitudes are not normalized"));
    }
    schedule.validate()?;
    control.validate()
}

/// Sample times clipped to the ramp, sorted, with both endpoints.
fn sample_grid(duration: f64, sample_times: &[f64]) -> Result<Vec<f64>> {
    if let Some(t) = sample_times.iter().find(|t| !t.is_finite() || **t < 0.0 || **t > duration * (1.0 + 1e-12)) {
        return Err(Error::validation("schedule.samples", format!("sample time {t} outside [0, duration]")));
    }
    let mut grid: Vec<f64> = sample_times.iter().map(|t| t.min(duration)).collect();
    grid.push(0.0);
    grid.push(duration);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * duration);
    Ok(grid)
}

/// `count` equally spaced times covering `[0, duration]`.
pub fn uniform_samples(duration: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![duration],
        m => (0..m).map(|i| duration * i as f64 / (m - 1) as f64).collect(),
    }
}

fn run_grid(prop: &Propagator, y0: &[C64], schedule: &RampSchedule, grid: &[f64], h: f64) -> Vec<Vec<C64>> {
    let mut amps = y0.to_vec();
    let mut out = Vec::with_capacity(grid.len());
    out.push(amps.clone());
    for w in grid.windows(2) {
        let steps = ((w[1] - w[0]) / h * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        prop.advance(&mut amps, schedule, w[0], w[1], steps);
        out.push(amps.clone());
    }
    out
}

fn max_distance(a: &[Vec<C64>], b: &[Vec<C64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| u.iter().zip(v).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Integrates `i dψ/dt = H(t)ψ` along the schedule.
///
/// The step starts at `max_step` and is halved until the state at every
/// sample moves by less than `tol/2` in 2-norm, which bounds the change of
/// every basis population in any basis by `tol`.
pub fn evolve(
    state: &SpinState,
    j: &CouplingMatrix,
    schedule: &RampSchedule,
    sample_times: &[f64],
    control: &StepControl,
) -> Result<Trajectory> {
    check_inputs(state, j, schedule, control)?;
    let n = state.n_spins;
    let grid = sample_grid(schedule.duration, sample_times)?;
    let energies = classical_energies(j)?;
    let prop = Propagator { n, energies: &energies };
    let y0 = state::to_y_frame(state);

    let mut h = control.max_step.min(schedule.duration);
    let mut coarse = run_grid(&prop, &y0, schedule, &grid, h);
    let (fine, err) = loop {
        let fine = run_grid(&prop, &y0, schedule, &grid, h / 2.0);
        let err = max_distance(&coarse, &fine);
        if err <= control.tol / 2.0 {
            break (fine, err);
        }
        h /= 2.0;
        if h < control.min_step {
            return Err(Error::StepNotConverged {
                change: 2.0 * err,
                tol: control.tol,
                step: h,
            });
        }
        coarse = fine;
    };

    let points: Vec<TrajectoryPoint> = grid
        .iter()
        .zip(&fine)
        .map(|(&t, amps)| TrajectoryPoint {
            t,
            b_field: schedule.field_at(t),
            state: state::from_y_frame(n, amps),
        })
        .collect();
    let traj = Trajectory {
        n_spins: n,
        schedule: *schedule,
        step: h / 2.0,
        step_error: err,
        points,
    };
    let drift = traj.max_norm_drift();
    if drift > NORM_TOL {
        return Err(Error::StepNotConverged {
            change: drift,
            tol: NORM_TOL,
            step: h / 2.0,
        });
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversalOutcome {
    pub initial: SpinState,
    pub forward_final: SpinState,
    pub returned: SpinState,
    /// Population of the all-(−x) state after the return ramp.
    pub return_probability: f64,
    pub forward: Trajectory,
    pub backward: Trajectory,
}

/// Population of the `S_x = −N/2` state.
pub fn all_minus_x_population(state: &SpinState) -> f64 {
    let mut v = state.amplitudes.clone();
    state::apply_all(&mut v, state.n_spins, &TO_X_FRAME);
    v[0].norm_sqr()
}

/// Forward ramp from `|−x…−x⟩`, then the mirrored ramp back to the initial field.
pub fn time_reversal_protocol(
    j: &CouplingMatrix,
    schedule: &RampSchedule,
    sample_times: &[f64],
    control: &StepControl,
) -> Result<ReversalOutcome> {
    let forward_schedule = RampSchedule {
        direction: Direction::Forward,
        ..*schedule
    };
    let initial = state::initial_state(j.n_ions)?;
    let forward = evolve(&initial, j, &forward_schedule, sample_times, control)?;
    let forward_final = forward.final_state().clone();
    let backward = evolve(&forward_final, j, &forward_schedule.reversed(), sample_times, control)?;
    let returned = backward.final_state().clone();
    Ok(ReversalOutcome {
        return_probability: all_minus_x_population(&returned),
        initial,
        forward_final,
        returned,
        forward,
        backward,
    })
}

/// Forward ramp followed by the exact inverse of the discrete forward
/// propagator; the return probability equals 1 up to rounding.
pub fn exact_inverse_return(
    j: &CouplingMatrix,
    schedule: &RampSchedule,
    control: &StepControl,
) -> Result<f64> {
    let initial = state::initial_state(j.n_ions)?;
    check_inputs(&initial, j, schedule, control)?;
    let energies = classical_energies(j)?;
    let prop = Propagator {
        n: j.n_ions,
        energies: &energies,
    };
    let steps = (schedule.duration / control.max_step).ceil().max(1.0) as usize;
    let mut amps = state::to_y_frame(&initial);
    prop.advance(&mut amps, schedule, 0.0, schedule.duration, steps);
    prop.advance(&mut amps, schedule, schedule.duration, 0.0, steps);
    Ok(all_minus_x_population(&state::from_y_frame(j.n_ions, &amps)))
}

/// y-basis population of the manifold configurations.
pub fn ground_population(state: &SpinState, manifold: &GroundManifold) -> Result<f64> {
    if manifold.n_spins != state.n_spins {
        return Err(Error::DimensionMismatch {
            expected: state.n_spins,
            got: manifold.n_spins,
        });
    }
    let y = state::to_y_frame(state);
    Ok(manifold.configs.iter().map(|&c| y[c].norm_sqr()).sum())
}

/// `⟨H(B)⟩` with `H = Σ J σ_yσ_y + B Σ σ_x`.
pub fn energy_expectation(state: &SpinState, j: &CouplingMatrix, b_field: f64) -> Result<f64> {
    let energies = classical_energies(j)?;
    let mut y = state.amplitudes.clone();
    state::apply_all(&mut y, state.n_spins, &TO_Y_FRAME);
    let ising: f64 = y.iter().zip(&energies).map(|(a, e)| a.norm_sqr() * e).sum();
    Ok(ising + b_field * 2.0 * sx_expectation(state))
}

/// `⟨S_x⟩ = ½ Σ ⟨σ_x^i⟩`.
pub fn sx_expectation(state: &SpinState) -> f64 {
    let n = state.n_spins;
    let mut v = state.amplitudes.clone();
    state::apply_all(&mut v, n, &TO_X_FRAME);
    v.iter()
        .enumerate()
        .map(|(c, a)| a.norm_sqr() * (c.count_ones() as f64 - n as f64 / 2.0))
        .sum()
}

/// `⟨Π σ_x^i⟩`.
pub fn parity_expectation(state: &SpinState) -> f64 {
    let all = state.dim() - 1;
    state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(c, a)| (a.conj() * state.amplitudes[c ^ all]).re)
        .sum()
}

/// Terminal ground-manifold population for each slow-down factor, run in parallel.
pub fn duration_ladder(
    j: &CouplingMatrix,
    schedule: &RampSchedule,
    factors: &[f64],
    manifold: &GroundManifold,
    control: &StepControl,
) -> Result<Vec<f64>> {
    let initial = state::initial_state(j.n_ions)?;
    par::map_slice(factors, |&f| {
        let s = schedule.slowed(f);
        let traj = evolve(&initial, j, &s, &[], control)?;
        ground_population(traj.final_state(), manifold)
    })
    .into_iter()
    .collect()
}
