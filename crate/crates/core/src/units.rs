//! Physical constants and the frequency conventions used at the interfaces.
//!
//! Config and CLI values are frequencies `f = ω/2π` (kHz, MHz); internally
//! everything is angular frequency in rad/s with ħ = 1 for the spin dynamics.

use std::f64::consts::PI;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const HBAR: f64 = 1.054_571_817e-34;

/// Mass of a ¹⁷¹Yb⁺ ion in amu.
pub const YB171_MASS_AMU: f64 = 170.936_331_5;

/// Hyperfine qubit splitting of ¹⁷¹Yb⁺, Hz.
pub const YB171_HYPERFINE_HZ: f64 = 12.642_812e9;

pub fn khz(f_khz: f64) -> f64 {
    2.0 * PI * f_khz * 1e3
}

pub fn mhz(f_mhz: f64) -> f64 {
    2.0 * PI * f_mhz * 1e6
}

pub fn to_khz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e3)
}

pub fn to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI * 1e6)
}
