//! Physical constants (CODATA 2018, SI units) and unit helpers.

use std::f64::consts::TAU;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Bohr magneton divided by Planck's constant (Hz/T).
pub const BOHR_MAGNETON_HZ_PER_T: f64 = 1.399_624_493_61e10;
/// Unified atomic mass unit (kg).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    TAU * f
}

#[inline]
pub fn rad_to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Angular frequency of light with vacuum wavelength `lambda` (m).
#[inline]
pub fn wavelength_to_omega(lambda: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / lambda
}

#[inline]
pub fn omega_to_wavelength(omega: f64) -> f64 {
    TAU * SPEED_OF_LIGHT / omega
}

/// Energy of `k_B * T` for a temperature in kelvin.
#[inline]
pub fn thermal_energy(temperature: f64) -> f64 {
    BOLTZMANN * temperature
}
