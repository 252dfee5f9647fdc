//! AC-Stark shifts of the clock states in the rotating-wave approximation,
//! the differential (clock) shift, the compensating-field shift, the
//! cancelling intensity ratio and spontaneous scattering.
//!
//! Each line contributes `3πc²Γ_j / (2ω_j³) · c_ij / Δ_ij · I` to the energy
//! of state i, with Δ_ij = ω_L − ω_ij and ω_j the line frequency.

use std::f64::consts::PI;

use crate::atomic::{AtomSpecies, ClockState, LineLabel, TransitionLine};
use crate::constants::{HBAR, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Energy shift per unit intensity times detuning (J·rad/s per W/m²).
fn line_prefactor(line: &TransitionLine) -> f64 {
    3.0 * PI * SPEED_OF_LIGHT * SPEED_OF_LIGHT * line.linewidth / (2.0 * line.frequency.powi(3))
}

fn checked_detuning(species: &AtomSpecies, line: &TransitionLine, state: ClockState, omega_l: f64) -> Result<f64> {
    let delta = species.detunings(line, omega_l).get(state);
    let omega_ij = line.transition_frequency(state, species.hfs_splitting);
    if delta == 0.0 || delta.abs() < 1e-13 * omega_ij {
        return Err(Error::Resonant {
            line: line.label.to_string(),
            state: state.to_string(),
        });
    }
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineContribution {
    pub label: LineLabel,
    /// Shift of |0⟩ (rad/s).
    pub lower: f64,
    /// Shift of |1⟩ (rad/s).
    pub upper: f64,
}

/// State shifts and their per-line parts, all in rad/s.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftBreakdown {
    pub lower: f64,
    pub upper: f64,
    /// upper − lower
    pub differential: f64,
    pub per_line: Vec<LineContribution>,
}

pub fn shift_breakdown(species: &AtomSpecies, omega_l: f64, intensity: f64) -> Result<ShiftBreakdown> {
    let mut per_line = Vec::with_capacity(species.lines.len());
    for line in &species.lines {
        let a = line_prefactor(line) * intensity / HBAR;
        let d0 = checked_detuning(species, line, ClockState::Lower, omega_l)?;
        let d1 = checked_detuning(species, line, ClockState::Upper, omega_l)?;
        per_line.push(LineContribution {
            label: line.label,
            lower: a * line.coupling_lower / d0,
            upper: a * line.coupling_upper / d1,
        });
    }
    let lower: f64 = per_line.iter().map(|c| c.lower).sum();
    let upper: f64 = per_line.iter().map(|c| c.upper).sum();
    Ok(ShiftBreakdown {
        lower,
        upper,
        differential: upper - lower,
        per_line,
    })
}

/// Light shift ΔE_i (J) of `state` in a field of angular frequency `omega_l`
/// and intensity `intensity` (W/m²).
pub fn ac_stark_shift(species: &AtomSpecies, state: ClockState, omega_l: f64, intensity: f64) -> Result<f64> {
    let mut total = 0.0;
    for line in &species.lines {
        let delta = checked_detuning(species, line, state, omega_l)?;
        total += line_prefactor(line) * line.coupling(state) / delta;
    }
    Ok(total * intensity)
}

/// Change of the clock frequency caused by the trap light (rad/s).
/// Negative for red-detuned light.
pub fn differential_shift(species: &AtomSpecies, omega_l: f64, intensity: f64) -> Result<f64> {
    Ok(shift_breakdown(species, omega_l, intensity)?.differential)
}

/// The line whose two ground-state transitions bracket `omega_c`.
pub fn bracketing_line(species: &AtomSpecies, omega_c: f64) -> Option<&TransitionLine> {
    species.lines.iter().find(|line| {
        let hi = line.transition_frequency(ClockState::Lower, species.hfs_splitting);
        let lo = line.transition_frequency(ClockState::Upper, species.hfs_splitting);
        lo < omega_c && omega_c < hi
    })
}

/// Differential shift produced by a compensation field tuned between the
/// two ground-state transitions of one line (rad/s, positive).
pub fn compensation_shift(species: &AtomSpecies, omega_c: f64, intensity: f64) -> Result<f64> {
    if bracketing_line(species, omega_c).is_none() {
        return Err(Error::CompensationWindow { omega_c });
    }
    differential_shift(species, omega_c, intensity)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityRatio {
    /// Peak-intensity ratio I_c/I that cancels the differential shift.
    pub exact: f64,
    /// (ω_HFS / 2Δ_eff)²
    pub approximate: f64,
    /// Effective trap-laser detuning used by the approximation (rad/s).
    pub effective_detuning: f64,
}

/// Effective detuning of the trap light for the single-line scaling law:
/// 1/Δ_eff² = Σ_j (c_j / c_comp) / Δ_j², where c_comp is the coupling of the
/// line the compensation field drives.
pub fn effective_detuning(species: &AtomSpecies, omega_l: f64, comp_line: &TransitionLine) -> f64 {
    let c_ref = 0.5 * (comp_line.coupling_lower + comp_line.coupling_upper);
    let inv_sq: f64 = species
        .lines
        .iter()
        .map(|line| {
            let c = 0.5 * (line.coupling_lower + line.coupling_upper);
            let delta = omega_l - (line.frequency + line.excited_offset);
            (c / c_ref) / (delta * delta)
        })
        .sum();
    -inv_sq.sqrt().recip()
}

pub fn required_intensity_ratio(species: &AtomSpecies, omega_l: f64, omega_c: f64) -> Result<IntensityRatio> {
    let trap = differential_shift(species, omega_l, 1.0)?;
    let comp = compensation_shift(species, omega_c, 1.0)?;
    if trap * comp >= 0.0 {
        return Err(Error::NoCancellation);
    }
    let line = bracketing_line(species, omega_c).expect("checked by compensation_shift");
    let delta_eff = effective_detuning(species, omega_l, line);
    let approx = (species.hfs_splitting / (2.0 * delta_eff)).powi(2);
    Ok(IntensityRatio {
        exact: -trap / comp,
        approximate: approx,
        effective_detuning: delta_eff,
    })
}

/// Photon scattering rate of `state` (1/s).
pub fn scattering_rate(species: &AtomSpecies, state: ClockState, omega_l: f64, intensity: f64) -> Result<f64> {
    let mut total = 0.0;
    for line in &species.lines {
        let delta = checked_detuning(species, line, state, omega_l)?;
        // line_prefactor carries one factor of Γ already
        total += line_prefactor(line) / HBAR * line.linewidth / (delta * delta) * line.coupling(state);
    }
    Ok(total * intensity)
}

fn mean_scattering_rate(species: &AtomSpecies, omega_l: f64, intensity: f64) -> Result<f64> {
    Ok(0.5
        * (scattering_rate(species, ClockState::Lower, omega_l, intensity)?
            + scattering_rate(species, ClockState::Upper, omega_l, intensity)?))
}

/// Ratio of compensation to trap scattering for identical intensity profiles
/// with I_c = η·I. Rates are averaged over the two clock states.
pub fn scattering_ratio(species: &AtomSpecies, omega_l: f64, omega_c: f64, eta: f64) -> Result<f64> {
    let trap = mean_scattering_rate(species, omega_l, 1.0)?;
    let comp = mean_scattering_rate(species, omega_c, eta)?;
    Ok(comp / trap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::rubidium85;
    use crate::constants::{rad_to_hz, thermal_energy, wavelength_to_omega};

    fn trap() -> f64 {
        wavelength_to_omega(810.1e-9)
    }
    fn comp() -> f64 {
        wavelength_to_omega(794.978e-9)
    }

    #[test]
    fn zero_field_gives_zero() {
        let rb = rubidium85();
        assert_eq!(ac_stark_shift(&rb, ClockState::Upper, trap(), 0.0).unwrap(), 0.0);
        assert_eq!(differential_shift(&rb, trap(), 0.0).unwrap(), 0.0);
        assert_eq!(compensation_shift(&rb, comp(), 0.0).unwrap(), 0.0);
        assert_eq!(scattering_rate(&rb, ClockState::Lower, trap(), 0.0).unwrap(), 0.0);
        assert_eq!(scattering_ratio(&rb, trap(), comp(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn central_trap_depth_magnitude() {
        let rb = rubidium85();
        let e = ac_stark_shift(&rb, ClockState::Upper, trap(), 3.35e7).unwrap();
        assert!(e < 0.0);
        let target = thermal_energy(40e-6);
        assert!((e.abs() - target).abs() / target < 0.25, "{}", e / target);
    }

    #[test]
    fn naive_loop_agrees() {
        let rb = rubidium85();
        let i = 3.35e7;
        for state in [ClockState::Lower, ClockState::Upper] {
            let fast = ac_stark_shift(&rb, state, trap(), i).unwrap();
            let mut naive = 0.0;
            for line in &rb.lines {
                let omega_ij = line.transition_frequency(state, rb.hfs_splitting);
                let delta = trap() - omega_ij;
                naive += 3.0 * PI * SPEED_OF_LIGHT.powi(2) * line.linewidth / (2.0 * line.frequency.powi(3))
                    * line.coupling(state)
                    / delta
                    * i;
            }
            assert!((fast - naive).abs() <= 1e-12 * naive.abs());
        }
    }

    #[test]
    fn sign_structure_and_linearity() {
        let rb = rubidium85();
        let d1 = differential_shift(&rb, trap(), 1e7).unwrap();
        let d2 = differential_shift(&rb, trap(), 2e7).unwrap();
        assert!(d1 < 0.0);
        assert!((d2 - 2.0 * d1).abs() <= 1e-14 * d1.abs());
        let c = compensation_shift(&rb, comp(), 1.0).unwrap();
        assert!(c > 0.0);
    }

    #[test]
    fn breakdown_sums_to_totals() {
        let rb = rubidium85();
        let b = shift_breakdown(&rb, trap(), 3.35e7).unwrap();
        let lower: f64 = b.per_line.iter().map(|c| c.lower).sum();
        assert!((lower - b.lower).abs() <= 1e-12 * b.lower.abs());
        assert_eq!(b.differential, b.upper - b.lower);
        let via_energy = ac_stark_shift(&rb, ClockState::Lower, trap(), 3.35e7).unwrap() / HBAR;
        assert!((via_energy - b.lower).abs() <= 1e-12 * b.lower.abs());
    }

    #[test]
    fn midpoint_compensation_terms_add() {
        let rb = rubidium85();
        let d1 = rb.line(LineLabel::D1).unwrap();
        // exact midpoint between the two D1 ground-state transitions
        let b = shift_breakdown(&rb, d1.frequency, 1.0).unwrap();
        let c = b.per_line.iter().find(|c| c.label == LineLabel::D1).unwrap();
        assert!((c.lower + c.upper).abs() <= 1e-9 * c.upper.abs());
        assert!(c.upper > 0.0 && c.lower < 0.0);
        assert!((c.upper - c.lower - 2.0 * c.upper).abs() <= 1e-9 * c.upper);
    }

    #[test]
    fn resonance_and_window_errors() {
        let rb = rubidium85();
        let d1 = rb.line(LineLabel::D1).unwrap();
        let resonant = d1.transition_frequency(ClockState::Lower, rb.hfs_splitting);
        match ac_stark_shift(&rb, ClockState::Lower, resonant, 1.0) {
            Err(Error::Resonant { line, .. }) => assert_eq!(line, "D1"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            compensation_shift(&rb, trap(), 1.0),
            Err(Error::CompensationWindow { .. })
        ));
    }

    #[test]
    fn ratio_solves_cancellation() {
        let rb = rubidium85();
        let eta = required_intensity_ratio(&rb, trap(), comp()).unwrap();
        for i in [1.0, 1e9] {
            let total = differential_shift(&rb, trap(), i).unwrap()
                + compensation_shift(&rb, comp(), eta.exact * i).unwrap();
            let scale = differential_shift(&rb, trap(), i).unwrap().abs();
            assert!(total.abs() <= 1e-10 * scale);
        }
        assert!(eta.exact > 1.05e-7 / 3.0 && eta.exact < 1.05e-7 * 3.0, "{}", eta.exact);
        assert!(rad_to_hz(eta.effective_detuning) < 0.0);
    }

    #[test]
    fn blue_trap_still_needs_compensation() {
        let rb = rubidium85();
        let blue = wavelength_to_omega(760e-9);
        assert!(differential_shift(&rb, blue, 1.0).unwrap() < 0.0);
        assert!(required_intensity_ratio(&rb, blue, comp()).is_ok());
        // trap light inside the same hyperfine window shifts the same way
        assert!(matches!(
            required_intensity_ratio(&rb, comp(), comp()),
            Err(Error::NoCancellation)
        ));
    }

    #[test]
    fn scattering_scales() {
        let rb = rubidium85();
        let r1 = scattering_rate(&rb, ClockState::Lower, trap(), 1e7).unwrap();
        let r2 = scattering_rate(&rb, ClockState::Lower, trap(), 3e7).unwrap();
        assert!((r2 - 3.0 * r1).abs() <= 1e-13 * r2);
        let eta = required_intensity_ratio(&rb, trap(), comp()).unwrap().exact;
        let a = scattering_ratio(&rb, trap(), comp(), eta).unwrap();
        let b = scattering_ratio(&rb, trap(), comp(), 2.0 * eta).unwrap();
        assert!((b - 2.0 * a).abs() <= 1e-13 * b);
        assert!((a - 1.0).abs() < 0.3, "{a}");
    }

    #[test]
    fn scattering_follows_shift_over_detuning() {
        // per line, ħΓ_sc = (Γ/Δ)·U
        let rb = rubidium85();
        let b = shift_breakdown(&rb, trap(), 3.775e7).unwrap();
        let expect: f64 = rb
            .lines
            .iter()
            .zip(&b.per_line)
            .map(|(line, c)| {
                let d = rb.detunings(line, trap()).lower;
                line.linewidth / d * c.lower
            })
            .sum();
        let rate = scattering_rate(&rb, ClockState::Lower, trap(), 3.775e7).unwrap();
        assert!((rate - expect).abs() < 1e-12 * expect);
        assert!(rate > 1.5 && rate < 6.0, "{rate}");
    }
}
