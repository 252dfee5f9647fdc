//! Species definitions: D-line table, ground-state hyperfine splitting and
//! the quadratic Zeeman coefficient of the m_F = 0 clock pair.
//!
//! Species files are TOML in laboratory units (nm, Hz, u). Everything inside
//! [`AtomSpecies`] is SI with angular frequencies in rad/s.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constants::{hz_to_rad, wavelength_to_omega, ATOMIC_MASS_UNIT, BOHR_MAGNETON_HZ_PER_T};
use crate::error::{ensure_positive, Error, Result};

/// Fine-structure line label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LineLabel {
    D1,
    D2,
}

impl LineLabel {
    /// Line-strength share for linearly polarized, far-detuned light.
    pub fn default_coupling(self) -> f64 {
        match self {
            LineLabel::D1 => 1.0 / 3.0,
            LineLabel::D2 => 2.0 / 3.0,
        }
    }
}

impl std::fmt::Display for LineLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LineLabel::D1 => f.write_str("D1"),
            LineLabel::D2 => f.write_str("D2"),
        }
    }
}

/// One of the two clock states. `Lower` is |0⟩ (F = I - 1/2),
/// `Upper` is |1⟩ (F = I + 1/2), separated by the hyperfine splitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClockState {
    Lower,
    Upper,
}

impl std::fmt::Display for ClockState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClockState::Lower => f.write_str("|0>"),
            ClockState::Upper => f.write_str("|1>"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLine {
    pub label: LineLabel,
    /// Line frequency (rad/s), taken as the midpoint between the transitions
    /// from the two clock states.
    pub frequency: f64,
    /// Natural linewidth Γ (rad/s).
    pub linewidth: f64,
    pub coupling_lower: f64,
    pub coupling_upper: f64,
    /// Effective excited-state hyperfine offset (rad/s), applied equally to
    /// both clock-state transitions.
    pub excited_offset: f64,
}

/// Laser detunings Δ = ω_L − ω_ij from both clock states for one line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detunings {
    pub lower: f64,
    pub upper: f64,
}

impl Detunings {
    pub fn get(&self, state: ClockState) -> f64 {
        match state {
            ClockState::Lower => self.lower,
            ClockState::Upper => self.upper,
        }
    }
}

impl TransitionLine {
    pub fn coupling(&self, state: ClockState) -> f64 {
        match state {
            ClockState::Lower => self.coupling_lower,
            ClockState::Upper => self.coupling_upper,
        }
    }

    /// Transition frequency from `state` given the ground hyperfine splitting.
    pub fn transition_frequency(&self, state: ClockState, hfs: f64) -> f64 {
        let centre = self.frequency + self.excited_offset;
        match state {
            ClockState::Lower => centre + 0.5 * hfs,
            ClockState::Upper => centre - 0.5 * hfs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpecies {
    pub name: String,
    /// kg
    pub mass: f64,
    /// Ground-state hyperfine splitting ω_HFS (rad/s).
    pub hfs_splitting: f64,
    /// Sorted by frequency, ascending.
    pub lines: Vec<TransitionLine>,
    /// Quadratic Zeeman coefficient of the clock transition (Hz/T²).
    pub zeeman_k: f64,
    config: SpeciesConfig,
}

impl AtomSpecies {
    /// Detunings of a laser at `omega_l` from both clock-state transitions of
    /// `line`. The upper-state detuning is built as lower + ω_HFS.
    pub fn detunings(&self, line: &TransitionLine, omega_l: f64) -> Detunings {
        let lower = omega_l - line.transition_frequency(ClockState::Lower, self.hfs_splitting);
        let upper = lower + self.hfs_splitting;
        debug_assert!(
            ((upper - lower) - self.hfs_splitting).abs() <= 1e-12 * lower.abs().max(self.hfs_splitting)
        );
        Detunings { lower, upper }
    }

    pub fn line(&self, label: LineLabel) -> Option<&TransitionLine> {
        self.lines.iter().find(|l| l.label == label)
    }

    /// The configuration record this species was built from.
    pub fn config(&self) -> &SpeciesConfig {
        &self.config
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&self.config)?)
    }
}

/// On-disk species record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesConfig {
    pub name: Option<String>,
    pub mass_u: Option<f64>,
    pub hfs_splitting_hz: Option<f64>,
    pub zeeman_k_hz_per_t2: Option<f64>,
    #[serde(default)]
    pub lines: Vec<LineConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub label: Option<LineLabel>,
    pub wavelength_nm: Option<f64>,
    pub linewidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub excited_offset_hz: Option<f64>,
}

fn require<T: Clone>(value: &Option<T>, name: &str) -> Result<T> {
    value.clone().ok_or_else(|| Error::MissingField(name.to_string()))
}

fn check_coupling(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value <= 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in (0, 1], got {value}")))
    }
}

/// Validate a species record and convert it to internal units.
pub fn load_species(config: &SpeciesConfig) -> Result<AtomSpecies> {
    let name = require(&config.name, "name")?;
    let mass_u = require(&config.mass_u, "mass_u")?;
    ensure_positive("mass_u", mass_u)?;
    let hfs_hz = require(&config.hfs_splitting_hz, "hfs_splitting_hz")?;
    ensure_positive("hfs_splitting_hz", hfs_hz)?;
    let zeeman_k = require(&config.zeeman_k_hz_per_t2, "zeeman_k_hz_per_t2")?;
    ensure_positive("zeeman_k_hz_per_t2", zeeman_k)?;
    if config.lines.is_empty() {
        return Err(Error::MissingField("lines".into()));
    }

    let mut lines = Vec::with_capacity(config.lines.len());
    for (i, lc) in config.lines.iter().enumerate() {
        let field = |f: &str| format!("lines[{i}].{f}");
        let label = require(&lc.label, &field("label"))?;
        if lines.iter().any(|l: &TransitionLine| l.label == label) {
            return Err(Error::DuplicateLine(label.to_string()));
        }
        let wavelength_nm = require(&lc.wavelength_nm, &field("wavelength_nm"))?;
        ensure_positive(&field("wavelength_nm"), wavelength_nm)?;
        let linewidth_hz = require(&lc.linewidth_hz, &field("linewidth_hz"))?;
        ensure_positive(&field("linewidth_hz"), linewidth_hz)?;
        let coupling_lower = lc.coupling_lower.unwrap_or(label.default_coupling());
        let coupling_upper = lc.coupling_upper.unwrap_or(coupling_lower);
        check_coupling(&field("coupling_lower"), coupling_lower)?;
        check_coupling(&field("coupling_upper"), coupling_upper)?;
        let excited_offset_hz = lc.excited_offset_hz.unwrap_or(0.0);
        if !excited_offset_hz.is_finite() {
            return Err(Error::Config(format!("{} is not finite", field("excited_offset_hz"))));
        }
        lines.push(TransitionLine {
            label,
            frequency: wavelength_to_omega(wavelength_nm * 1e-9),
            linewidth: hz_to_rad(linewidth_hz),
            coupling_lower,
            coupling_upper,
            excited_offset: hz_to_rad(excited_offset_hz),
        });
    }
    lines.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));

    Ok(AtomSpecies {
        name,
        mass: mass_u * ATOMIC_MASS_UNIT,
        hfs_splitting: hz_to_rad(hfs_hz),
        lines,
        zeeman_k,
        config: config.clone(),
    })
}

pub fn parse_species(text: &str) -> Result<AtomSpecies> {
    let config: SpeciesConfig = toml::from_str(text)?;
    load_species(&config)
}

pub fn read_species(path: impl AsRef<Path>) -> Result<AtomSpecies> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_species(&text)
}

/// Quadratic Zeeman shift of the clock transition, K_B·B², returned in rad/s.
pub fn second_order_zeeman_shift(species: &AtomSpecies, field_tesla: f64) -> f64 {
    debug_assert!(field_tesla >= 0.0);
    hz_to_rad(species.zeeman_k * field_tesla * field_tesla)
}

/// Low-field Breit–Rabi coefficient for the m_F = 0 pair (Hz/T²):
/// ((g_J − g_I) μ_B / h)² / (2 ν_HFS). Cross-check only; the stored
/// coefficient in the species file is authoritative.
pub fn clock_zeeman_coefficient(g_j: f64, g_i: f64, hfs_hz: f64) -> f64 {
    let x = (g_j - g_i) * BOHR_MAGNETON_HZ_PER_T;
    x * x / (2.0 * hfs_hz)
}

/// Built-in Rb-85 record, identical to `config/rb85.toml`.
pub fn rubidium85() -> AtomSpecies {
    parse_species(RB85_TOML).expect("built-in species file is valid")
}

pub const RB85_TOML: &str = include_str!("../../../config/rb85.toml");
