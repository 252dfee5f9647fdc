//! Trap depth, harmonic trap frequencies, thermal energy sampling and the
//! mapping from motional energy to a time-averaged clock detuning.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atomic::{AtomSpecies, ClockState};
use crate::constants::thermal_energy;
use crate::error::{ensure_positive, Error, Result};
use crate::geometry::{site_peak_intensity, site_power, Site, SiteIndex, TrapArrayScene};
use crate::stark;

/// Derived per-trap quantities. Frequencies are in rad/s, energies in J.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrapSite {
    pub index: SiteIndex,
    pub label: String,
    pub power: f64,
    pub peak_intensity: f64,
    pub depth: f64,
    pub radial_frequency: f64,
    pub axial_frequency: f64,
    /// Trap-bottom differential shift without compensation.
    pub differential_shift: f64,
    /// Trap-bottom differential shift including the compensation field.
    pub residual_shift: f64,
}

/// U = |mean of the two clock-state shifts| at the intensity maximum.
pub fn trap_depth(species: &AtomSpecies, omega_l: f64, peak_intensity: f64) -> Result<f64> {
    let lower = stark::ac_stark_shift(species, ClockState::Lower, omega_l, peak_intensity)?;
    let upper = stark::ac_stark_shift(species, ClockState::Upper, omega_l, peak_intensity)?;
    let mean = 0.5 * (lower + upper);
    if mean > 0.0 {
        return Err(Error::BlueDetuned);
    }
    Ok(-mean)
}

/// Radial and axial harmonic frequencies (rad/s) of a Gaussian focus.
pub fn trap_frequencies(depth: f64, waist: f64, wavelength: f64, mass: f64) -> (f64, f64) {
    let rayleigh = rayleigh_range(waist, wavelength);
    let radial = (4.0 * depth / (mass * waist * waist)).sqrt();
    let axial = (2.0 * depth / (mass * rayleigh * rayleigh)).sqrt();
    (radial, axial)
}

pub fn rayleigh_range(waist: f64, wavelength: f64) -> f64 {
    PI * waist * waist / wavelength
}

/// Assemble the derived quantities of one occupied site with compensation
/// power `compensation_power` (W) in front of the lens array.
pub fn trap_site(scene: &TrapArrayScene, site: &Site, compensation_power: f64) -> Result<TrapSite> {
    let species = &scene.species;
    let omega_l = crate::constants::wavelength_to_omega(scene.trap.wavelength);
    let omega_c = crate::constants::wavelength_to_omega(scene.compensation.wavelength);
    let power = site_power(&scene.trap.beam, &scene.array, site.index)?;
    let peak_intensity = site_peak_intensity(power, &scene.array);
    let depth = trap_depth(species, omega_l, peak_intensity)?;
    let (radial, axial) = if depth > 0.0 {
        trap_frequencies(depth, scene.array.trap_waist, scene.trap.wavelength, species.mass)
    } else {
        (0.0, 0.0)
    };
    let differential = stark::differential_shift(species, omega_l, peak_intensity)?;
    let comp_beam = scene.compensation.effective_beam().with_power(compensation_power);
    let comp_intensity = site_peak_intensity(site_power(&comp_beam, &scene.array, site.index)?, &scene.array);
    let comp = if compensation_power > 0.0 {
        stark::compensation_shift(species, omega_c, comp_intensity)?
    } else {
        0.0
    };
    Ok(TrapSite {
        index: site.index,
        label: site.label.clone(),
        power,
        peak_intensity,
        depth,
        radial_frequency: radial,
        axial_frequency: axial,
        differential_shift: differential,
        residual_shift: differential + comp,
    })
}

/// Seed plus stream number for the counter-based generator. Distinct streams
/// from one seed are independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SamplingStream {
    pub seed: u64,
    pub stream: u64,
}

impl SamplingStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    /// A second, independent stream derived from this one.
    pub fn derived(&self, tag: u64) -> Self {
        Self {
            seed: self.seed,
            stream: self.stream ^ (tag << 48),
        }
    }
}

impl From<u64> for SamplingStream {
    fn from(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyCutoff {
    /// No atoms above the trap depth.
    Truncated,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThermalEnsemble {
    pub site: String,
    /// K
    pub temperature: f64,
    /// Trap depth U (J).
    pub depth: f64,
    /// Motional energies measured from the trap bottom (J).
    pub energies: Vec<f64>,
    pub stream: SamplingStream,
    /// Set when k_B T > U/2; the truncated distribution is then far from
    /// Boltzmann.
    pub heavily_truncated: bool,
}

impl ThermalEnsemble {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn mean_energy(&self) -> f64 {
        self.energies.iter().sum::<f64>() / self.energies.len() as f64
    }
}

/// Regularised lower incomplete gamma P(3, x): the CDF of E/(k_B T) for the
/// density ∝ E² e^{−E/k_B T}.
pub fn gamma3_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        // e^{-x} Σ_{k≥3} x^k / k!
        let mut term = x * x * x / 6.0;
        let mut sum: f64 = 0.0;
        let mut k = 3.0;
        while term > 1e-18 * sum.max(f64::MIN_POSITIVE) {
            sum += term;
            k += 1.0;
            term *= x / k;
        }
        sum * (-x).exp()
    } else {
        1.0 - (-x).exp() * (1.0 + x + 0.5 * x * x)
    }
}

fn gamma3_density(x: f64) -> f64 {
    0.5 * x * x * (-x).exp()
}

/// Solve P(3, x) = target for x in [0, hi].
fn invert_gamma3(target: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, hi);
    let mut x = (6.0 * target).cbrt().min(0.5 * hi).max(1e-300);
    if target > 0.5 {
        x = 3.0f64.min(0.5 * hi);
    }
    for _ in 0..200 {
        let f = gamma3_cdf(x) - target;
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if f.abs() <= 1e-15 * target || hi - lo <= 1e-15 * x {
            break;
        }
        let slope = gamma3_density(x);
        let mut next = x - f / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        x = next;
    }
    x
}

/// Draw `atoms` energies from p(E) ∝ E² exp(−E/k_B T), truncated at `depth`
/// when `cutoff` is [`EnergyCutoff::Truncated`], by exact CDF inversion.
pub fn sample_ensemble(
    site: &str,
    temperature: f64,
    depth: f64,
    atoms: usize,
    stream: SamplingStream,
    cutoff: EnergyCutoff,
) -> Result<ThermalEnsemble> {
    ensure_positive("temperature", temperature)?;
    ensure_positive("trap depth", depth)?;
    if atoms == 0 {
        return Err(Error::Empty("atom count"));
    }
    let kt = thermal_energy(temperature);
    let (x_max, norm) = match cutoff {
        EnergyCutoff::Truncated => {
            let x = depth / kt;
            (x, gamma3_cdf(x))
        }
        EnergyCutoff::Unbounded => (f64::INFINITY, 1.0),
    };
    let hi = if x_max.is_finite() { x_max } else { 1e3 };
    let mut rng = stream.rng();
    let energies = (0..atoms)
        .map(|_| {
            let u: f64 = rng.random();
            let e = invert_gamma3(u * norm, hi) * kt;
            if cutoff == EnergyCutoff::Truncated {
                e.min(depth * (1.0 - f64::EPSILON))
            } else {
                e
            }
        })
        .collect();
    Ok(ThermalEnsemble {
        site: site.to_string(),
        temperature,
        depth,
        energies,
        stream,
        heavily_truncated: kt > 0.5 * depth,
    })
}

/// Truncated thermal sample on stream 0 of `seed`.
pub fn sample_thermal_energies(temperature: f64, depth: f64, atoms: usize, seed: u64) -> Result<ThermalEnsemble> {
    sample_ensemble("", temperature, depth, atoms, seed.into(), EnergyCutoff::Truncated)
}

/// Time-averaged detuning of an atom with motional energy `energy` in a trap
/// whose bottom is shifted by `peak`: peak·(1 − E/2U).
pub fn effective_detuning(energy: f64, depth: f64, peak: f64) -> Result<f64> {
    if !(0.0..=depth).contains(&energy) {
        return Err(Error::EnergyOutOfRange { energy, depth });
    }
    Ok(energy_detuning(energy, depth, peak))
}

#[inline]
pub(crate) fn energy_detuning(energy: f64, depth: f64, peak: f64) -> f64 {
    peak * (1.0 - energy / (2.0 * depth))
}

/// Envelope time constant τ = 2U/(k_B T |δ_peak|) of the untruncated
/// thermal Ramsey contrast (1 + (t/τ)²)^(−3/2).
pub fn thermal_dephasing_time(depth: f64, temperature: f64, peak: f64) -> f64 {
    2.0 * depth / (thermal_energy(temperature) * peak.abs())
}

pub fn thermal_contrast(t: f64, tau: f64) -> f64 {
    (1.0 + (t / tau).powi(2)).powf(-1.5)
}

/// 1/e time of (1 + (t/τ)²)^(−3/2) in units of τ.
pub fn thermal_one_over_e_factor() -> f64 {
    ((2.0f64 / 3.0).exp() - 1.0).sqrt()
}
