//! Array-wide differential-shift maps, spread statistics, compensation power
//! optimisation and misalignment fitting.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{rad_to_hz, wavelength_to_omega};
use crate::error::{Error, Result};
use crate::geometry::{site_peak_intensity, site_power, SiteIndex, TrapArrayScene};
use crate::optimize::{golden_section, nelder_mead};
use crate::stark;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftEntry {
    pub index: SiteIndex,
    pub label: String,
    /// Trap-bottom differential shift (Hz).
    pub shift_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapMetadata {
    pub scene_hash: String,
    /// Compensation power in front of the array (W).
    pub compensation_power: f64,
    /// Compensation beam displacement (m).
    pub displacement: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftMap {
    pub entries: Vec<ShiftEntry>,
    pub metadata: MapMetadata,
}

impl ShiftMap {
    pub fn get(&self, label: &str) -> Option<&ShiftEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn shifts(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.shift_hz).collect()
    }
}

/// Per-site trap shift and compensation shift per watt, both in Hz. The map
/// at power P_c is `trap + P_c·per_watt`.
#[derive(Debug, Clone)]
pub struct SiteResponse {
    pub trap: Vec<f64>,
    pub per_watt: Vec<f64>,
}

pub fn site_response(scene: &TrapArrayScene) -> Result<SiteResponse> {
    scene.validate()?;
    let species = &scene.species;
    let omega_l = wavelength_to_omega(scene.trap.wavelength);
    let omega_c = wavelength_to_omega(scene.compensation.wavelength);
    let unit = scene.compensation.effective_beam().with_power(1.0);
    let pairs: Vec<(f64, f64)> = scene
        .sites
        .par_iter()
        .map(|site| {
            let p = site_power(&scene.trap.beam, &scene.array, site.index)?;
            let trap = stark::differential_shift(species, omega_l, site_peak_intensity(p, &scene.array))?;
            let pc = site_power(&unit, &scene.array, site.index)?;
            let comp = stark::compensation_shift(species, omega_c, site_peak_intensity(pc, &scene.array))?;
            Ok((rad_to_hz(trap), rad_to_hz(comp)))
        })
        .collect::<Result<_>>()?;
    Ok(SiteResponse {
        trap: pairs.iter().map(|p| p.0).collect(),
        per_watt: pairs.iter().map(|p| p.1).collect(),
    })
}

impl SiteResponse {
    pub fn at(&self, power: f64) -> Vec<f64> {
        self.trap.iter().zip(&self.per_watt).map(|(t, c)| t + power * c).collect()
    }
}

fn build_map(scene: &TrapArrayScene, shifts: Vec<f64>, power: f64) -> ShiftMap {
    ShiftMap {
        entries: scene
            .sites
            .iter()
            .zip(shifts)
            .map(|(s, shift_hz)| ShiftEntry {
                index: s.index,
                label: s.label.clone(),
                shift_hz,
            })
            .collect(),
        metadata: MapMetadata {
            scene_hash: scene.hash(),
            compensation_power: power,
            displacement: scene.compensation.displacement,
        },
    }
}

/// Residual differential shift of every occupied site with compensation
/// power `power` (W). Zero power gives the uncompensated map.
pub fn array_shift_map(scene: &TrapArrayScene, power: f64) -> Result<ShiftMap> {
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::Config(format!("compensation power must be >= 0, got {power}")));
    }
    if scene.sites.is_empty() {
        return Err(Error::Empty("occupied sites"));
    }
    let shifts = if power > 0.0 {
        site_response(scene)?.at(power)
    } else {
        scene.validate()?;
        let omega_l = wavelength_to_omega(scene.trap.wavelength);
        scene
            .sites
            .par_iter()
            .map(|site| {
                let p = site_power(&scene.trap.beam, &scene.array, site.index)?;
                let d = stark::differential_shift(&scene.species, omega_l, site_peak_intensity(p, &scene.array))?;
                Ok(rad_to_hz(d))
            })
            .collect::<Result<_>>()?
    };
    Ok(build_map(scene, shifts, power))
}

/// Peak-to-peak, mean and population standard deviation (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub peak_to_peak: f64,
    pub mean: f64,
    pub std: f64,
}

pub fn spread_of(values: &[f64]) -> Result<Spread> {
    if values.is_empty() {
        return Err(Error::Empty("shift map"));
    }
    let n = values.len() as f64;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Spread {
        peak_to_peak: hi - lo,
        mean,
        std: var.sqrt(),
    })
}

pub fn spread_metric(map: &ShiftMap) -> Result<Spread> {
    spread_of(&map.shifts())
}

fn peak_to_peak(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    hi - lo
}

#[derive(Debug, Clone, Serialize)]
pub struct CompensationOptimum {
    /// Minimising compensation power (W).
    pub power: f64,
    /// P_c / P
    pub power_ratio: f64,
    pub spread: Spread,
    pub uncompensated: Spread,
    pub evaluations: usize,
}

pub const BRACKET_SAMPLES: usize = 41;
/// Relative bracket width at which the power search stops. The objective
/// is piecewise linear in P_c, so a tight width is cheap.
pub const POWER_TOLERANCE: f64 = 1e-10;

/// Upper end of the power search interval: ten times the cancelling ratio.
fn search_limit(scene: &TrapArrayScene) -> Result<f64> {
    if !(scene.trap.beam.power > 0.0) {
        return Err(Error::Config("trap beam has no power; there are no traps".into()));
    }
    let ratio = stark::required_intensity_ratio(
        &scene.species,
        wavelength_to_omega(scene.trap.wavelength),
        wavelength_to_omega(scene.compensation.wavelength),
    )?;
    Ok(10.0 * ratio.exact * scene.trap.beam.power)
}

fn minimise_power(response: &SiteResponse, hi: f64, rel_tol: f64) -> Result<(f64, usize)> {
    let m = golden_section(|p| peak_to_peak(&response.at(p)), 0.0, hi, rel_tol, BRACKET_SAMPLES)?;
    Ok((m.x, m.evaluations))
}

/// Compensation power minimising the peak-to-peak residual spread.
pub fn optimize_compensation_power(scene: &TrapArrayScene) -> Result<CompensationOptimum> {
    optimize_with_tolerance(scene, POWER_TOLERANCE)
}

pub fn optimize_with_tolerance(scene: &TrapArrayScene, rel_tol: f64) -> Result<CompensationOptimum> {
    if scene.sites.is_empty() {
        return Err(Error::Empty("occupied sites"));
    }
    let hi = search_limit(scene)?;
    let response = site_response(scene)?;
    let (power, evaluations) = minimise_power(&response, hi, rel_tol)?;
    Ok(CompensationOptimum {
        power,
        power_ratio: power / scene.trap.beam.power,
        spread: spread_of(&response.at(power))?,
        uncompensated: spread_of(&response.trap)?,
        evaluations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MisalignmentFit {
    /// Fitted compensation beam displacement (m).
    pub displacement: [f64; 2],
    /// Compensation power re-optimised at the fitted displacement (W).
    pub compensation_power: f64,
    /// RMS of measured − model over sites (Hz).
    pub rms_residual: f64,
    pub fitted_map: ShiftMap,
    /// Spread with the displacement removed at the fitted power.
    pub centered_prediction: Spread,
    pub evaluations: usize,
}

const LADDER_RADII: [f64; 3] = [4e-6, 8e-6, 12e-6];
const LADDER_ANGLES: usize = 8;

fn align(measured: &ShiftMap, scene: &TrapArrayScene) -> Result<Vec<f64>> {
    if measured.entries.len() != scene.sites.len() {
        return Err(Error::Config(format!(
            "measured map has {} sites, scene has {}",
            measured.entries.len(),
            scene.sites.len()
        )));
    }
    let by_label: HashMap<&str, f64> = measured
        .entries
        .iter()
        .map(|e| (e.label.as_str(), e.shift_hz))
        .collect();
    scene
        .sites
        .iter()
        .map(|s| {
            by_label
                .get(s.label.as_str())
                .copied()
                .ok_or_else(|| Error::Config(format!("measured map lacks site {}", s.label)))
        })
        .collect()
}

/// Find the compensation beam displacement that best reproduces a measured
/// compensated map. The compensation power is re-optimised for every trial
/// displacement.
pub fn fit_misalignment(measured: &ShiftMap, scene: &TrapArrayScene) -> Result<MisalignmentFit> {
    let target = align(measured, scene)?;
    if peak_to_peak(&target) <= 1e-12 {
        return Err(Error::Degenerate("measured map is flat".into()));
    }
    let hi = search_limit(scene)?;
    let trap = site_response(scene)?.trap;
    let omega_c = wavelength_to_omega(scene.compensation.wavelength);
    let unit = scene.compensation.beam.with_power(1.0);

    let per_watt = |d: [f64; 2]| -> Result<Vec<f64>> {
        let beam = unit.displaced(d);
        scene
            .sites
            .iter()
            .map(|s| {
                let pc = site_power(&beam, &scene.array, s.index)?;
                let c = stark::compensation_shift(&scene.species, omega_c, site_peak_intensity(pc, &scene.array))?;
                Ok(rad_to_hz(c))
            })
            .collect()
    };
    let model = |d: [f64; 2]| -> Result<(f64, Vec<f64>)> {
        let response = SiteResponse {
            trap: trap.clone(),
            per_watt: per_watt(d)?,
        };
        let (p, _) = minimise_power(&response, hi, POWER_TOLERANCE)?;
        Ok((p, response.at(p)))
    };
    let n = target.len() as f64;
    let objective = |d: [f64; 2]| -> f64 {
        match model(d) {
            Ok((_, m)) => (m.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n).sqrt(),
            Err(_) => f64::INFINITY,
        }
    };

    let mut starts: Vec<[f64; 2]> = vec![[0.0, 0.0]];
    for r in LADDER_RADII {
        for k in 0..LADDER_ANGLES {
            let a = 2.0 * std::f64::consts::PI * k as f64 / LADDER_ANGLES as f64;
            starts.push([r * a.cos(), r * a.sin()]);
        }
    }
    let mut scored: Vec<([f64; 2], f64)> = starts.par_iter().map(|&d| (d, objective(d))).collect();
    let mut evaluations = scored.len();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));

    let polished: Vec<([f64; 2], f64, usize)> = scored[..3]
        .par_iter()
        .map(|&(d0, _)| {
            let mut count = 0;
            let m = nelder_mead(
                |x| {
                    count += 1;
                    objective([x[0] * 1e-6, x[1] * 1e-6])
                },
                &[d0[0] * 1e6, d0[1] * 1e6],
                &[2.0, 2.0],
                1e-4,
                1e-10,
                400,
            );
            ([m.x[0] * 1e-6, m.x[1] * 1e-6], m.value, count)
        })
        .collect();
    evaluations += polished.iter().map(|p| p.2).sum::<usize>();
    let (best, rms, _) = polished
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("three starts");
    if !rms.is_finite() {
        return Err(Error::Degenerate("no displacement gives a valid model map".into()));
    }

    let (power, shifts) = model(best)?;
    let fitted_scene = scene.with_displacement(best);
    let centered = spread_metric(&array_shift_map(&scene.with_displacement([0.0, 0.0]), power)?)?;
    Ok(MisalignmentFit {
        displacement: best,
        compensation_power: power,
        rms_residual: rms,
        fitted_map: build_map(&fitted_scene, shifts, power),
        centered_prediction: centered,
        evaluations,
    })
}
