//! Site-level Ramsey and echo runs and the two calibrations used to pin
//! the default temperature and heating rate.

use rayon::prelude::*;
use serde::Serialize;

use crate::array::optimize_compensation_power;
use crate::atomic::second_order_zeeman_shift;
use crate::config::{CompensationMode, LoadedRun, WindowConfig};
use crate::constants::{hz_to_rad, rad_to_hz, BOLTZMANN};
use crate::error::{Error, Result};
use crate::fit::{fit_decaying_oscillation, EnvelopeFamily, FitReport};
use crate::geometry::{Site, TrapArrayScene};
use crate::optimize::golden_section;
use crate::spectroscopy::{
    average_traces, extract_site_shift, ramsey_trace_with_heating, spin_echo_trace, uniform_times, HeatingModel,
    PulseSequence, SequenceKind, SpectroscopyResult,
};
use crate::trap::{sample_ensemble, thermal_one_over_e_factor, trap_site, EnergyCutoff, SamplingStream, TrapSite};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleSettings {
    pub temperature: f64,
    pub atoms: usize,
    pub cutoff: EnergyCutoff,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// δ_RL (rad/s)
    pub coupling_detuning: f64,
    pub times: Vec<f64>,
}

impl From<&WindowConfig> for Window {
    fn from(w: &WindowConfig) -> Self {
        Self {
            coupling_detuning: hz_to_rad(w.coupling_detuning_hz),
            times: uniform_times(w.t_max_s, w.points),
        }
    }
}

/// Everything needed to simulate one sequence family on a scene.
#[derive(Debug, Clone)]
pub struct Experiment<'a> {
    pub scene: &'a TrapArrayScene,
    /// Compensation power (W).
    pub compensation_power: f64,
    pub ensemble: EnsembleSettings,
    /// δ_B (rad/s)
    pub zeeman_shift: f64,
    pub heating: HeatingModel,
    pub envelope: EnvelopeFamily,
}

#[derive(Debug, Clone, Serialize)]
pub struct SiteRun {
    pub trap: TrapSite,
    pub result: SpectroscopyResult,
    /// Fitted light shift (Hz), Ramsey only.
    pub measured_shift_hz: Option<f64>,
}

impl SiteRun {
    pub fn fit(&self) -> &FitReport {
        self.result.fit.as_ref().expect("site runs always carry a fit")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RamseyRun {
    pub sites: Vec<SiteRun>,
    /// Unweighted mean over every occupied site, when all were run.
    pub average: Option<SpectroscopyResult>,
}

/// Per-site sampling stream: the site's linear grid index.
pub fn site_stream(scene: &TrapArrayScene, site: &Site, seed: u64) -> SamplingStream {
    SamplingStream::new(seed, (site.index.row * scene.array.cols + site.index.col) as u64)
}

pub fn resolve_compensation(scene: &TrapArrayScene, mode: CompensationMode) -> Result<f64> {
    match mode {
        CompensationMode::Off => Ok(0.0),
        CompensationMode::Power(p) => Ok(p),
        CompensationMode::Optimized => Ok(optimize_compensation_power(scene)?.power),
    }
}

impl<'a> Experiment<'a> {
    /// Build from a run file with the given compensation power.
    pub fn from_run(run: &'a LoadedRun, compensation_power: f64, seed: u64) -> Self {
        let scene = &run.scene.scene;
        Self {
            scene,
            compensation_power,
            ensemble: EnsembleSettings {
                temperature: run.run.ensemble.temperature_k,
                atoms: run.run.ensemble.atoms,
                cutoff: run.run.ensemble.cutoff,
                seed,
            },
            zeeman_shift: second_order_zeeman_shift(&scene.species, run.run.magnetic_field_t),
            heating: HeatingModel::none(),
            envelope: run.run.ramsey.envelope,
        }
    }

    fn sequence(&self, kind: SequenceKind, trap: &TrapSite, window: &Window) -> PulseSequence {
        PulseSequence::new(kind, window.coupling_detuning, window.times.clone())
            .with_light_shift(trap.residual_shift)
            .with_zeeman_shift(self.zeeman_shift)
            .for_site(trap.label.clone())
    }

    fn run_site(&self, kind: SequenceKind, site: &Site, window: &Window) -> Result<SiteRun> {
        let trap = trap_site(self.scene, site, self.compensation_power)?;
        let ensemble = sample_ensemble(
            &trap.label,
            self.ensemble.temperature,
            trap.depth,
            self.ensemble.atoms,
            site_stream(self.scene, site, self.ensemble.seed),
            self.ensemble.cutoff,
        )?;
        let seq = self.sequence(kind, &trap, window);
        let trace = match kind {
            SequenceKind::Ramsey => ramsey_trace_with_heating(&ensemble, &seq, &self.heating)?,
            SequenceKind::SpinEcho => spin_echo_trace(&ensemble, &seq, &self.heating)?,
        };
        let fit = fit_decaying_oscillation(&trace.times, &trace.population, self.envelope)?;
        let measured_shift_hz = (kind == SequenceKind::Ramsey)
            .then(|| rad_to_hz(extract_site_shift(&fit, self.zeeman_shift, window.coupling_detuning)));
        Ok(SiteRun {
            trap,
            result: SpectroscopyResult {
                kind,
                site: site.label.clone(),
                trace,
                fit: Some(fit),
            },
            measured_shift_hz,
        })
    }

    pub fn ramsey_site(&self, label: &str, window: &Window) -> Result<SiteRun> {
        self.run_site(SequenceKind::Ramsey, self.scene.site(label)?, window)
    }

    pub fn echo_site(&self, label: &str, window: &Window) -> Result<SiteRun> {
        self.run_site(SequenceKind::SpinEcho, self.scene.site(label)?, window)
    }

    /// Ramsey runs on `labels`, or on every occupied site when `labels` is
    /// `None`; the latter also yields the array average.
    pub fn ramsey_sites(&self, labels: Option<&[String]>, window: &Window) -> Result<RamseyRun> {
        let sites: Vec<&Site> = match labels {
            Some(list) => {
                if list.is_empty() {
                    return Err(Error::Empty("site list"));
                }
                list.iter().map(|l| self.scene.site(l)).collect::<Result<_>>()?
            }
            None => self.scene.sites.iter().collect(),
        };
        if sites.is_empty() {
            return Err(Error::Empty("occupied sites"));
        }
        let runs: Vec<SiteRun> = sites
            .par_iter()
            .map(|s| self.run_site(SequenceKind::Ramsey, s, window))
            .collect::<Result<_>>()?;
        let average = if labels.is_none() {
            let traces: Vec<_> = runs.iter().map(|r| r.result.trace.clone()).collect();
            let trace = average_traces(&traces)?;
            let fit = fit_decaying_oscillation(&trace.times, &trace.population, self.envelope)?;
            Some(SpectroscopyResult {
                kind: SequenceKind::Ramsey,
                site: "all".into(),
                trace,
                fit: Some(fit),
            })
        } else {
            None
        };
        Ok(RamseyRun { sites: runs, average })
    }
}

/// Bisection on a decreasing function of ln x: finds x with f(x) = target.
fn bisect_log(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64, target: f64, rel: f64) -> Result<f64> {
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let fa = f(lo)?;
    let fb = f(hi)?;
    if !(fa >= target && fb <= target) {
        return Err(Error::Degenerate(format!(
            "calibration target {target} not bracketed: f({lo}) = {fa}, f({hi}) = {fb}"
        )));
    }
    while b - a > rel {
        let m = 0.5 * (a + b);
        if f(m.exp())? > target {
            a = m;
        } else {
            b = m;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TemperatureCalibration {
    /// K
    pub temperature: f64,
    /// Fitted Ramsey 1/e time at `temperature` (s).
    pub decay_time: f64,
    /// False when no temperature reaches the target and the closest
    /// achievable decay time was taken instead.
    pub reached: bool,
}

const TEMPERATURE_GRID: usize = 17;

/// Temperature for which the Ramsey 1/e time of `label` equals `target` (s).
///
/// With a truncated ensemble the fitted decay time is not monotonic in T:
/// once k_BT approaches U the cut at the trap depth bounds the detuning
/// spread. The lowest-temperature crossing is returned; if there is none,
/// the temperature of the shortest decay time.
pub fn calibrate_temperature(
    exp: &Experiment,
    label: &str,
    window: &Window,
    target: f64,
) -> Result<TemperatureCalibration> {
    let site = exp.scene.site(label)?;
    let trap = trap_site(exp.scene, site, exp.compensation_power)?;
    // untruncated closed form to centre the search
    let guess =
        thermal_one_over_e_factor() * 2.0 * trap.depth / (BOLTZMANN * trap.residual_shift.abs() * target);
    let eval = |t: f64| -> Result<f64> {
        let mut e = exp.clone();
        e.ensemble.temperature = t;
        Ok(e.ramsey_site(label, window)?.fit().decay_time)
    };
    let (lo, hi) = ((guess / 3.0).ln(), (guess * 3.0).ln());
    let grid: Vec<(f64, f64)> = (0..TEMPERATURE_GRID)
        .map(|i| {
            let t = (lo + (hi - lo) * i as f64 / (TEMPERATURE_GRID - 1) as f64).exp();
            eval(t).map(|d| (t, d))
        })
        .collect::<Result<_>>()?;
    if let Some(k) = grid.windows(2).position(|w| w[0].1 >= target && w[1].1 <= target) {
        let t = bisect_log(eval, grid[k].0, grid[k + 1].0, target, 1e-6)?;
        return Ok(TemperatureCalibration {
            temperature: t,
            decay_time: eval(t)?,
            reached: true,
        });
    }
    let k = (0..grid.len())
        .min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
        .expect("non-empty grid");
    if grid[k].1 > target && k > 0 && k + 1 < grid.len() {
        let mut best = grid[k];
        let m = golden_section(
            |x| {
                let d = eval(x.exp()).unwrap_or(f64::INFINITY);
                if d < best.1 {
                    best = (x.exp(), d);
                }
                d
            },
            grid[k - 1].0.ln(),
            grid[k + 1].0.ln(),
            1e-4,
            5,
        );
        let (temperature, decay_time) = match m {
            Ok(_) => best,
            Err(_) => grid[k],
        };
        return Ok(TemperatureCalibration {
            temperature,
            decay_time,
            reached: false,
        });
    }
    Err(Error::Degenerate(format!(
        "no temperature between {:.3e} K and {:.3e} K approaches a decay time of {target} s",
        lo.exp(),
        hi.exp()
    )))
}

/// Jump rate (1/s), at fixed jump size, for which the echo 1/e time of
/// `label` equals `target` (s).
pub fn calibrate_heating(
    exp: &Experiment,
    label: &str,
    window: &Window,
    jump_energy: f64,
    target: f64,
) -> Result<HeatingModel> {
    let eval = |rate: f64| -> Result<f64> {
        let mut e = exp.clone();
        e.heating = HeatingModel {
            drift_rate: 0.0,
            jump_rate: rate,
            jump_energy,
        };
        Ok(e.echo_site(label, window)?.fit().decay_time)
    };
    let rate = bisect_log(eval, 0.5, 100.0, target, 1e-6)?;
    Ok(HeatingModel {
        drift_rate: 0.0,
        jump_rate: rate,
        jump_energy,
    })
}
