//! Ramsey and spin-echo sequences on thermal ensembles with ideal,
//! instantaneous pulses.
//!
//! Each atom carries a motional energy E(t) that is static unless a
//! [`HeatingModel`] is supplied. Its clock detuning is the trap-bottom light
//! shift scaled by (1 − E/2U), plus thermal-independent offsets. After the
//! final π/2 pulse the lower-state population is ½(1 − cos φ).
//!
//! Ramsey: φ = (δ_RL + δ_B + δ_static)·t + ∫₀ᵗ δ(E(t′)) dt′.
//!
//! Spin echo: the π pulse at t/2 cancels every static detuning, so the echo
//! is read out with the final analysis pulse phase advanced by δ_RL·t, giving
//! φ = δ_RL·t + ∫₀^{t/2} δ dt′ − ∫_{t/2}^{t} δ dt′.

use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitReport;
use crate::trap::{energy_detuning, SamplingStream, ThermalEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Ramsey,
    SpinEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSequence {
    pub kind: SequenceKind,
    /// δ_RL (rad/s).
    pub coupling_detuning: f64,
    /// Total free-evolution times (s).
    pub times: Vec<f64>,
    /// Second-order Zeeman offset δ_B (rad/s).
    pub zeeman_shift: f64,
    /// Trap-bottom light shift of the site (rad/s); scaled by (1 − E/2U).
    pub light_shift_peak: f64,
    /// Additional energy-independent detuning (rad/s).
    pub static_offset: f64,
    /// Site the sequence is meant for, if any.
    pub site: Option<String>,
}

impl PulseSequence {
    pub fn new(kind: SequenceKind, coupling_detuning: f64, times: Vec<f64>) -> Self {
        Self {
            kind,
            coupling_detuning,
            times,
            zeeman_shift: 0.0,
            light_shift_peak: 0.0,
            static_offset: 0.0,
            site: None,
        }
    }

    pub fn with_light_shift(mut self, peak: f64) -> Self {
        self.light_shift_peak = peak;
        self
    }

    pub fn with_zeeman_shift(mut self, shift: f64) -> Self {
        self.zeeman_shift = shift;
        self
    }

    pub fn for_site(mut self, site: impl Into<String>) -> Self {
        self.site = Some(site.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() {
            return Err(Error::Empty("time grid"));
        }
        if !self.times.iter().all(|t| t.is_finite()) || self.times[0] < 0.0 {
            return Err(Error::Config("time grid must be finite and start at t >= 0".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("time grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Uniform grid of `points` times from 0 to `t_max` inclusive.
pub fn uniform_times(t_max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![0.0; points.min(1)];
    }
    (0..points)
        .map(|i| t_max * i as f64 / (points - 1) as f64)
        .collect()
}

/// Energy growth of trapped atoms. Jumps arrive as a Poisson process and
/// have exponentially distributed sizes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HeatingModel {
    /// Deterministic energy growth (J/s).
    pub drift_rate: f64,
    /// Mean jump rate per atom (1/s).
    pub jump_rate: f64,
    /// Mean jump size (J).
    pub jump_energy: f64,
}

impl HeatingModel {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("drift_rate", self.drift_rate),
            ("jump_rate", self.jump_rate),
            ("jump_energy", self.jump_energy),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("heating {name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.drift_rate == 0.0 && (self.jump_rate == 0.0 || self.jump_energy == 0.0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            drift_rate: self.drift_rate * factor,
            jump_rate: self.jump_rate * factor,
            jump_energy: self.jump_energy,
        }
    }
}

/// One atom's energy history.
#[derive(Debug, Clone)]
struct History {
    initial: f64,
    drift: f64,
    /// (time, size), sorted by time
    jumps: Vec<(f64, f64)>,
}

impl History {
    fn energy_at(&self, t: f64) -> f64 {
        let kicks: f64 = self.jumps.iter().take_while(|j| j.0 <= t).map(|j| j.1).sum();
        self.initial + self.drift * t + kicks
    }

    /// ∫_a^b E(t) dt
    fn energy_integral(&self, a: f64, b: f64) -> f64 {
        let mut s = self.initial * (b - a) + 0.5 * self.drift * (b * b - a * a);
        for &(tj, size) in &self.jumps {
            if tj >= b {
                break;
            }
            s += size * (b - tj.max(a));
        }
        s
    }
}

fn histories(ensemble: &ThermalEnsemble, heating: &HeatingModel, t_max: f64) -> Vec<History> {
    let jumps_on = heating.jump_rate > 0.0 && heating.jump_energy > 0.0;
    let base = ensemble.stream.derived(HEATING_STREAM_TAG).rng();
    let arrival = jumps_on.then(|| Exp::new(heating.jump_rate).expect("positive rate"));
    let size = jumps_on.then(|| Exp::new(1.0 / heating.jump_energy).expect("positive energy"));
    ensemble
        .energies
        .iter()
        .enumerate()
        .map(|(i, &e0)| {
            let mut jumps = Vec::new();
            if let (Some(arrival), Some(size)) = (&arrival, &size) {
                // each atom owns a fixed block of the stream, so its history
                // varies smoothly with the rates
                let mut rng = base.clone();
                rng.set_word_pos((i as u128) << ATOM_BLOCK_BITS);
                let mut t = arrival.sample(&mut rng);
                while t <= t_max {
                    jumps.push((t, size.sample(&mut rng)));
                    t += arrival.sample(&mut rng);
                }
            }
            History {
                initial: e0,
                drift: heating.drift_rate,
                jumps,
            }
        })
        .collect()
}

const HEATING_STREAM_TAG: u64 = 0x4845;
const ATOM_BLOCK_BITS: u32 = 24;
const NOISE_STREAM_TAG: u64 = 0x4e53;

/// Population trace with the standard error of the atom average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub times: Vec<f64>,
    pub population: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectroscopyResult {
    pub kind: SequenceKind,
    pub site: String,
    pub trace: Trace,
    pub fit: Option<FitReport>,
}

fn check_site(ensemble: &ThermalEnsemble, seq: &PulseSequence) -> Result<()> {
    match &seq.site {
        Some(s) if *s != ensemble.site => Err(Error::SiteMismatch {
            ensemble: ensemble.site.clone(),
            sequence: s.clone(),
        }),
        _ => Ok(()),
    }
}

/// Per-atom accumulated phase at total free-evolution time `t`; `None` if
/// the atom has left the trap.
fn phase(h: &History, seq: &PulseSequence, depth: f64, t: f64) -> Option<f64> {
    if h.energy_at(t) >= depth {
        return None;
    }
    let peak = seq.light_shift_peak;
    let k = peak / (2.0 * depth);
    let phi = match seq.kind {
        SequenceKind::Ramsey => {
            (seq.coupling_detuning + seq.zeeman_shift + seq.static_offset + peak) * t
                - k * h.energy_integral(0.0, t)
        }
        SequenceKind::SpinEcho => {
            let half = 0.5 * t;
            let first = -k * h.energy_integral(0.0, half);
            let second = -k * h.energy_integral(half, t);
            seq.coupling_detuning * t + first - second
        }
    };
    Some(phi)
}

fn static_phase(e: f64, seq: &PulseSequence, depth: f64, t: f64) -> f64 {
    match seq.kind {
        SequenceKind::Ramsey => {
            (seq.coupling_detuning
                + seq.zeeman_shift
                + seq.static_offset
                + energy_detuning(e, depth, seq.light_shift_peak))
                * t
        }
        SequenceKind::SpinEcho => seq.coupling_detuning * t,
    }
}

fn simulate(ensemble: &ThermalEnsemble, seq: &PulseSequence, heating: &HeatingModel) -> Result<Trace> {
    seq.validate()?;
    heating.validate()?;
    check_site(ensemble, seq)?;
    if ensemble.is_empty() {
        return Err(Error::Empty("ensemble"));
    }
    let depth = ensemble.depth;
    let t_max = *seq.times.last().expect("validated non-empty");

    let point = |acc: (f64, f64, usize)| -> (f64, f64) {
        let (sum, sum_sq, n) = acc;
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = sum / n as f64;
        let var = if n > 1 {
            ((sum_sq - sum * mean) / (n - 1) as f64).max(0.0)
        } else {
            0.0
        };
        (mean.clamp(0.0, 1.0), (var / n as f64).sqrt())
    };

    let values: Vec<(f64, f64)> = if heating.is_static() {
        seq.times
            .par_iter()
            .map(|&t| {
                let mut acc = (0.0, 0.0, 0usize);
                for &e in &ensemble.energies {
                    let p = 0.5 * (1.0 - static_phase(e, seq, depth, t).cos());
                    acc = (acc.0 + p, acc.1 + p * p, acc.2 + 1);
                }
                point(acc)
            })
            .collect()
    } else {
        let hist = histories(ensemble, heating, t_max);
        seq.times
            .par_iter()
            .map(|&t| {
                let mut acc = (0.0, 0.0, 0usize);
                for h in &hist {
                    if let Some(phi) = phase(h, seq, depth, t) {
                        let p = 0.5 * (1.0 - phi.cos());
                        acc = (acc.0 + p, acc.1 + p * p, acc.2 + 1);
                    }
                }
                point(acc)
            })
            .collect()
    };
    if values.iter().any(|v| v.0.is_nan()) {
        return Err(Error::Degenerate("every atom left the trap".into()));
    }
    Ok(Trace {
        times: seq.times.clone(),
        population: values.iter().map(|v| v.0).collect(),
        stderr: values.iter().map(|v| v.1).collect(),
    })
}

/// Ramsey trace with static atomic energies.
pub fn ramsey_trace(ensemble: &ThermalEnsemble, seq: &PulseSequence) -> Result<Trace> {
    ramsey_trace_with_heating(ensemble, seq, &HeatingModel::none())
}

pub fn ramsey_trace_with_heating(
    ensemble: &ThermalEnsemble,
    seq: &PulseSequence,
    heating: &HeatingModel,
) -> Result<Trace> {
    if seq.kind != SequenceKind::Ramsey {
        return Err(Error::Config("ramsey_trace needs a Ramsey sequence".into()));
    }
    simulate(ensemble, seq, heating)
}

pub fn spin_echo_trace(ensemble: &ThermalEnsemble, seq: &PulseSequence, heating: &HeatingModel) -> Result<Trace> {
    if seq.kind != SequenceKind::SpinEcho {
        return Err(Error::Config("spin_echo_trace needs a spin-echo sequence".into()));
    }
    simulate(ensemble, seq, heating)
}

/// |⟨e^{iφ}⟩| of a static-energy Ramsey sequence at each time, excluding
/// the δ_RL + δ_B carrier.
pub fn ramsey_contrast(ensemble: &ThermalEnsemble, seq: &PulseSequence) -> Vec<f64> {
    let depth = ensemble.depth;
    seq.times
        .par_iter()
        .map(|&t| {
            let (mut re, mut im) = (0.0, 0.0);
            for &e in &ensemble.energies {
                let phi = (energy_detuning(e, depth, seq.light_shift_peak) + seq.static_offset) * t;
                re += phi.cos();
                im += phi.sin();
            }
            let n = ensemble.len() as f64;
            (re / n).hypot(im / n)
        })
        .collect()
}

/// Light-shift estimate from a fitted Ramsey frequency: ω_fit − δ_RL − δ_B
/// (rad/s). The fit reports |ω|, so the carrier δ_RL + δ_B must dominate the
/// shift for the sign to be recovered.
pub fn extract_site_shift(fit: &FitReport, zeeman_shift: f64, coupling_detuning: f64) -> f64 {
    fit.frequency - coupling_detuning - zeeman_shift
}

/// Unweighted mean of traces sampled on the same grid.
pub fn average_traces(traces: &[Trace]) -> Result<Trace> {
    let first = traces.first().ok_or(Error::Empty("trace list"))?;
    if traces.iter().any(|t| t.times != first.times) {
        return Err(Error::Config("traces use different time grids".into()));
    }
    let n = traces.len() as f64;
    let len = first.len();
    let population = (0..len)
        .map(|i| (traces.iter().map(|t| t.population[i]).sum::<f64>() / n).clamp(0.0, 1.0))
        .collect();
    let stderr = (0..len)
        .map(|i| traces.iter().map(|t| t.stderr[i].powi(2)).sum::<f64>().sqrt() / n)
        .collect();
    Ok(Trace {
        times: first.times.clone(),
        population,
        stderr,
    })
}

/// Additive Gaussian detection noise, clipped back into [0, 1].
pub fn with_detection_noise(trace: &Trace, sigma: f64, stream: SamplingStream) -> Trace {
    let mut rng = stream.derived(NOISE_STREAM_TAG).rng();
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let population = trace
        .population
        .iter()
        .map(|&p| (p + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    Trace {
        times: trace.times.clone(),
        population,
        stderr: trace.stderr.iter().map(|s| s.hypot(sigma)).collect(),
    }
}
