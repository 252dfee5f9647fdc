use std::f64::consts::PI;

use lightsync::constants::{hz_to_rad, rad_to_hz, BOLTZMANN};
use lightsync::error::Error;
use lightsync::fit::{fit_decaying_oscillation, EnvelopeFamily};
use lightsync::spectroscopy::{
    extract_site_shift, ramsey_trace, ramsey_trace_with_heating, spin_echo_trace, uniform_times,
    with_detection_noise, HeatingModel, PulseSequence, SequenceKind, Trace,
};
use lightsync::trap::{sample_ensemble, thermal_dephasing_time, EnergyCutoff, SamplingStream, ThermalEnsemble};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const DEPTH_UK: f64 = 47.2;

fn depth() -> f64 {
    BOLTZMANN * DEPTH_UK * 1e-6
}

fn ensemble(kt_over_u: f64, atoms: usize, cutoff: EnergyCutoff) -> ThermalEnsemble {
    sample_ensemble(
        "e5",
        kt_over_u * depth() / BOLTZMANN,
        depth(),
        atoms,
        SamplingStream::new(99, 4),
        cutoff,
    )
    .unwrap()
}

fn ramsey(ens: &ThermalEnsemble, peak_hz: f64, carrier_hz: f64, t_max: f64) -> Trace {
    let seq = PulseSequence::new(SequenceKind::Ramsey, hz_to_rad(carrier_hz), uniform_times(t_max, 1000))
        .with_light_shift(hz_to_rad(peak_hz));
    ramsey_trace(ens, &seq).unwrap()
}

fn t2(trace: &Trace, family: EnvelopeFamily) -> f64 {
    fit_decaying_oscillation(&trace.times, &trace.population, family)
        .unwrap()
        .decay_time
}

fn synthetic(tau: f64, f_hz: f64, noise: f64) -> (Vec<f64>, Vec<f64>) {
    let t = uniform_times(4.0 * tau, 600);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = Normal::new(0.0, noise.max(1e-300)).unwrap();
    let y = t
        .iter()
        .map(|&t| {
            let c = (1.0 + (t / tau).powi(2)).powf(-1.5);
            let v = 0.5 - 0.45 * c * (2.0 * PI * f_hz * t).cos();
            if noise > 0.0 {
                v + n.sample(&mut rng)
            } else {
                v
            }
        })
        .collect();
    (t, y)
}

#[test]
fn thermal_envelope_noiseless_recovery() {
    let (t, y) = synthetic(10e-3, 300.0, 0.0);
    let f = fit_decaying_oscillation(&t, &y, EnvelopeFamily::Thermal).unwrap();
    assert!((f.tau / 10e-3 - 1.0).abs() < 1e-3, "{}", f.tau);
}

#[test]
fn thermal_envelope_with_one_percent_noise() {
    let (t, y) = synthetic(10e-3, 300.0, 0.01);
    let f = fit_decaying_oscillation(&t, &y, EnvelopeFamily::Thermal).unwrap();
    assert!((f.tau / 10e-3 - 1.0).abs() < 0.05, "{}", f.tau);
    assert!(f.tau_err > 0.0 && f.residual_rms > 0.005 && f.residual_rms < 0.02);
}

#[test]
fn hundred_hertz_tone() {
    let t = uniform_times(0.1, 400);
    let y: Vec<f64> = t.iter().map(|&t| 0.5 - 0.5 * (2.0 * PI * 100.0 * t).cos()).collect();
    let f = fit_decaying_oscillation(&t, &y, EnvelopeFamily::Exponential).unwrap();
    assert!((f.frequency_hz - 100.0).abs() < 0.1);
    assert!(f.decay_time > 0.1);
}

#[test]
fn fit_rejects_flat_and_too_short_traces() {
    let t = uniform_times(1.0, 100);
    let y = vec![0.5; 100];
    assert!(matches!(
        fit_decaying_oscillation(&t, &y, EnvelopeFamily::Thermal),
        Err(Error::Degenerate(_))
    ));
    // 20 points and barely two periods
    let t = uniform_times(2.0, 20);
    let y: Vec<f64> = t.iter().map(|&t| (2.0 * PI * t).cos()).collect();
    assert!(fit_decaying_oscillation(&t, &y, EnvelopeFamily::Exponential).is_err());
}

#[test]
fn extracted_shift_and_sign() {
    let ens = ensemble(1e-6, 2000, EnergyCutoff::Truncated);
    let carrier = 500.0;
    let zeeman = 264.0;
    let injected = -300.0;
    let seq = PulseSequence::new(SequenceKind::Ramsey, hz_to_rad(carrier), uniform_times(0.05, 1000))
        .with_zeeman_shift(hz_to_rad(zeeman))
        .with_light_shift(hz_to_rad(injected))
        .for_site("e5");
    let tr = ramsey_trace(&ens, &seq).unwrap();
    let fit = fit_decaying_oscillation(&tr.times, &tr.population, EnvelopeFamily::Exponential).unwrap();
    let shift = extract_site_shift(&fit, hz_to_rad(zeeman), hz_to_rad(carrier));
    assert!((rad_to_hz(shift) - injected).abs() < 2.0, "{}", rad_to_hz(shift));
    assert!(shift < 0.0);

    let seq = PulseSequence::new(SequenceKind::Ramsey, hz_to_rad(carrier), uniform_times(0.05, 1000))
        .with_zeeman_shift(hz_to_rad(zeeman));
    let tr = ramsey_trace(&ens, &seq).unwrap();
    let fit = fit_decaying_oscillation(&tr.times, &tr.population, EnvelopeFamily::Exponential);
    // an undamped tone fits with an unbounded decay time or fails cleanly
    if let Ok(fit) = fit {
        let s = extract_site_shift(&fit, hz_to_rad(zeeman), hz_to_rad(carrier));
        assert!(rad_to_hz(s).abs() < 1e-6);
    }
}

#[test]
fn doubling_the_light_shift_halves_t2_star() {
    let ens = ensemble(0.15, 20_000, EnergyCutoff::Truncated);
    let a = t2(&ramsey(&ens, -300.0, 800.0, 0.03), EnvelopeFamily::Thermal);
    let b = t2(&ramsey(&ens, -600.0, 1100.0, 0.015), EnvelopeFamily::Thermal);
    assert!((a / b / 2.0 - 1.0).abs() < 0.03, "{a} {b}");
}

#[test]
fn residual_scaling_scales_envelope() {
    let ens = ensemble(0.15, 20_000, EnergyCutoff::Truncated);
    let a = t2(&ramsey(&ens, -200.0, 600.0, 0.04), EnvelopeFamily::Thermal);
    for s in [0.25, 0.5, 2.0, 4.0] {
        // keep the fringe frequency near 400 Hz so every trace is well sampled
        let b = t2(&ramsey(&ens, -200.0 * s, 400.0 + 200.0 * s, 0.04 / s), EnvelopeFamily::Thermal);
        assert!((a / b / s - 1.0).abs() < 0.05, "s = {s}: {a} {b}");
    }
}

#[test]
fn truncation_barely_matters_for_cold_ensembles() {
    let cold = 1.0 / 8.0;
    let a = t2(
        &ramsey(&ensemble(cold, 20_000, EnergyCutoff::Truncated), -300.0, 800.0, 0.03),
        EnvelopeFamily::Thermal,
    );
    let b = t2(
        &ramsey(&ensemble(cold, 20_000, EnergyCutoff::Unbounded), -300.0, 800.0, 0.03),
        EnvelopeFamily::Thermal,
    );
    assert!((a / b - 1.0).abs() < 0.05, "{a} {b}");
}

#[test]
fn ramsey_frequency_is_the_mean_detuning() {
    // the window stays short of the dephasing time so the phase is still
    // linear in the first moment of the detuning distribution
    let kt = 0.05;
    let peak = -50.0;
    let ens = ensemble(kt, 20_000, EnergyCutoff::Truncated);
    let tau = thermal_dephasing_time(depth(), kt * depth() / BOLTZMANN, hz_to_rad(peak));
    let tr = ramsey(&ens, peak, 800.0, 0.15 * tau);
    let noisy = with_detection_noise(&tr, 0.01, SamplingStream::new(5, 0));
    let fit = fit_decaying_oscillation(&noisy.times, &noisy.population, EnvelopeFamily::Thermal).unwrap();
    let mean_detuning = 800.0 + peak * (1.0 - ens.mean_energy() / (2.0 * depth()));
    let sigma = rad_to_hz(fit.frequency_err);
    assert!(
        (fit.frequency_hz - mean_detuning).abs() < 3.0 * sigma,
        "{} vs {mean_detuning} ± {sigma}",
        fit.frequency_hz
    );
}

fn echo(ens: &ThermalEnsemble, peak_hz: f64, heating: &HeatingModel) -> Trace {
    let seq = PulseSequence::new(SequenceKind::SpinEcho, hz_to_rad(50.0), uniform_times(0.25, 500))
        .with_light_shift(hz_to_rad(peak_hz))
        .with_zeeman_shift(hz_to_rad(264.0));
    spin_echo_trace(ens, &seq, heating).unwrap()
}

#[test]
fn heating_sweep_is_strictly_monotone() {
    let ens = ensemble(0.27, 3000, EnergyCutoff::Truncated);
    let mut rate = 0.5;
    let mut last = f64::INFINITY;
    for _ in 0..10 {
        let h = HeatingModel {
            drift_rate: 0.0,
            jump_rate: rate,
            jump_energy: 0.05 * depth(),
        };
        let t2p = t2(&echo(&ens, -318.0, &h), EnvelopeFamily::StretchedExponential);
        assert!(t2p < last, "rate {rate}: {t2p} !< {last}");
        last = t2p;
        rate *= 1.5;
    }
}

#[test]
fn echo_outlasts_ramsey_on_static_ensembles() {
    for (kt, peak) in [(0.1, -300.0), (0.25, -150.0), (0.2, -40.0)] {
        let ens = ensemble(kt, 3000, EnergyCutoff::Truncated);
        let span = 8.0 * thermal_dephasing_time(depth(), kt * depth() / BOLTZMANN, hz_to_rad(peak));
        let r = ramsey(&ens, peak, 400.0, span);
        let t2s = t2(&r, EnvelopeFamily::Thermal);
        let e = echo(&ens, peak, &HeatingModel::none());
        // a refocused echo does not decay at all
        let amp = e
            .population
            .iter()
            .fold(0.0f64, |m, &p| m.max((2.0 * p - 1.0).abs()));
        assert!(amp > 1.0 - 1e-9);
        let f = fit_decaying_oscillation(&e.times, &e.population, EnvelopeFamily::StretchedExponential).unwrap();
        assert!(f.decay_time >= t2s, "{} < {t2s}", f.decay_time);
    }
}

#[test]
fn drift_alone_only_chirps_the_echo() {
    let ens = ensemble(0.2, 2000, EnergyCutoff::Truncated);
    let h = HeatingModel {
        drift_rate: 0.2 * depth(),
        jump_rate: 0.0,
        jump_energy: 0.0,
    };
    let tr = echo(&ens, -300.0, &h);
    let amp = tr
        .population
        .iter()
        .skip(tr.len() / 2)
        .fold(0.0f64, |m, &p| m.max((2.0 * p - 1.0).abs()));
    assert!(amp > 0.99, "{amp}");
}

#[test]
fn noise_keeps_traces_bounded() {
    let ens = ensemble(0.2, 500, EnergyCutoff::Truncated);
    let tr = ramsey(&ens, -300.0, 500.0, 0.02);
    let noisy = with_detection_noise(&tr, 0.2, SamplingStream::new(1, 2));
    assert!(noisy.population.iter().all(|p| (0.0..=1.0).contains(p)));
    assert_ne!(noisy.population, tr.population);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn populations_stay_in_unit_interval(
        carrier in -1000.0f64..1000.0,
        peak in -500.0f64..0.0,
        kt in 0.05f64..0.6,
        rate in 0.0f64..50.0,
    ) {
        let ens = ensemble(kt, 200, EnergyCutoff::Truncated);
        let seq = PulseSequence::new(SequenceKind::Ramsey, hz_to_rad(carrier), uniform_times(0.05, 60))
            .with_light_shift(hz_to_rad(peak));
        let h = HeatingModel { drift_rate: 0.0, jump_rate: rate, jump_energy: 0.05 * depth() };
        let r = ramsey_trace_with_heating(&ens, &seq, &h).unwrap();
        prop_assert!(r.population.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert_eq!(r.population[0], 0.0);
        let mut e = seq.clone();
        e.kind = SequenceKind::SpinEcho;
        let r = spin_echo_trace(&ens, &e, &h).unwrap();
        prop_assert!(r.population.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
