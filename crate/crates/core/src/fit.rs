//! Least-squares fit of y(t) = B + A·C(t)·cos(ωt + φ) to a population trace.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trap::thermal_one_over_e_factor;

/// Shape of the contrast envelope C(t).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeFamily {
    /// exp(−t/τ)
    Exponential,
    /// (1 + (t/τ)²)^(−3/2)
    Thermal,
    /// exp(−(t/τ)^β)
    StretchedExponential,
}

impl EnvelopeFamily {
    fn value(self, t: f64, tau: f64, beta: f64) -> f64 {
        let x = t / tau;
        match self {
            Self::Exponential => (-x).exp(),
            Self::Thermal => (1.0 + x * x).powf(-1.5),
            Self::StretchedExponential => (-x.powf(beta)).exp(),
        }
    }

    /// t at which C(t) = 1/e, in units of τ.
    fn one_over_e(self) -> f64 {
        match self {
            Self::Thermal => thermal_one_over_e_factor(),
            _ => 1.0,
        }
    }

    fn parameters(self) -> usize {
        match self {
            Self::StretchedExponential => 6,
            _ => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub family: EnvelopeFamily,
    pub offset: f64,
    pub amplitude: f64,
    /// ω (rad/s)
    pub frequency: f64,
    pub frequency_hz: f64,
    pub phase: f64,
    pub tau: f64,
    pub beta: Option<f64>,
    /// 1/e time of the envelope (s).
    pub decay_time: f64,
    pub offset_err: f64,
    pub amplitude_err: f64,
    pub frequency_err: f64,
    pub phase_err: f64,
    pub tau_err: f64,
    pub beta_err: Option<f64>,
    pub decay_time_err: f64,
    /// Covariance of (B, A, ω, φ, τ[, β]).
    pub covariance: Vec<Vec<f64>>,
    pub residual_rms: f64,
    pub iterations: usize,
    pub points: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 400,
            tolerance: 1e-12,
        }
    }
}

const MIN_POINTS: usize = 30;
const MIN_PERIODS: f64 = 8.0;

// Internal parameter vector: [B, A, ω, φ, ln τ, ln β]
fn model(family: EnvelopeFamily, p: &[f64], t: f64) -> f64 {
    let beta = if p.len() > 5 { p[5].exp() } else { 1.0 };
    p[0] + p[1] * family.value(t, p[4].exp(), beta) * (p[2] * t + p[3]).cos()
}

fn residuals(family: EnvelopeFamily, p: &[f64], t: &[f64], y: &[f64]) -> DVector<f64> {
    DVector::from_iterator(t.len(), t.iter().zip(y).map(|(&t, &y)| model(family, p, t) - y))
}

fn jacobian(family: EnvelopeFamily, p: &[f64], t: &[f64]) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(t.len(), p.len());
    let mut q = p.to_vec();
    for j in 0..p.len() {
        let h = 1e-7 * p[j].abs().max(1e-3);
        q[j] = p[j] + h;
        let plus: Vec<f64> = t.iter().map(|&t| model(family, &q, t)).collect();
        q[j] = p[j] - h;
        for (i, &ti) in t.iter().enumerate() {
            jac[(i, j)] = (plus[i] - model(family, &q, ti)) / (2.0 * h);
        }
        q[j] = p[j];
    }
    jac
}

fn is_uniform(times: &[f64]) -> bool {
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    times.windows(2).all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt)
}

/// Dominant angular frequency of `y − mean(y)`.
fn dominant_frequency(times: &[f64], y: &[f64]) -> Result<f64> {
    let n = times.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let span = times[n - 1] - times[0];
    if is_uniform(times) {
        let dt = span / (n - 1) as f64;
        let pad = (n.next_power_of_two() * 8).max(64);
        let mut buf: Vec<Complex<f64>> = y.iter().map(|&v| Complex::new(v - mean, 0.0)).collect();
        buf.resize(pad, Complex::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(pad).process(&mut buf);
        let mag: Vec<f64> = buf[..pad / 2].iter().map(|c| c.norm()).collect();
        let k = (1..mag.len() - 1)
            .max_by(|&a, &b| mag[a].total_cmp(&mag[b]))
            .ok_or_else(|| Error::Degenerate("trace too short".into()))?;
        let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
        let denom = a - 2.0 * b + c;
        let shift = if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
        Ok(2.0 * PI * (k as f64 + shift) / (pad as f64 * dt))
    } else {
        let dt_min = times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let omega_max = PI / dt_min;
        let m = 8 * n;
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in 1..m {
            let w = omega_max * k as f64 / m as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (&t, &v) in times.iter().zip(y) {
                re += (v - mean) * (w * t).cos();
                im += (v - mean) * (w * t).sin();
            }
            let p = re * re + im * im;
            if p > best.1 {
                best = (w, p);
            }
        }
        Ok(best.0)
    }
}

/// Linear least squares for y − B ≈ C(t)·(a cos ωt + b sin ωt).
fn quadrature(times: &[f64], y: &[f64], offset: f64, omega: f64, env: impl Fn(f64) -> f64) -> (f64, f64) {
    let (mut cc, mut ss, mut cs, mut yc, mut ys) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &v) in times.iter().zip(y) {
        let e = env(t);
        let (c, s) = (e * (omega * t).cos(), e * (omega * t).sin());
        cc += c * c;
        ss += s * s;
        cs += c * s;
        yc += (v - offset) * c;
        ys += (v - offset) * s;
    }
    let det = cc * ss - cs * cs;
    if det.abs() < 1e-300 {
        return (0.0, 0.0);
    }
    ((yc * ss - ys * cs) / det, (ys * cc - yc * cs) / det)
}

/// 1/e time from local oscillation amplitudes, one window per period.
fn envelope_estimate(times: &[f64], y: &[f64], offset: f64, omega: f64) -> f64 {
    let span = times[times.len() - 1] - times[0];
    let period = 2.0 * PI / omega;
    let mut points = Vec::new();
    let mut start = 0;
    while start < times.len() {
        let t0 = times[start];
        let mut end = start;
        while end < times.len() && (times[end] - t0 < period || end - start < 4) {
            end += 1;
        }
        if end - start < 4 {
            break;
        }
        let (a, b) = quadrature(&times[start..end], &y[start..end], offset, omega, |_| 1.0);
        let tm = 0.5 * (t0 + times[end - 1]);
        points.push((tm, a.hypot(b)));
        start = end;
    }
    let first = points.first().map(|p| p.1).unwrap_or(0.0);
    let usable: Vec<(f64, f64)> = points
        .into_iter()
        .take_while(|p| p.1 > 0.15 * first)
        .collect();
    if usable.len() < 2 {
        return span / 2.0;
    }
    // weighted linear fit of ln amplitude against time
    let (mut sw, mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, a) in &usable {
        let w = a * a;
        let l = a.ln();
        sw += w;
        st += w * t;
        sl += w * l;
        stt += w * t * t;
        stl += w * t * l;
    }
    let slope = (sw * stl - st * sl) / (sw * stt - st * st);
    if !(slope < 0.0) || !slope.is_finite() {
        return 10.0 * span;
    }
    (-1.0 / slope).min(10.0 * span)
}

fn ssr(r: &DVector<f64>) -> f64 {
    r.norm_squared()
}

fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Parameter covariance. When the envelope is flat over the window the decay
/// parameters are unresolved: they get infinite variance and the oscillation
/// block is inverted on its own.
fn covariance_of(jtj: &DMatrix<f64>, sigma2: f64) -> Result<DMatrix<f64>> {
    if let Some(inv) = jtj.clone().try_inverse().filter(|m| m.iter().all(|v| v.is_finite())) {
        let diag_ok = (0..jtj.nrows()).all(|i| inv[(i, i)] >= 0.0 && inv[(i, i)] * jtj[(i, i)] < 1e12);
        if diag_ok {
            return Ok(inv * sigma2);
        }
    }
    let k = jtj.nrows();
    let block = jtj.view((0, 0), (4, 4)).into_owned();
    let inv = block
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("singular normal matrix".into()))?;
    let mut cov = DMatrix::zeros(k, k);
    cov.view_mut((0, 0), (4, 4)).copy_from(&(inv * sigma2));
    for i in 4..k {
        cov[(i, i)] = f64::INFINITY;
    }
    Ok(cov)
}

/// Fit a damped oscillation with the default options.
pub fn fit_decaying_oscillation(times: &[f64], population: &[f64], family: EnvelopeFamily) -> Result<FitReport> {
    fit_with_options(times, population, family, FitOptions::default())
}

pub fn fit_with_options(
    times: &[f64],
    population: &[f64],
    family: EnvelopeFamily,
    options: FitOptions,
) -> Result<FitReport> {
    if times.len() != population.len() {
        return Err(Error::Config("time and population lengths differ".into()));
    }
    let n = times.len();
    if n < family.parameters() + 2 {
        return Err(Error::Degenerate(format!("{n} points are too few to fit")));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("fit times must be strictly increasing".into()));
    }
    let mean = population.iter().sum::<f64>() / n as f64;
    let spread = population
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        .sqrt()
        / (n as f64).sqrt();
    if !(spread > 1e-9) {
        return Err(Error::Degenerate("trace is flat".into()));
    }

    let span = times[n - 1] - times[0];
    let omega0 = dominant_frequency(times, population)?;
    let periods = omega0 * span / (2.0 * PI);
    if n < MIN_POINTS && periods < MIN_PERIODS {
        return Err(Error::Degenerate(format!(
            "{n} points covering {periods:.1} periods; need {MIN_POINTS} points or {MIN_PERIODS} periods"
        )));
    }

    let t1e = envelope_estimate(times, population, mean, omega0);
    let tau0 = t1e / family.one_over_e();
    let (a, b) = quadrature(times, population, mean, omega0, |t| family.value(t, tau0, 1.0));
    let amp0 = a.hypot(b).max(1e-6);
    let phi0 = (-b).atan2(a);

    let mut p = vec![mean, amp0, omega0, phi0, tau0.ln()];
    if family == EnvelopeFamily::StretchedExponential {
        p.push(0.0);
    }

    let mut r = residuals(family, &p, times, population);
    let mut cost = ssr(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;

    while iterations < options.max_iterations {
        iterations += 1;
        let jac = jacobian(family, &p, times);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for j in 0..p.len() {
                a[(j, j)] += lambda * jtj[(j, j)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let r_trial = residuals(family, &trial, times, population);
            let c_trial = ssr(&r_trial);
            if c_trial.is_finite() && c_trial <= cost {
                let rel = (cost - c_trial) / cost.max(1e-300);
                last_step = step
                    .iter()
                    .zip(&p)
                    .map(|(s, v)| s.abs() / (v.abs() + 1e-12))
                    .fold(0.0, f64::max);
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda / 3.0).max(1e-15);
                improved = true;
                if rel < options.tolerance || last_step < 1e-10 {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !improved {
            // no downhill step left: at a minimum to machine precision
            converged = grad.norm() <= 1e-6 * (cost.sqrt() + 1e-12) * (n as f64).sqrt() || lambda > 1e16;
            break;
        }
        if converged {
            break;
        }
    }
    let rms = (cost / n as f64).sqrt();
    if !converged || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::FitDiverged {
            iterations,
            rms,
            step: last_step,
        });
    }

    let jac = jacobian(family, &p, times);
    let dof = (n - p.len()).max(1) as f64;
    let sigma2 = cost / dof;
    let cov_internal = covariance_of(&(jac.transpose() * &jac), sigma2)?;

    let (mut amp, mut omega, mut phi) = (p[1], p[2], p[3]);
    if omega < 0.0 {
        omega = -omega;
        phi = -phi;
    }
    if amp < 0.0 {
        amp = -amp;
        phi += PI;
    }
    let phi = wrap_phase(phi);
    let tau = p[4].exp();
    let beta = (p.len() > 5).then(|| p[5].exp());

    // transform ln τ, ln β to τ, β
    let mut scale = vec![1.0, 1.0, 1.0, 1.0, tau];
    if let Some(b) = beta {
        scale.push(b);
    }
    let k = p.len();
    let covariance: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| cov_internal[(i, j)] * scale[i] * scale[j]).collect())
        .collect();
    let err = |i: usize| covariance[i][i].max(0.0).sqrt();
    let factor = family.one_over_e();

    Ok(FitReport {
        family,
        offset: p[0],
        amplitude: amp,
        frequency: omega,
        frequency_hz: omega / (2.0 * PI),
        phase: phi,
        tau,
        beta,
        decay_time: factor * tau,
        offset_err: err(0),
        amplitude_err: err(1),
        frequency_err: err(2),
        phase_err: err(3),
        tau_err: err(4),
        beta_err: beta.map(|_| err(5)),
        decay_time_err: factor * err(4),
        covariance,
        residual_rms: rms,
        iterations,
        points: n,
    })
}
