//! One- and two-dimensional derivative-free minimisers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search on [lo, hi] after checking on a coarse grid of
/// `samples` points that the objective has one basin.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    samples: usize,
) -> Result<Minimum> {
    if !(hi > lo) {
        return Err(Error::Config(format!("empty search interval [{lo}, {hi}]")));
    }
    let samples = samples.max(5);
    let grid: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let x = lo + (hi - lo) * i as f64 / (samples - 1) as f64;
            (x, f(x))
        })
        .collect();
    if grid.iter().any(|s| !s.1.is_finite()) {
        return Err(Error::BracketFailure { samples: grid });
    }
    let k = (0..samples)
        .min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
        .expect("non-empty grid");
    let slack = |a: f64, b: f64| 1e-12 * a.abs().max(b.abs());
    let descending = grid[..=k].windows(2).all(|w| w[1].1 <= w[0].1 + slack(w[0].1, w[1].1));
    let ascending = grid[k..].windows(2).all(|w| w[1].1 >= w[0].1 - slack(w[0].1, w[1].1));
    if !(descending && ascending) {
        return Err(Error::BracketFailure { samples: grid });
    }

    let mut a = grid[k.saturating_sub(1)].0;
    let mut b = grid[(k + 1).min(samples - 1)].0;
    let mut evaluations = samples;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    evaluations += 2;
    let floor = rel_tol * (hi - lo) * 1e-6;
    while b - a > rel_tol * (0.5 * (a + b)).abs().max(floor) {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
        evaluations += 1;
    }
    let (x, value) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    let best_grid = grid[k];
    let (x, value) = if best_grid.1 < value { best_grid } else { (x, value) };
    Ok(Minimum { x, value, evaluations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

/// Nelder–Mead simplex. Stops when the simplex spans less than `x_tol` in
/// every coordinate and the values differ by less than `f_tol`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    x_tol: f64,
    f_tol: f64,
    max_iterations: usize,
) -> SimplexMinimum {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    let mut iterations = 0;
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(c, w)| c + t * (w - c)).collect() };

    while iterations < max_iterations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread_x = (0..n)
            .map(|d| {
                let (lo, hi) = simplex
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[d]), hi.max(v[d])));
                hi - lo
            })
            .fold(0.0, f64::max);
        if spread_x < x_tol && values[n] - values[0] < f_tol {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|d| simplex[..n].iter().map(|v| v[d]).sum::<f64>() / n as f64)
            .collect();
        let worst = simplex[n].clone();
        let reflected = point(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = point(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let (contracted, fc) = if fr < values[n] {
                let c = point(&centroid, &worst, -0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = point(&centroid, &worst, 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    simplex[i] = point(&best, &simplex[i], 0.5);
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty simplex");
    SimplexMinimum {
        x: simplex[best].clone(),
        value: values[best],
        iterations,
    }
}
