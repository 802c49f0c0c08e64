// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;

use unicp::segment::{ObservationSeries, PrefixCache, SegmentModelSpec};

/// Two-sided one-sample KS statistic.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample correction.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        p += if k as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    ks_pvalue(ks_statistic(samples, cdf), samples.len())
}

/// Pearson chi-square p-value for observed counts against expected counts.
pub fn chi_square_pvalue(observed: &[f64], expected: &[f64], lost_dof: usize) -> f64 {
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .filter(|(_, &e)| e > 0.0)
        .map(|(&o, &e)| (o - e).powi(2) / e)
        .sum();
    let dof = (observed.len() - 1 - lost_dof) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

/// Total variation distance between an empirical and an exact law.
pub fn total_variation<K: std::hash::Hash + Eq + Clone>(
    empirical: &HashMap<K, usize>,
    exact: &HashMap<K, f64>,
) -> f64 {
    let total: usize = empirical.values().sum();
    let mut keys: Vec<&K> = exact.keys().collect();
    keys.extend(empirical.keys().filter(|k| !exact.contains_key(*k)));
    0.5 * keys
        .into_iter()
        .map(|k| {
            let p = exact.get(k).copied().unwrap_or(0.0);
            let q = empirical.get(k).copied().unwrap_or(0) as f64 / total as f64;
            (p - q).abs()
        })
        .sum::<f64>()
}

/// Log density of one observation, written out independently of the crate.
pub fn oracle_log_density(spec: &SegmentModelSpec, theta: f64, y: f64) -> f64 {
    match *spec {
        SegmentModelSpec::Normal { noise_var, .. } => {
            -0.5 * (2.0 * std::f64::consts::PI * noise_var).ln() - (y - theta).powi(2) / (2.0 * noise_var)
        }
        SegmentModelSpec::Exponential { .. } => theta.ln() - theta * y,
        SegmentModelSpec::Poisson { .. } => y * theta.ln() - theta - ln_gamma(y + 1.0),
    }
}

fn oracle_log_prior(spec: &SegmentModelSpec, theta: f64) -> f64 {
    match *spec {
        SegmentModelSpec::Normal {
            prior_mean,
            prior_var,
            ..
        } => -0.5 * (2.0 * std::f64::consts::PI * prior_var).ln() - (theta - prior_mean).powi(2) / (2.0 * prior_var),
        SegmentModelSpec::Exponential { shape, rate } | SegmentModelSpec::Poisson { shape, rate } => {
            shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * theta.ln() - rate * theta
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `ln ∫ Π p(y_i | θ) p(θ) dθ` by adaptive quadrature. Positive parameters
/// are integrated on the log scale.
pub fn quadrature_log_marginal(spec: &SegmentModelSpec, ys: &[f64]) -> f64 {
    let positive = !matches!(spec, SegmentModelSpec::Normal { .. });
    let log_integrand = |s: f64| {
        let theta = if positive { s.exp() } else { s };
        let jac = if positive { s } else { 0.0 };
        ys.iter().map(|&y| oracle_log_density(spec, theta, y)).sum::<f64>() + oracle_log_prior(spec, theta) + jac
    };
    // Golden-section search for the peak on a wide bracket.
    let (mut lo, mut hi) = if positive { (-40.0, 15.0) } else { (-1e3, 1e3) };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..300 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if log_integrand(a) > log_integrand(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let peak = 0.5 * (lo + hi);
    let top = log_integrand(peak);
    let reach = |dir: f64| {
        let mut step = 1e-3;
        while log_integrand(peak + dir * step) > top - 60.0 && step < 1e4 {
            step *= 1.5;
        }
        peak + dir * step
    };
    let (a, b) = (reach(-1.0), reach(1.0));
    let f = |s: f64| (log_integrand(s) - top).exp();
    let integral = adaptive_simpson(&f, a, peak, 1e-13) + adaptive_simpson(&f, peak, b, 1e-13);
    top + integral.ln()
}

/// Observations in the grid block span `(u_i, u_j]`, by direct scan.
fn block_range(series: &ObservationSeries, bounds: &[f64], i: usize, j: usize) -> (usize, usize) {
    let count = |u: f64| series.event_times().iter().filter(|&&t| t <= u).count();
    let end = if j == bounds.len() - 1 { series.len() } else { count(bounds[j]) };
    let start = if i == 0 { 0 } else { count(bounds[i]) };
    (start, end)
}

/// Exact posterior over subsets of grid indices `1..=K` chosen as
/// changepoints, by enumerating all `2^K` configurations of the discrete
/// chain with self-probabilities `p_j`.
pub fn enumerate_configurations(
    series: &ObservationSeries,
    spec: SegmentModelSpec,
    grid_times: &[f64],
    self_probs: &[f64],
) -> HashMap<Vec<usize>, f64> {
    let k = grid_times.len();
    assert!(k <= 16);
    let cache = PrefixCache::build(series, spec).unwrap();
    let mut bounds = vec![0.0];
    bounds.extend_from_slice(grid_times);
    bounds.push(series.horizon());
    let mut log_w = Vec::with_capacity(1 << k);
    for mask in 0u32..(1 << k) {
        let chosen: Vec<usize> = (1..=k).filter(|&j| mask & (1 << (j - 1)) != 0).collect();
        let mut lw = 0.0;
        for j in 1..=k {
            lw += if mask & (1 << (j - 1)) != 0 {
                (1.0 - self_probs[j - 1]).ln()
            } else {
                self_probs[j - 1].ln()
            };
        }
        let mut edges = vec![0];
        edges.extend(&chosen);
        edges.push(k + 1);
        for w in edges.windows(2) {
            let (s, t) = block_range(series, &bounds, w[0], w[1]);
            lw += cache.log_marginal(s, t);
        }
        log_w.push((chosen, lw));
    }
    let max = log_w.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = log_w.iter().map(|x| (x.1 - max).exp()).sum();
    log_w.into_iter().map(|(c, lw)| (c, (lw - max).exp() / z)).collect()
}

/// Brute-force MAP path over all monotone state sequences that start in 0,
/// end in `m` and step by at most one.
pub fn brute_force_viterbi(
    series: &ObservationSeries,
    spec: &SegmentModelSpec,
    rates: &[f64],
    theta: &[f64],
    m: usize,
) -> Option<(Vec<usize>, f64)> {
    brute_force_viterbi_shifted(series, spec, rates, theta, m, 0.0)
}

/// As [`brute_force_viterbi`] with `shift` added to every log emission.
pub fn brute_force_viterbi_shifted(
    series: &ObservationSeries,
    spec: &SegmentModelSpec,
    rates: &[f64],
    theta: &[f64],
    m: usize,
    shift: f64,
) -> Option<(Vec<usize>, f64)> {
    let n = series.len();
    let y = series.values();
    let times = series.event_times();
    let mut best: Option<(Vec<usize>, f64)> = None;
    // Choose the jump observations as an m-subset of 2..=n.
    let mut jumps: Vec<usize> = (2..2 + m).collect();
    if m > 0 && *jumps.last().unwrap() > n {
        return None;
    }
    loop {
        let mut states = vec![0usize; n];
        let mut s = 0;
        for k in 1..=n {
            if jumps.contains(&k) {
                s += 1;
            }
            states[k - 1] = s;
        }
        let mut score = 0.0;
        let mut prev_t = 0.0;
        let mut prev_s = 0;
        for k in 0..n {
            let dt = times[k] - prev_t;
            let st = states[k];
            score += if st == prev_s {
                -rates[st] * dt
            } else {
                rates[prev_s].ln() - rates[prev_s].min(rates[st]) * dt
            };
            score += oracle_log_density(spec, theta[st], y[k]) + shift;
            prev_t = times[k];
            prev_s = st;
        }
        if score.is_finite() && best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((states, score));
        }
        // Next combination in lexicographic order.
        let mut i = m;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if jumps[i] < n - (m - 1 - i) {
                jumps[i] += 1;
                for j in i + 1..m {
                    jumps[j] = jumps[j - 1] + 1;
                }
                break;
            }
        }
    }
}
