// SPDX-License-Identifier: MIT OR Apache-2.0

//! MAP segmentation for a fixed number of changepoints.
//!
//! The optimal path of the left-to-right chain only jumps at event times: on
//! `(t_{k-1}, t_k]` a jump `i → i+1` at `u` has density
//! `q_i e^{-q_i(u - t_{k-1})} e^{-q_{i+1}(t_k - u)}`, maximized at an
//! endpoint, which gives the path-maximized weight
//! `q_i e^{-min(q_i, q_{i+1}) Δt_k}`. Staying costs `e^{-q_i Δt_k}`. The
//! decoder is then an ordinary Viterbi recursion in log space over the
//! `m+1` states with emissions `p(y_k | θ_j)`.

use crate::error::{Error, Result};
use crate::ffbs::ChangepointSample;
use crate::gibbs::PosteriorArchive;
use crate::segment::{ObservationSeries, SegmentModelSpec};

/// Path-maximized log transition weight between consecutive event times
/// separated by `dt`. `from`/`to` are 0-based states; anything but a stay or
/// a single forward step is a structural zero.
pub fn transition_weight(rates: &[f64], from: usize, to: usize, dt: f64) -> f64 {
    let q = rates[from];
    if to == from {
        -q * dt
    } else if to == from + 1 && to < rates.len() {
        q.ln() - q.min(rates[to]) * dt
    } else {
        f64::NEG_INFINITY
    }
}

/// Decoded MAP path.
#[derive(Clone, Debug, PartialEq)]
pub struct ViterbiPath {
    pub sample: ChangepointSample,
    /// 0-based state of each observation.
    pub states: Vec<usize>,
    pub log_score: f64,
}

/// Most probable path with exactly `m` changepoints, for plug-in `rates` and
/// `theta` (one per segment). The path starts in the first state at `t_1`.
pub fn viterbi_map(
    series: &ObservationSeries,
    spec: &SegmentModelSpec,
    rates: &[f64],
    theta: &[f64],
    m: usize,
) -> Result<ViterbiPath> {
    let n = series.len();
    let states = m + 1;
    if m >= n {
        return Err(Error::Infeasible(format!("{m} changepoints need more than {n} observations")));
    }
    if rates.len() != states || theta.len() != states {
        return Err(Error::invalid(format!(
            "{m} changepoints need {states} rates and parameters, got {} and {}",
            rates.len(),
            theta.len()
        )));
    }
    if let Some(q) = rates.iter().find(|q| !(q.is_finite() && **q > 0.0)) {
        return Err(Error::invalid(format!("rate {q} must be finite and > 0")));
    }

    let y = series.values();
    let mut score = vec![f64::NEG_INFINITY; states];
    let mut next = vec![f64::NEG_INFINITY; states];
    // back[k*states + j] is true when state j at observation k+1 came from j-1.
    let mut back = vec![false; n * states];

    let e0 = spec.log_density(theta[0], y[0]);
    if e0 == f64::NEG_INFINITY {
        return Err(Error::ZeroEmission { index: 1 });
    }
    score[0] = transition_weight(rates, 0, 0, series.delta_t(1)) + e0;

    for k in 1..n {
        let dt = series.delta_t(k + 1);
        let mut any = false;
        for j in 0..states.min(k + 1) {
            let stay = score[j] + transition_weight(rates, j, j, dt);
            let jump = if j > 0 {
                score[j - 1] + transition_weight(rates, j - 1, j, dt)
            } else {
                f64::NEG_INFINITY
            };
            // Ties go to staying.
            let (best, jumped) = if jump > stay { (jump, true) } else { (stay, false) };
            back[k * states + j] = jumped;
            let e = spec.log_density(theta[j], y[k]);
            if e > f64::NEG_INFINITY {
                any = true;
            }
            next[j] = best + e;
        }
        if !any {
            return Err(Error::ZeroEmission { index: k + 1 });
        }
        std::mem::swap(&mut score, &mut next);
    }

    let log_score = score[m];
    if log_score == f64::NEG_INFINITY {
        return Err(Error::Infeasible(format!("no path with {m} changepoints has positive density")));
    }
    let mut path = vec![0; n];
    let mut state = m;
    for k in (0..n).rev() {
        path[k] = state;
        if k > 0 && back[k * states + state] {
            state -= 1;
        }
    }
    let times = series.event_times();
    let (locations, serial): (Vec<f64>, Vec<usize>) = (1..n)
        .filter(|&k| path[k] != path[k - 1])
        .map(|k| (times[k - 1], k + 1))
        .unzip();
    Ok(ViterbiPath {
        sample: ChangepointSample::from_parts(locations, serial),
        states: path,
        log_score,
    })
}

/// Mode of the retained changepoint counts; ties go to the smaller count.
pub fn map_count(archive: &PosteriorArchive) -> Result<usize> {
    if archive.is_empty() {
        return Err(Error::EmptyArchive);
    }
    let max = archive.counts().max().unwrap_or(0);
    let mut freq = vec![0usize; max + 1];
    for m in archive.counts() {
        freq[m] += 1;
    }
    let best = freq.iter().copied().max().unwrap_or(0);
    Ok(freq.iter().position(|&f| f == best).unwrap_or(0))
}

/// Posterior means of the rates and segment parameters over the retained
/// draws with exactly `m` changepoints, matched by segment rank.
pub fn plug_in_estimates(archive: &PosteriorArchive, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rates = vec![0.0; m + 1];
    let mut theta = vec![0.0; m + 1];
    let mut used = 0usize;
    for d in archive.draws.iter().filter(|d| d.sample.count() == m) {
        for (acc, &q) in rates.iter_mut().zip(&d.rates) {
            *acc += q;
        }
        for (acc, &x) in theta.iter_mut().zip(&d.theta) {
            *acc += x;
        }
        used += 1;
    }
    if used == 0 {
        return Err(Error::Infeasible(format!("no retained draw has {m} changepoints")));
    }
    let scale = 1.0 / used as f64;
    rates.iter_mut().for_each(|x| *x *= scale);
    theta.iter_mut().for_each(|x| *x *= scale);
    Ok((rates, theta))
}

/// MAP count from the archive followed by Viterbi decoding at the plug-in values.
pub fn map_segmentation(
    series: &ObservationSeries,
    spec: &SegmentModelSpec,
    archive: &PosteriorArchive,
) -> Result<ViterbiPath> {
    let m = map_count(archive)?;
    let (rates, theta) = plug_in_estimates(archive, m)?;
    viterbi_map(series, spec, &rates, &theta, m)
}
