// SPDX-License-Identifier: MIT OR Apache-2.0

//! Centralized, normalized cumulative sums `Σ_{i≤j} y_i / Σ_{i≤n} y_i − j/n`.
//!
//! For a stationary sequence the curve stays near zero like a Brownian
//! bridge; mean shifts show up as corners.

use crate::error::{Error, Result};

pub fn cusum_diagnostic(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::invalid("cusum of an empty series"));
    }
    let total: f64 = values.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::invalid(format!("cusum undefined: series total is {total}")));
    }
    let n = values.len() as f64;
    let mut acc = 0.0;
    Ok(values
        .iter()
        .enumerate()
        .map(|(j, &y)| {
            acc += y;
            acc / total - (j + 1) as f64 / n
        })
        .collect())
}

/// Critical value for the sup of a Brownian bridge (about 0.1% tail).
const CORNER_THRESHOLD: f64 = 1.95;
const MIN_SEGMENT: usize = 5;

/// Corner positions of the CUSUM curve, as serial indices of the first
/// observation after each corner, found by recursive chord splitting.
///
/// A stretch `(a, b]` is split at the point farthest from its chord when that
/// distance exceeds the bridge critical value scaled by `σ̂ √(b−a)`, where `σ̂`
/// is the difference-based noise estimate.
pub fn cusum_corners(values: &[f64]) -> Result<Vec<usize>> {
    cusum_diagnostic(values)?;
    let n = values.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &y in values {
        acc += y;
        prefix.push(acc);
    }
    let sigma = if n > 1 {
        let ss: f64 = values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        (ss / (2.0 * (n - 1) as f64)).sqrt()
    } else {
        0.0
    };
    let mut corners = Vec::new();
    let mut stack = vec![(0usize, n)];
    while let Some((a, b)) = stack.pop() {
        if b - a < 2 * MIN_SEGMENT {
            continue;
        }
        let len = (b - a) as f64;
        let rise = prefix[b] - prefix[a];
        let (best, dev) = (a + MIN_SEGMENT..=b - MIN_SEGMENT)
            .map(|j| {
                let chord = prefix[a] + rise * (j - a) as f64 / len;
                (j, (prefix[j] - chord).abs())
            })
            .fold((a, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        if dev > CORNER_THRESHOLD * sigma * len.sqrt() && dev > 0.0 {
            corners.push(best + 1);
            stack.push((a, best));
            stack.push((best, b));
        }
    }
    corners.sort_unstable();
    Ok(corners)
}

/// Number of CUSUM corners; used to pick the starting changepoint count.
pub fn corner_count(values: &[f64]) -> Result<usize> {
    cusum_corners(values).map(|c| c.len())
}
