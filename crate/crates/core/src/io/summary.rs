// SPDX-License-Identifier: MIT OR Apache-2.0

//! Posterior summaries of a sampler archive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::PosteriorArchive;
use crate::viterbi::map_count;

/// Shortest interval holding `mass` of the samples.
pub fn hpd_interval(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::invalid("hpd of no samples"));
    }
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::invalid(format!("hpd mass must be in (0, 1], got {mass}")));
    }
    if let Some(bad) = samples.iter().find(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("non-finite sample {bad}")));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let w = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (lo, hi) = (0..=n - w)
        .map(|i| (sorted[i], sorted[i + w - 1]))
        .min_by(|a, b| (a.1 - a.0).total_cmp(&(b.1 - b.0)))
        .unwrap_or((sorted[0], sorted[n - 1]));
    Ok((lo, hi))
}

#[derive(Clone, Copy, Debug)]
pub struct SummaryOptions {
    pub hpd_mass: f64,
    /// Histogram bin width in serial indices; `None` picks 1 up to 2000
    /// observations and `ceil(n/1000)` beyond.
    pub bin_width: Option<usize>,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            hpd_mass: 0.95,
            bin_width: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountProbability {
    pub count: usize,
    pub probability: f64,
}

/// Bin covering serial indices `start..=end`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub start: usize,
    pub end: usize,
    pub frequency: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    /// 1-based rank of the changepoint or segment.
    pub rank: usize,
    pub mean: f64,
    pub hpd_low: f64,
    pub hpd_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub draws: usize,
    pub n: usize,
    pub hpd_mass: f64,
    pub count_posterior: Vec<CountProbability>,
    pub map_count: usize,
    /// Draws with exactly `map_count` changepoints, which condition the
    /// per-changepoint and per-segment summaries.
    pub conditioning_draws: usize,
    pub bin_width: usize,
    pub histogram: Vec<HistogramBin>,
    /// Serial indices, ranked within each draw.
    pub changepoints: Vec<IntervalSummary>,
    pub theta: Vec<IntervalSummary>,
    pub rates: Vec<IntervalSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_locations: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cusum: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<String>,
}

fn interval(rank: usize, xs: &[f64], mass: f64) -> Result<IntervalSummary> {
    let (hpd_low, hpd_high) = hpd_interval(xs, mass)?;
    Ok(IntervalSummary {
        rank,
        mean: xs.iter().sum::<f64>() / xs.len() as f64,
        hpd_low,
        hpd_high,
    })
}

pub fn default_bin_width(n: usize) -> usize {
    if n <= 2000 {
        1
    } else {
        n.div_ceil(1000)
    }
}

pub fn summarize(archive: &PosteriorArchive, options: &SummaryOptions) -> Result<SummaryReport> {
    let map = map_count(archive)?;
    let total = archive.len();
    let max = archive.counts().max().unwrap_or(0);
    let mut freq = vec![0usize; max + 1];
    for m in archive.counts() {
        freq[m] += 1;
    }
    let count_posterior = freq
        .iter()
        .enumerate()
        .map(|(count, &f)| CountProbability {
            count,
            probability: f as f64 / total as f64,
        })
        .collect();

    let n = archive.n.max(1);
    let bin_width = options.bin_width.unwrap_or_else(|| default_bin_width(n));
    if bin_width == 0 {
        return Err(Error::invalid("histogram bin width must be positive"));
    }
    let bins = n.div_ceil(bin_width);
    let mut histogram: Vec<HistogramBin> = (0..bins)
        .map(|b| HistogramBin {
            start: b * bin_width + 1,
            end: ((b + 1) * bin_width).min(n),
            frequency: 0,
        })
        .collect();
    for d in &archive.draws {
        for &s in d.sample.serial_indices() {
            let b = ((s.max(1) - 1) / bin_width).min(bins - 1);
            histogram[b].frequency += 1;
        }
    }

    let cond: Vec<_> = archive.draws.iter().filter(|d| d.sample.count() == map).collect();
    let column = |f: &dyn Fn(&crate::gibbs::ArchivedDraw) -> f64| -> Vec<f64> {
        cond.iter().map(|d| f(d)).collect()
    };
    let mut changepoints = Vec::with_capacity(map);
    for r in 0..map {
        let xs = column(&|d| d.sample.serial_indices()[r] as f64);
        changepoints.push(interval(r + 1, &xs, options.hpd_mass)?);
    }
    let mut theta = Vec::with_capacity(map + 1);
    let mut rates = Vec::with_capacity(map + 1);
    for r in 0..=map {
        if cond.iter().all(|d| d.theta.len() > r) {
            theta.push(interval(r + 1, &column(&|d| d.theta[r]), options.hpd_mass)?);
        }
        if cond.iter().all(|d| d.rates.len() > r) {
            rates.push(interval(r + 1, &column(&|d| d.rates[r]), options.hpd_mass)?);
        }
    }

    Ok(SummaryReport {
        draws: total,
        n: archive.n,
        hpd_mass: options.hpd_mass,
        count_posterior,
        map_count: map,
        conditioning_draws: cond.len(),
        bin_width,
        histogram,
        changepoints,
        theta,
        rates,
        map_locations: None,
        cusum: Vec::new(),
        termination: archive.termination.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ffbs::ChangepointSample;
    use crate::gibbs::ArchivedDraw;

    fn draw(serial: &[usize]) -> ArchivedDraw {
        ArchivedDraw {
            iteration: 0,
            sample: ChangepointSample::from_parts(
                serial.iter().map(|&s| s as f64 - 0.5).collect(),
                serial.to_vec(),
            ),
            rates: vec![0.1; serial.len() + 1],
            theta: (0..=serial.len()).map(|i| i as f64).collect(),
        }
    }

    #[test]
    fn hpd_of_uniform_grid() {
        let xs: Vec<f64> = (0..100).map(f64::from).collect();
        let (lo, hi) = hpd_interval(&xs, 0.9).unwrap();
        assert_eq!(hi - lo, 89.0);
        assert_eq!(hpd_interval(&[3.0], 0.95).unwrap(), (3.0, 3.0));
        assert!(hpd_interval(&[], 0.95).is_err());
        assert!(hpd_interval(&[1.0], 0.0).is_err());
    }

    #[test]
    fn hpd_prefers_the_dense_region() {
        let mut xs = vec![0.0; 95];
        xs.extend([10.0, 20.0, 30.0, 40.0, 50.0]);
        assert_eq!(hpd_interval(&xs, 0.95).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn bin_width_rule() {
        assert_eq!(default_bin_width(1200), 1);
        assert_eq!(default_bin_width(2000), 1);
        assert_eq!(default_bin_width(10_000), 10);
        assert_eq!(default_bin_width(2001), 3);
    }

    #[test]
    fn report_counts_and_histogram() {
        let archive = PosteriorArchive {
            n: 10,
            horizon: 10.0,
            draws: vec![draw(&[4]), draw(&[5]), draw(&[4, 8]), draw(&[])],
            ..Default::default()
        };
        let r = summarize(&archive, &SummaryOptions::default()).unwrap();
        assert_eq!(r.map_count, 1);
        assert_eq!(r.conditioning_draws, 2);
        let probs: Vec<f64> = r.count_posterior.iter().map(|c| c.probability).collect();
        assert_eq!(probs, vec![0.25, 0.5, 0.25]);
        assert_eq!(r.histogram.len(), 10);
        assert_eq!(r.histogram[3].frequency, 2);
        assert_eq!(r.histogram.iter().map(|b| b.frequency).sum::<usize>(), 4);
        assert_eq!(r.changepoints[0].mean, 4.5);
        assert_eq!(r.theta.len(), 2);
    }

    #[test]
    fn empty_archive_rejected() {
        let archive = PosteriorArchive::default();
        assert!(matches!(
            summarize(&archive, &SummaryOptions::default()),
            Err(Error::EmptyArchive)
        ));
    }
}
