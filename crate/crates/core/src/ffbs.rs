// SPDX-License-Identifier: MIT OR Apache-2.0

//! Forward filtering and backward sampling of changepoints over a uniform grid.
//!
//! The `K` uniform times split `[0, T]` into `K+1` blocks, block `i` being
//! `(u_{i-1}, u_i]`. `C_t ∈ {0, …, t-1}` is the grid index of the most recent
//! changepoint before block `t` (0 when there is none). With `p_j` the
//! self-transition probability at `u_j`, a run that starts at `u_i` ends at
//! `u_k` with probability
//!
//! ```text
//! g(i,k) = (Π_{j=i+1}^{k-1} p_j) (1 − p_k),      1 − G(i,k) = Π_{j=i+1}^{k} p_j
//! ```
//!
//! and the filter moves from block `t` to block `t+1` by
//!
//! ```text
//! P(C_{t+1}=i | Y_{1:t+1}) ∝ P(C_t=i | Y_{1:t}) · (1−G(i,t))/(1−G(i,t−1)) · M(i,t+1)/M(i,t),   i < t
//! P(C_{t+1}=t | Y_{1:t+1}) ∝ M(t,t+1) · Σ_j P(C_t=j | Y_{1:t}) · g(j,t)/(1−G(j,t−1))
//! ```
//!
//! where `M(i,j)` is the marginal likelihood of the observations in
//! `(u_i, u_j]`. Backward sampling draws `C_{K+1}` from the last filter and
//! then, given a changepoint at `u_c`, draws `C_c ∝ P(C_c=i | Y_{1:c}) · g(i,c)/(1−G(i,c−1))`
//! until it reaches 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::log_sum_exp;
use crate::segment::{ObservationSeries, PrefixCache};
use crate::uniformization::UniformGrid;

/// One posterior draw of the changepoint configuration.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangepointSample {
    locations: Vec<f64>,
    serial_indices: Vec<usize>,
}

impl ChangepointSample {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Trusted constructor; both vectors must be increasing and equally long.
    pub fn from_parts(locations: Vec<f64>, serial_indices: Vec<usize>) -> Self {
        assert_eq!(locations.len(), serial_indices.len());
        debug_assert!(locations.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(serial_indices.windows(2).all(|w| w[0] < w[1]));
        Self {
            locations,
            serial_indices,
        }
    }

    /// Canonical sample from continuous locations: a changepoint that would
    /// open an empty segment (before the first observation, or sharing its
    /// serial index with an earlier changepoint) is dropped.
    pub fn from_locations(series: &ObservationSeries, locations: &[f64]) -> Self {
        let mut sorted = locations.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = series.len();
        let mut out = Self::default();
        let mut last = 1;
        for tau in sorted {
            let serial = series.serial_index(tau);
            if serial > last && serial <= n {
                out.locations.push(tau);
                out.serial_indices.push(serial);
                last = serial;
            }
        }
        out
    }

    /// Canonical sample from 1-based grid indices.
    pub fn from_grid_indices(
        grid: &UniformGrid,
        series: &ObservationSeries,
        indices: &[usize],
    ) -> Self {
        let locations: Vec<f64> = indices.iter().map(|&c| grid.times()[c - 1]).collect();
        Self::from_locations(series, &locations)
    }

    /// Equally spaced changepoints on `(0, T)`.
    pub fn equally_spaced(series: &ObservationSeries, count: usize) -> Self {
        let horizon = series.horizon();
        let step = horizon / (count + 1) as f64;
        // Put each location midway between observations so it does not sit on a tie.
        let locations: Vec<f64> = (1..=count)
            .map(|i| {
                let target = i as f64 * step;
                let j = series.count_upto(target);
                let times = series.event_times();
                match (j.checked_sub(1).map(|k| times[k]), times.get(j)) {
                    (Some(a), Some(&b)) => 0.5 * (a + b),
                    _ => target,
                }
            })
            .collect();
        Self::from_locations(series, &locations)
    }

    /// Number of changepoints `m`.
    pub fn count(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn serial_indices(&self) -> &[usize] {
        &self.serial_indices
    }

    /// Observation ranges `(start, end]` in 0-based prefix coordinates, one per segment.
    pub fn segments(&self, n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.count() + 1);
        let mut start = 0;
        for &serial in &self.serial_indices {
            out.push((start, serial - 1));
            start = serial - 1;
        }
        out.push((start, n));
        out
    }
}

/// Run-length law over the grid, built from the self-transition probabilities.
#[derive(Clone, Debug)]
pub struct RunLengthModel {
    self_probs: Vec<f64>,
    // Prefix sums of ln p_j over the positive p_j, plus a count of exact zeros,
    // so that empty products and products containing a zero both stay exact.
    log_prefix: Vec<f64>,
    zero_prefix: Vec<usize>,
}

impl RunLengthModel {
    pub fn new(self_probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = self_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("self-transition probability {p} outside [0, 1]")));
        }
        let mut log_prefix = Vec::with_capacity(self_probs.len() + 1);
        let mut zero_prefix = Vec::with_capacity(self_probs.len() + 1);
        let (mut acc, mut zeros) = (0.0, 0);
        log_prefix.push(acc);
        zero_prefix.push(zeros);
        for &p in &self_probs {
            if p == 0.0 {
                zeros += 1;
            } else {
                acc += p.ln();
            }
            log_prefix.push(acc);
            zero_prefix.push(zeros);
        }
        Ok(Self {
            self_probs,
            log_prefix,
            zero_prefix,
        })
    }

    pub fn from_grid(grid: &UniformGrid) -> Result<Self> {
        Self::new(grid.self_probs().to_vec())
    }

    /// Number of grid times `K`.
    pub fn len(&self) -> usize {
        self.self_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.self_probs.is_empty()
    }

    /// `ln Π_{j=a+1}^{b} p_j`.
    fn log_product(&self, a: usize, b: usize) -> f64 {
        if b <= a {
            return 0.0;
        }
        if self.zero_prefix[b] > self.zero_prefix[a] {
            f64::NEG_INFINITY
        } else {
            self.log_prefix[b] - self.log_prefix[a]
        }
    }

    /// `ln(1 − G(i,k))`, the log probability that a run from `u_i` survives `u_k`.
    pub fn log_survival(&self, i: usize, k: usize) -> f64 {
        self.log_product(i, k)
    }

    /// `ln g(i,k)`.
    pub fn log_mass(&self, i: usize, k: usize) -> f64 {
        debug_assert!(i < k && k <= self.len());
        self.log_product(i, k - 1) + (1.0 - self.self_probs[k - 1]).ln()
    }

    /// `g(i,k)` for `0 ≤ i < k ≤ K`.
    pub fn run_length_mass(&self, i: usize, k: usize) -> Result<f64> {
        if k <= i || k > self.len() {
            return Err(Error::Index(format!(
                "run length mass needs 0 <= i < k <= {}, got i={i}, k={k}",
                self.len()
            )));
        }
        Ok(self.log_mass(i, k).exp())
    }

    /// `G(i,k) = Σ_{j=i+1}^{k} g(i,j)`.
    pub fn run_length_cdf(&self, i: usize, k: usize) -> Result<f64> {
        if k < i || k > self.len() {
            return Err(Error::Index(format!(
                "run length cdf needs 0 <= i <= k <= {}, got i={i}, k={k}",
                self.len()
            )));
        }
        Ok(1.0 - self.log_survival(i, k).exp())
    }

    /// Log of the survival ratio `(1−G(i,t))/(1−G(i,t−1))`.
    fn log_stay(&self, i: usize, t: usize) -> f64 {
        sub_log(self.log_survival(i, t), self.log_survival(i, t - 1))
    }

    /// Log of the hazard `g(i,t)/(1−G(i,t−1))`: a changepoint at `u_t`.
    fn log_hazard(&self, i: usize, t: usize) -> f64 {
        sub_log(self.log_mass(i, t), self.log_survival(i, t - 1))
    }
}

#[inline]
fn sub_log(num: f64, den: f64) -> f64 {
    if num == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        num - den
    }
}

/// Segment marginals over grid blocks: `M(i,j)` covers `(u_i, u_j]`.
#[derive(Clone, Debug)]
pub struct BlockMarginals<'a> {
    cache: &'a PrefixCache,
    obs_end: Vec<usize>,
}

impl<'a> BlockMarginals<'a> {
    /// Observation `t_j` belongs to block `i` iff `u_{i-1} < t_j ≤ u_i`.
    pub fn new(cache: &'a PrefixCache, series: &ObservationSeries, grid: &UniformGrid) -> Self {
        let obs_end = (0..=grid.len() + 1)
            .map(|i| {
                if i == grid.len() + 1 {
                    series.len()
                } else {
                    series.count_upto(grid.boundary(i))
                }
            })
            .collect();
        Self { cache, obs_end }
    }

    /// Number of observations with `t ≤ u_i`.
    pub fn obs_end(&self) -> &[usize] {
        &self.obs_end
    }

    pub fn log_marginal(&self, i: usize, j: usize) -> f64 {
        self.cache.log_marginal(self.obs_end[i], self.obs_end[j])
    }
}

/// Normalized log filtering laws for steps `t = 1..=K+1`.
#[derive(Clone, Debug)]
pub struct FilterTrellis {
    grid_len: usize,
    // Row t (1-based) lives at offset t(t-1)/2 and has t entries.
    log_probs: Vec<f64>,
    log_normalizers: Vec<f64>,
    marginal_evaluations: u64,
}

impl FilterTrellis {
    fn offset(t: usize) -> usize {
        t * (t - 1) / 2
    }

    /// Number of grid times `K`; the trellis has `K+1` steps.
    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn steps(&self) -> usize {
        self.grid_len + 1
    }

    /// `ln P(C_t = · | Y_{1:t})` over `0..t`.
    pub fn step(&self, t: usize) -> &[f64] {
        assert!(t >= 1 && t <= self.steps(), "trellis step {t} out of range");
        &self.log_probs[Self::offset(t)..Self::offset(t) + t]
    }

    /// `ln P(Y_t | Y_{1:t-1})` for each step; their sum is the log evidence.
    pub fn log_normalizers(&self) -> &[f64] {
        &self.log_normalizers
    }

    pub fn log_evidence(&self) -> f64 {
        self.log_normalizers.iter().sum()
    }

    /// Stored trellis entries, `(K+1)(K+2)/2`.
    pub fn entries(&self) -> usize {
        self.log_probs.len()
    }

    /// Segment-marginal evaluations spent building the trellis.
    pub fn marginal_evaluations(&self) -> u64 {
        self.marginal_evaluations
    }
}

/// Runs the forward recursion; `log_marginal(i, j)` must return `ln M(i,j)`
/// for block boundaries `0 ≤ i ≤ j ≤ K+1`.
pub fn forward_filter<F>(model: &RunLengthModel, mut log_marginal: F) -> Result<FilterTrellis>
where
    F: FnMut(usize, usize) -> f64,
{
    let k = model.len();
    let steps = k + 1;
    let mut log_probs = Vec::with_capacity(steps * (steps + 1) / 2);
    let mut log_normalizers = Vec::with_capacity(steps);
    let mut evaluations = 0u64;
    let mut eval = |i: usize, j: usize| {
        evaluations += 1;
        log_marginal(i, j)
    };

    // cur_m[i] = ln M(i, t) for i < t.
    let mut cur_m = Vec::with_capacity(steps);
    let m01 = eval(0, 1);
    if !m01.is_finite() {
        return Err(Error::FilterUnderflow { step: 1 });
    }
    cur_m.push(m01);
    log_probs.push(0.0);
    log_normalizers.push(m01);

    let mut row = Vec::with_capacity(steps);
    for t in 1..=k {
        let prev = &log_probs[FilterTrellis::offset(t)..FilterTrellis::offset(t) + t];
        row.clear();
        let mut birth = Vec::with_capacity(t);
        for i in 0..t {
            let m_next = eval(i, t + 1);
            let lp = prev[i];
            if lp == f64::NEG_INFINITY {
                row.push(f64::NEG_INFINITY);
            } else {
                row.push(lp + model.log_stay(i, t) + (m_next - cur_m[i]));
                birth.push(lp + model.log_hazard(i, t));
            }
            cur_m[i] = m_next;
        }
        let m_new = eval(t, t + 1);
        cur_m.push(m_new);
        row.push(m_new + log_sum_exp(&birth));

        let z = log_sum_exp(&row);
        if !z.is_finite() {
            return Err(Error::FilterUnderflow { step: t + 1 });
        }
        log_normalizers.push(z);
        log_probs.extend(row.iter().map(|&x| x - z));
    }

    Ok(FilterTrellis {
        grid_len: k,
        log_probs,
        log_normalizers,
        marginal_evaluations: evaluations,
    })
}

/// Draws an index from unnormalized log weights.
fn draw_index<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("nonempty weights");
    let u = rng.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn cumulative_weights(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    log_w
        .iter()
        .map(|&w| {
            acc += (w - max).exp();
            acc
        })
        .collect()
}

/// Backward sampling; returns the 1-based grid indices of the sampled
/// changepoints in increasing order.
pub fn backward_sample<R: Rng + ?Sized>(
    trellis: &FilterTrellis,
    model: &RunLengthModel,
    rng: &mut R,
) -> Vec<usize> {
    backward_sample_pruned(trellis, model, 1, rng)
}

/// Backward sampling with knot pruning: each most-recent-changepoint draw is
/// repeated `repeats` times and the earliest location is kept.
pub fn backward_sample_pruned<R: Rng + ?Sized>(
    trellis: &FilterTrellis,
    model: &RunLengthModel,
    repeats: usize,
    rng: &mut R,
) -> Vec<usize> {
    assert!(repeats >= 1, "knot pruning needs at least one draw");
    let draw_min = |log_w: &[f64], rng: &mut R| {
        let cumulative = cumulative_weights(log_w);
        (0..repeats)
            .map(|_| draw_index(&cumulative, rng))
            .min()
            .expect("repeats >= 1")
    };

    let mut out = Vec::new();
    let mut c = draw_min(trellis.step(trellis.steps()), rng);
    while c > 0 {
        out.push(c);
        let weights: Vec<f64> = trellis
            .step(c)
            .iter()
            .enumerate()
            .map(|(i, &lp)| {
                if lp == f64::NEG_INFINITY {
                    lp
                } else {
                    lp + model.log_hazard(i, c)
                }
            })
            .collect();
        let next = draw_min(&weights, rng);
        debug_assert!(next < c);
        c = next;
    }
    out.reverse();
    out
}
