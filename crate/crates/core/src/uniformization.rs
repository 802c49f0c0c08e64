// SPDX-License-Identifier: MIT OR Apache-2.0

//! Uniformization of the left-to-right changepoint chain.
//!
//! The latent chain jumps `i → i+1` at rate `q_i`. Given a dominating rate
//! `λ > max q_i`, the chain observed at the events of a Poisson(λ) process is
//! a discrete chain with transition matrix `P = I + Q/λ`:
//!
//! ```text
//! P[i,i]   = 1 − q_i/λ
//! P[i,i+1] = q_i/λ
//! P_t      = Σ_k Pois(k; λt) P^k
//! ```
//!
//! The sampler replaces the constant `λ` by a piecewise intensity
//! `λ(t) = k·q_{X(t)}` drawn with Lewis–Shedler thinning, and always adds the
//! previous changepoints to the resulting grid.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffbs::ChangepointSample;
use crate::math::ln_gamma;

/// Number of extra grid draws before an iteration gives up on the cap.
pub const GRID_RETRIES: usize = 3;

/// Jump rates of the instantiated segments plus their Gamma(a, b) prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConfiguration {
    rates: Vec<f64>,
    prior_shape: f64,
    prior_rate: f64,
}

impl RateConfiguration {
    pub fn new(rates: Vec<f64>, prior_shape: f64, prior_rate: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid("rate configuration needs at least one segment"));
        }
        if let Some(i) = rates.iter().position(|q| !(q.is_finite() && *q > 0.0)) {
            return Err(Error::invalid(format!(
                "rate q_{} = {} must be finite and > 0",
                i + 1,
                rates[i]
            )));
        }
        for (name, v) in [("shape", prior_shape), ("rate", prior_rate)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("rate prior {name} must be > 0, got {v}")));
            }
        }
        Ok(Self {
            rates,
            prior_shape,
            prior_rate,
        })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn prior_shape(&self) -> f64 {
        self.prior_shape
    }

    pub fn prior_rate(&self) -> f64 {
        self.prior_rate
    }

    pub fn segments(&self) -> usize {
        self.rates.len()
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }
}

/// Uniform times with the generating trajectory's segment labels and the
/// per-time self-transition probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct UniformGrid {
    times: Vec<f64>,
    states: Vec<usize>,
    self_probs: Vec<f64>,
    horizon: f64,
}

impl UniformGrid {
    /// Grid with explicit times and self-probabilities; states default to 0.
    pub fn new(times: Vec<f64>, self_probs: Vec<f64>, horizon: f64) -> Result<Self> {
        let states = vec![0; times.len()];
        Self::with_states(times, states, self_probs, horizon)
    }

    pub fn with_states(
        times: Vec<f64>,
        states: Vec<usize>,
        self_probs: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if times.len() != self_probs.len() || times.len() != states.len() {
            return Err(Error::invalid("grid times, states and self-probabilities differ in length"));
        }
        let mut prev = 0.0;
        for &u in &times {
            if !(u > prev && u < horizon) {
                return Err(Error::invalid(format!(
                    "grid time {u} must be strictly increasing within (0, {horizon})"
                )));
            }
            prev = u;
        }
        if let Some(p) = self_probs.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::invalid(format!("self-transition probability {p} not in [0, 1)")));
        }
        Ok(Self {
            times,
            states,
            self_probs,
            horizon,
        })
    }

    /// Number of uniform times `K`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn self_probs(&self) -> &[f64] {
        &self.self_probs
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Boundary `u_i` for `i = 0..=K+1`, with `u_0 = 0` and `u_{K+1} = T`.
    pub fn boundary(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else if i <= self.times.len() {
            self.times[i - 1]
        } else {
            self.horizon
        }
    }
}

/// `P = I + Q/λ` for the instantiated states, as `(m+1) × (m+2)` rows whose
/// last column is the next, not yet instantiated, state.
pub fn uniformized_matrix(rates: &[f64], lambda: f64) -> Result<Vec<Vec<f64>>> {
    for (index, &rate) in rates.iter().enumerate() {
        if !(rate >= 0.0 && rate < lambda) {
            return Err(Error::RateNotDominated {
                index,
                rate,
                lambda,
            });
        }
    }
    let width = rates.len() + 1;
    Ok(rates
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let mut row = vec![0.0; width];
            let jump = q / lambda;
            row[i + 1] = jump;
            row[i] = 1.0 - jump;
            row
        })
        .collect())
}

/// Truncated uniformization series `Σ_{k=0}^{L} Pois(k; λt) P^k` on the
/// square block of `rates.len() + 1` states, the last one absorbing.
pub fn uniformized_transition(
    rates: &[f64],
    lambda: f64,
    t: f64,
    truncation: usize,
) -> Result<Vec<Vec<f64>>> {
    let p = uniformized_matrix(rates, lambda)?;
    let size = rates.len() + 1;
    let lt = lambda * t;
    let weights: Vec<f64> = (0..=truncation)
        .map(|k| {
            let k = k as f64;
            if lt == 0.0 {
                if k == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                (k * lt.ln() - lt - ln_gamma(k + 1.0)).exp()
            }
        })
        .collect();
    let mut out = vec![vec![0.0; size]; size];
    for (start, out_row) in out.iter_mut().enumerate() {
        let mut v = vec![0.0; size];
        v[start] = 1.0;
        for (k, &w) in weights.iter().enumerate() {
            if k > 0 {
                let mut next = vec![0.0; size];
                for (i, &mass) in v.iter().enumerate() {
                    if mass == 0.0 {
                        continue;
                    }
                    if i < rates.len() {
                        next[i] += mass * p[i][i];
                        next[i + 1] += mass * p[i][i + 1];
                    } else {
                        next[i] += mass;
                    }
                }
                v = next;
            }
            for (o, &x) in out_row.iter_mut().zip(&v) {
                *o += w * x;
            }
        }
    }
    Ok(out)
}

/// Upper bound `λ^L (t−s)^L / L!` on the sup-norm error of truncating the
/// uniformization series after `L` terms.
pub fn truncation_bound(lambda: f64, span: f64, truncation: usize) -> f64 {
    let l = truncation as f64;
    let x = lambda * span;
    if x == 0.0 {
        return if truncation == 0 { 1.0 } else { 0.0 };
    }
    (l * x.ln() - ln_gamma(l + 1.0)).exp()
}

/// Event times of a homogeneous Poisson process of rate `lambda` on `(0, horizon)`.
pub fn simulate_homogeneous_poisson<R: Rng + ?Sized>(
    lambda: f64,
    horizon: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut out = Vec::new();
    poisson_stream(lambda, horizon, rng, |t, _| {
        out.push(t);
        true
    });
    out
}

/// Feeds successive event times to `visit` until the horizon is reached or
/// `visit` returns false.
fn poisson_stream<R, F>(lambda: f64, horizon: f64, rng: &mut R, mut visit: F)
where
    R: Rng + ?Sized,
    F: FnMut(f64, &mut R) -> bool,
{
    if !(lambda > 0.0 && horizon > 0.0) {
        return;
    }
    let gaps = Exp::new(lambda).expect("positive rate");
    let mut t = 0.0;
    loop {
        let next = t + gaps.sample(rng);
        if next >= horizon {
            return;
        }
        // A zero gap would break strict ordering; astronomically rare.
        if next <= t {
            continue;
        }
        t = next;
        if !visit(t, rng) {
            return;
        }
    }
}

/// Piecewise-constant intensity: `levels[i]` on `[breaks[i-1], breaks[i])`,
/// with implicit outer breaks `-∞` and `+∞`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseIntensity {
    breaks: Vec<f64>,
    levels: Vec<f64>,
}

impl PiecewiseIntensity {
    pub fn new(breaks: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != breaks.len() + 1 {
            return Err(Error::invalid(format!(
                "{} breaks need {} levels, got {}",
                breaks.len(),
                breaks.len() + 1,
                levels.len()
            )));
        }
        if breaks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("intensity breaks must be strictly increasing"));
        }
        if let Some(l) = levels.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::invalid(format!("intensity level {l} must be finite and >= 0")));
        }
        Ok(Self { breaks, levels })
    }

    pub fn constant(level: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![level])
    }

    pub fn piece(&self, t: f64) -> usize {
        self.breaks.partition_point(|&b| b <= t)
    }

    pub fn at(&self, t: f64) -> f64 {
        self.levels[self.piece(t)]
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }
}

/// Lewis–Shedler thinning: candidates from a Poisson(`bound`) process, each
/// kept with probability `λ(v)/bound`.
pub fn thinning<R: Rng + ?Sized>(
    intensity: &PiecewiseIntensity,
    bound: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    thinning_limited(intensity, bound, horizon, usize::MAX, rng)
}

/// Thinning that stops once more than `limit` points have been kept.
fn thinning_limited<R: Rng + ?Sized>(
    intensity: &PiecewiseIntensity,
    bound: f64,
    horizon: f64,
    limit: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    for (piece, &value) in intensity.levels().iter().enumerate() {
        if value > bound {
            return Err(Error::IntensityExceedsBound { piece, value, bound });
        }
    }
    let mut kept = Vec::new();
    poisson_stream(bound, horizon, rng, |v, rng| {
        let level = intensity.at(v);
        if level >= bound || rng.random::<f64>() < level / bound {
            kept.push(v);
        }
        kept.len() <= limit
    });
    Ok(kept)
}

fn segment_of(locations: &[f64], u: f64) -> usize {
    locations.partition_point(|&tau| tau <= u)
}

fn check_trajectory(trajectory: &ChangepointSample, rates: &RateConfiguration) -> Result<()> {
    if trajectory.count() + 1 != rates.segments() {
        return Err(Error::invalid(format!(
            "trajectory has {} segments but {} rates",
            trajectory.count() + 1,
            rates.segments()
        )));
    }
    Ok(())
}

fn assemble(
    mut times: Vec<f64>,
    trajectory: &ChangepointSample,
    rates: &RateConfiguration,
    horizon: f64,
    self_prob: impl Fn(f64) -> f64,
) -> Result<UniformGrid> {
    times.sort_by(f64::total_cmp);
    times.dedup();
    let states: Vec<usize> = times
        .iter()
        .map(|&u| segment_of(trajectory.locations(), u))
        .collect();
    let self_probs = states.iter().map(|&s| self_prob(rates.rates()[s])).collect();
    UniformGrid::with_states(times, states, self_probs, horizon)
}

/// Grid for the collapsed sampler: thinned Poisson times with intensity
/// `k·q_{X(t)}` under the current trajectory, united with its changepoints.
///
/// The Poisson part is redrawn up to [`GRID_RETRIES`] times while the grid
/// exceeds `cap`; after that the build fails with [`Error::GridCapExceeded`].
pub fn build_grid<R: Rng + ?Sized>(
    trajectory: &ChangepointSample,
    rates: &RateConfiguration,
    resolution: f64,
    horizon: f64,
    cap: usize,
    rng: &mut R,
) -> Result<UniformGrid> {
    check_trajectory(trajectory, rates)?;
    if resolution.is_nan() || resolution <= 1.0 {
        return Err(Error::invalid(format!("resolution must be > 1, got {resolution}")));
    }
    let levels: Vec<f64> = rates.rates().iter().map(|q| resolution * q).collect();
    let intensity = PiecewiseIntensity::new(trajectory.locations().to_vec(), levels)?;
    let bound = resolution * rates.max_rate();
    let mut count = 0;
    for _ in 0..=GRID_RETRIES {
        let mut times = thinning_limited(&intensity, bound, horizon, cap, rng)?;
        times.extend_from_slice(trajectory.locations());
        times.sort_by(f64::total_cmp);
        times.dedup();
        count = times.len();
        if count <= cap {
            // λ(u) = k·q_s, so every self-probability is 1 − 1/k.
            return assemble(times, trajectory, rates, horizon, |_| 1.0 - 1.0 / resolution);
        }
    }
    Err(Error::GridCapExceeded {
        count,
        cap,
        rates: rates.rates().to_vec(),
    })
}

/// Grid for the constant-rate sampler: a homogeneous Poisson process with
/// `λ = k·max q`, self-probabilities `1 − q_s/λ`, no changepoint carry-over.
pub fn build_constant_grid<R: Rng + ?Sized>(
    trajectory: &ChangepointSample,
    rates: &RateConfiguration,
    resolution: f64,
    horizon: f64,
    cap: usize,
    rng: &mut R,
) -> Result<UniformGrid> {
    check_trajectory(trajectory, rates)?;
    if resolution.is_nan() || resolution <= 1.0 {
        return Err(Error::invalid(format!("resolution must be > 1, got {resolution}")));
    }
    let lambda = resolution * rates.max_rate();
    let mut count = 0;
    for _ in 0..=GRID_RETRIES {
        let mut times = Vec::new();
        poisson_stream(lambda, horizon, rng, |t, _| {
            times.push(t);
            times.len() <= cap
        });
        count = times.len();
        if count <= cap {
            return assemble(times, trajectory, rates, horizon, |q| 1.0 - q / lambda);
        }
    }
    Err(Error::GridCapExceeded {
        count,
        cap,
        rates: rates.rates().to_vec(),
    })
}
