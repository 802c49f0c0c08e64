// SPDX-License-Identifier: MIT OR Apache-2.0

//! Observation series and conjugate segment models.
//!
//! A segment covering observations `s+1..=t` (1-based, half-open `(s, t]` in
//! 0-based prefix coordinates) has a closed-form marginal likelihood once the
//! segment parameter is integrated against its conjugate prior:
//!
//! ```text
//! normal, known σ²:   ∫ Π N(y_i | μ, σ²) N(μ | m, τ²) dμ
//! exponential:        ∫ Π λ e^{-λ y_i}  Gamma(λ | α, β) dλ
//! poisson:            ∫ Π Pois(y_i | λ) Gamma(λ | α, β) dλ
//! ```
//!
//! Every one of them depends on the data only through `r = t - s`, `Σy`, and
//! either `Σy²` or `Σ log y!`, so a [`PrefixCache`] evaluates any segment in O(1).

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ln_factorial, ln_gamma, LN_2PI};

/// Values with auxiliary event times `0 < t_1 < … < t_n ≤ T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSeries {
    values: Vec<f64>,
    event_times: Vec<f64>,
    horizon: f64,
}

impl ObservationSeries {
    /// Regular placement `t_j = j·T/n`.
    pub fn regular(values: Vec<f64>, horizon: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("observation series is empty"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        let n = values.len() as f64;
        let event_times = (1..=values.len())
            .map(|j| j as f64 * horizon / n)
            .collect::<Vec<_>>();
        Self::with_times(values, event_times, horizon)
    }

    /// Regular placement on `[0, n]`, so `t_j = j`.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len() as f64;
        Self::regular(values, n)
    }

    pub fn with_times(values: Vec<f64>, event_times: Vec<f64>, horizon: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("observation series is empty"));
        }
        if values.len() != event_times.len() {
            return Err(Error::invalid(format!(
                "{} values but {} event times",
                values.len(),
                event_times.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("value at index {} is not finite", i + 1)));
        }
        let mut prev = 0.0;
        for (i, &t) in event_times.iter().enumerate() {
            if !(t.is_finite() && t > prev && t <= horizon) {
                return Err(Error::invalid(format!(
                    "event time {t} at index {} must be strictly increasing within (0, {horizon}]",
                    i + 1
                )));
            }
            prev = t;
        }
        Ok(Self {
            values,
            event_times,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn event_times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of observations with `t_j ≤ u`.
    pub fn count_upto(&self, u: f64) -> usize {
        self.event_times.partition_point(|&t| t <= u)
    }

    /// Serial number (1-based) of the first observation strictly after `tau`.
    pub fn serial_index(&self, tau: f64) -> usize {
        self.count_upto(tau) + 1
    }

    /// `Δt_k = t_k − t_{k−1}` with `t_0 = 0`, for 1-based `k`.
    pub fn delta_t(&self, k: usize) -> f64 {
        let prev = if k >= 2 { self.event_times[k - 2] } else { 0.0 };
        self.event_times[k - 1] - prev
    }
}

/// Conjugate observation family and its hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum SegmentModelSpec {
    /// `y ~ N(μ, σ²)` with `μ ~ N(m, τ²)`.
    #[serde(rename = "normal")]
    Normal {
        prior_mean: f64,
        prior_var: f64,
        noise_var: f64,
    },
    /// `y ~ Exp(λ)` with `λ ~ Gamma(α, β)` (rate parameterization).
    Exponential { shape: f64, rate: f64 },
    /// `y ~ Poisson(λ)` with `λ ~ Gamma(α, β)`.
    Poisson { shape: f64, rate: f64 },
}

impl SegmentModelSpec {
    pub fn family(&self) -> &'static str {
        match self {
            SegmentModelSpec::Normal { .. } => "normal",
            SegmentModelSpec::Exponential { .. } => "exponential",
            SegmentModelSpec::Poisson { .. } => "poisson",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "{} hyperparameter {name} must be finite and > 0, got {v}",
                    self.family()
                )))
            }
        };
        match *self {
            SegmentModelSpec::Normal {
                prior_mean,
                prior_var,
                noise_var,
            } => {
                if !prior_mean.is_finite() {
                    return Err(Error::invalid("normal prior mean must be finite"));
                }
                positive("prior_var", prior_var)?;
                positive("noise_var", noise_var)
            }
            SegmentModelSpec::Exponential { shape, rate }
            | SegmentModelSpec::Poisson { shape, rate } => {
                positive("shape", shape)?;
                positive("rate", rate)
            }
        }
    }

    fn check_value(&self, index: usize, y: f64) -> Result<()> {
        let ok = match self {
            SegmentModelSpec::Normal { .. } => y.is_finite(),
            SegmentModelSpec::Exponential { .. } => y.is_finite() && y > 0.0,
            SegmentModelSpec::Poisson { .. } => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                family: self.family(),
                index,
                value: y,
            })
        }
    }

    /// Per-observation emission density `log p(y | θ)`.
    pub fn log_density(&self, theta: f64, y: f64) -> f64 {
        match *self {
            SegmentModelSpec::Normal { noise_var, .. } => {
                let d = y - theta;
                -0.5 * (LN_2PI + noise_var.ln()) - d * d / (2.0 * noise_var)
            }
            SegmentModelSpec::Exponential { .. } => {
                if theta <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    theta.ln() - theta * y
                }
            }
            SegmentModelSpec::Poisson { .. } => {
                if theta <= 0.0 {
                    if y == 0.0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    y * theta.ln() - theta - ln_factorial(y)
                }
            }
        }
    }

    /// `log p(θ)` under the conjugate prior.
    pub fn log_prior(&self, theta: f64) -> f64 {
        match *self {
            SegmentModelSpec::Normal {
                prior_mean,
                prior_var,
                ..
            } => {
                let d = theta - prior_mean;
                -0.5 * (LN_2PI + prior_var.ln()) - d * d / (2.0 * prior_var)
            }
            SegmentModelSpec::Exponential { shape, rate }
            | SegmentModelSpec::Poisson { shape, rate } => {
                if theta <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * theta.ln() - rate * theta
                }
            }
        }
    }
}

/// Running sums with a leading zero, so `cache[j] − cache[i]` sums
/// observations `i+1..=j`.
#[derive(Clone, Debug)]
pub struct PrefixCache {
    spec: SegmentModelSpec,
    sum: Vec<f64>,
    /// Σy² for the normal family; empty otherwise.
    sum_sq: Vec<f64>,
    /// Σ log(y!) for the poisson family; empty otherwise.
    sum_log_fact: Vec<f64>,
}

impl PrefixCache {
    pub fn build(series: &ObservationSeries, spec: SegmentModelSpec) -> Result<Self> {
        spec.validate()?;
        let values = series.values();
        if values.is_empty() {
            return Err(Error::invalid("observation series is empty"));
        }
        for (i, &y) in values.iter().enumerate() {
            spec.check_value(i + 1, y)?;
        }
        let running = |f: &dyn Fn(f64) -> f64| {
            let mut out = Vec::with_capacity(values.len() + 1);
            let mut acc = 0.0;
            out.push(acc);
            for &y in values {
                acc += f(y);
                out.push(acc);
            }
            out
        };
        let sum = running(&|y| y);
        let sum_sq = match spec {
            SegmentModelSpec::Normal { .. } => running(&|y| y * y),
            _ => Vec::new(),
        };
        let sum_log_fact = match spec {
            SegmentModelSpec::Poisson { .. } => running(&ln_factorial),
            _ => Vec::new(),
        };
        Ok(Self {
            spec,
            sum,
            sum_sq,
            sum_log_fact,
        })
    }

    pub fn spec(&self) -> &SegmentModelSpec {
        &self.spec
    }

    /// Number of observations `n`.
    pub fn len(&self) -> usize {
        self.sum.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sums(&self) -> &[f64] {
        &self.sum
    }

    pub fn sums_sq(&self) -> &[f64] {
        &self.sum_sq
    }

    pub fn sums_log_factorial(&self) -> &[f64] {
        &self.sum_log_fact
    }

    /// `Σ y_i` over observations `s+1..=t`.
    #[inline]
    pub fn segment_sum(&self, s: usize, t: usize) -> f64 {
        self.sum[t] - self.sum[s]
    }

    /// Log marginal likelihood of observations `s+1..=t`. An empty segment
    /// (`s == t`) has marginal 1.
    pub fn log_marginal(&self, s: usize, t: usize) -> f64 {
        debug_assert!(s <= t && t <= self.len(), "segment ({s}, {t}] out of range");
        if s == t {
            return 0.0;
        }
        let r = (t - s) as f64;
        let sy = self.sum[t] - self.sum[s];
        match self.spec {
            SegmentModelSpec::Normal {
                prior_mean: m,
                prior_var: tau2,
                noise_var: sigma2,
            } => {
                let syy = self.sum_sq[t] - self.sum_sq[s];
                let denom = r * tau2 + sigma2;
                -0.5 * r * (LN_2PI + sigma2.ln()) + 0.5 * (sigma2.ln() - denom.ln())
                    - syy / (2.0 * sigma2)
                    + (tau2 * sy * sy / sigma2 + 2.0 * sy * m - r * m * m) / (2.0 * denom)
            }
            SegmentModelSpec::Exponential { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + ln_gamma(r + shape)
                    - (r + shape) * (sy + rate).ln()
            }
            SegmentModelSpec::Poisson { shape, rate } => {
                let slf = self.sum_log_fact[t] - self.sum_log_fact[s];
                shape * rate.ln() - ln_gamma(shape) + ln_gamma(sy + shape)
                    - (sy + shape) * (r + rate).ln()
                    - slf
            }
        }
    }

    /// Parameters of the conjugate full conditional of θ for segment `s+1..=t`.
    pub fn posterior(&self, s: usize, t: usize) -> ThetaPosterior {
        let r = (t - s) as f64;
        let sy = self.segment_sum(s, t);
        match self.spec {
            SegmentModelSpec::Normal {
                prior_mean,
                prior_var,
                noise_var,
            } => {
                let var = 1.0 / (r / noise_var + 1.0 / prior_var);
                ThetaPosterior::Normal {
                    mean: var * (sy / noise_var + prior_mean / prior_var),
                    var,
                }
            }
            SegmentModelSpec::Exponential { shape, rate } => ThetaPosterior::Gamma {
                shape: shape + r,
                rate: rate + sy,
            },
            SegmentModelSpec::Poisson { shape, rate } => ThetaPosterior::Gamma {
                shape: shape + sy,
                rate: rate + r,
            },
        }
    }

    /// Draws θ for the nonempty segment `s+1..=t` from its full conditional.
    pub fn sample_theta<R: Rng + ?Sized>(&self, s: usize, t: usize, rng: &mut R) -> f64 {
        assert!(s < t, "sample_theta needs a nonempty segment, got ({s}, {t}]");
        self.posterior(s, t).sample(rng)
    }
}

/// Closed-form full conditional of a segment parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaPosterior {
    Normal { mean: f64, var: f64 },
    /// Shape/rate parameterization.
    Gamma { shape: f64, rate: f64 },
}

impl ThetaPosterior {
    pub fn mean(&self) -> f64 {
        match *self {
            ThetaPosterior::Normal { mean, .. } => mean,
            ThetaPosterior::Gamma { shape, rate } => shape / rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ThetaPosterior::Normal { var, .. } => var,
            ThetaPosterior::Gamma { shape, rate } => shape / (rate * rate),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ThetaPosterior::Normal { mean, var } => Normal::new(mean, var.sqrt())
                .expect("posterior variance is positive")
                .sample(rng),
            ThetaPosterior::Gamma { shape, rate } => Gamma::new(shape, 1.0 / rate)
                .expect("posterior gamma parameters are positive")
                .sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal01() -> SegmentModelSpec {
        SegmentModelSpec::Normal {
            prior_mean: 0.0,
            prior_var: 1.0,
            noise_var: 1.0,
        }
    }

    #[test]
    fn running_sum_has_leading_zero() {
        let s = ObservationSeries::from_values(vec![1.0, 2.0, 3.0]).unwrap();
        let c = PrefixCache::build(&s, normal01()).unwrap();
        assert_eq!(c.sums(), &[0.0, 1.0, 3.0, 6.0]);
        assert_eq!(c.segment_sum(2, 2), 0.0);
    }

    #[test]
    fn prefix_differences_match_loop_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let values: Vec<f64> = (0..50).map(|_| rng.random_range(0..20) as f64).collect();
        let s = ObservationSeries::from_values(values.clone()).unwrap();
        let c = PrefixCache::build(
            &s,
            SegmentModelSpec::Poisson {
                shape: 1.0,
                rate: 1.0,
            },
        )
        .unwrap();
        for i in 0..=50 {
            for j in i..=50 {
                let direct: f64 = values[i..j].iter().sum();
                let lf: f64 = values[i..j].iter().map(|&y| ln_factorial(y)).sum();
                assert!((c.segment_sum(i, j) - direct).abs() < 1e-9);
                let cached = c.sums_log_factorial()[j] - c.sums_log_factorial()[i];
                assert!((cached - lf).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_observation_marginals() {
        let s = ObservationSeries::from_values(vec![0.0]).unwrap();
        let c = PrefixCache::build(&s, normal01()).unwrap();
        let expected = (1.0 / (4.0 * std::f64::consts::PI).sqrt()).ln();
        assert!((c.log_marginal(0, 1) - expected).abs() < 1e-12);
        assert!((c.log_marginal(0, 1) + 1.26551).abs() < 1e-5);

        let s = ObservationSeries::from_values(vec![1.0]).unwrap();
        let c = PrefixCache::build(
            &s,
            SegmentModelSpec::Exponential {
                shape: 1.0,
                rate: 1.0,
            },
        )
        .unwrap();
        assert!((c.log_marginal(0, 1) - 0.25f64.ln()).abs() < 1e-12);

        let s = ObservationSeries::from_values(vec![0.0]).unwrap();
        let c = PrefixCache::build(
            &s,
            SegmentModelSpec::Poisson {
                shape: 1.0,
                rate: 1.0,
            },
        )
        .unwrap();
        assert!((c.log_marginal(0, 1) - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_segment_is_log_one() {
        let s = ObservationSeries::from_values(vec![0.3, 1.2]).unwrap();
        let c = PrefixCache::build(&s, normal01()).unwrap();
        assert_eq!(c.log_marginal(1, 1), 0.0);
    }

    #[test]
    fn domain_violations_report_index() {
        let s = ObservationSeries::from_values(vec![1.0, -2.0, 3.0]).unwrap();
        let err = PrefixCache::build(
            &s,
            SegmentModelSpec::Poisson {
                shape: 1.0,
                rate: 1.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain { index: 2, .. }), "{err}");

        let s = ObservationSeries::from_values(vec![1.0, 2.5]).unwrap();
        let err = PrefixCache::build(
            &s,
            SegmentModelSpec::Poisson {
                shape: 1.0,
                rate: 1.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain { index: 2, .. }));

        let s = ObservationSeries::from_values(vec![0.0]).unwrap();
        let err = PrefixCache::build(
            &s,
            SegmentModelSpec::Exponential {
                shape: 1.0,
                rate: 1.0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain { index: 1, .. }));
    }

    #[test]
    fn bad_hyperparameters_rejected() {
        let s = ObservationSeries::from_values(vec![1.0]).unwrap();
        let spec = SegmentModelSpec::Normal {
            prior_mean: 0.0,
            prior_var: 0.0,
            noise_var: 1.0,
        };
        assert!(PrefixCache::build(&s, spec).is_err());
    }

    #[test]
    fn adjacent_segments_factorize() {
        // Product of the two conditional predictive chains equals the sum of logs.
        let s = ObservationSeries::from_values(vec![0.2, -0.4, 1.1, 2.5, 2.9]).unwrap();
        let c = PrefixCache::build(&s, normal01()).unwrap();
        let joint = c.log_marginal(0, 2) + c.log_marginal(2, 5);
        let stepwise = (c.log_marginal(0, 1) + (c.log_marginal(0, 2) - c.log_marginal(0, 1)))
            + (c.log_marginal(2, 3) + (c.log_marginal(2, 5) - c.log_marginal(2, 3)));
        assert!((joint - stepwise).abs() < 1e-12);
    }

    #[test]
    fn flat_prior_posterior_mean_is_sample_mean() {
        let values: Vec<f64> = (0..200).map(|i| (i % 7) as f64 * 0.5 - 1.0).collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let s = ObservationSeries::from_values(values).unwrap();
        let spec = SegmentModelSpec::Normal {
            prior_mean: 5.0,
            prior_var: 1e12,
            noise_var: 1.0,
        };
        let c = PrefixCache::build(&s, spec).unwrap();
        assert!((c.posterior(0, 200).mean() - mean).abs() < 1e-8);
    }

    #[test]
    fn poisson_single_zero_posterior_is_gamma_1_2() {
        let s = ObservationSeries::from_values(vec![0.0]).unwrap();
        let c = PrefixCache::build(
            &s,
            SegmentModelSpec::Poisson {
                shape: 1.0,
                rate: 1.0,
            },
        )
        .unwrap();
        assert_eq!(
            c.posterior(0, 1),
            ThetaPosterior::Gamma {
                shape: 1.0,
                rate: 2.0
            }
        );
    }

    #[test]
    fn theta_moments_converge() {
        let s = ObservationSeries::from_values(vec![2.0, 3.0, 1.0, 4.0]).unwrap();
        let c = PrefixCache::build(
            &s,
            SegmentModelSpec::Exponential {
                shape: 2.0,
                rate: 1.0,
            },
        )
        .unwrap();
        let post = c.posterior(0, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40_000;
        let draws: Vec<f64> = (0..n).map(|_| c.sample_theta(0, 4, &mut rng)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let se = (post.variance() / n as f64).sqrt();
        assert!((m - post.mean()).abs() < 4.0 * se, "{m} vs {}", post.mean());
    }

    #[test]
    fn serial_index_is_first_observation_after_tau() {
        let s = ObservationSeries::from_values(vec![0.0; 5]).unwrap();
        assert_eq!(s.serial_index(0.3), 1);
        assert_eq!(s.serial_index(2.0), 3);
        assert_eq!(s.serial_index(2.5), 3);
        assert_eq!(s.count_upto(5.0), 5);
        assert_eq!(s.delta_t(1), 1.0);
    }

    #[test]
    fn series_rejects_unsorted_times() {
        assert!(ObservationSeries::with_times(vec![1.0, 2.0], vec![1.0, 1.0], 2.0).is_err());
        assert!(ObservationSeries::with_times(vec![1.0, 2.0], vec![1.0, 3.0], 2.0).is_err());
        assert!(ObservationSeries::regular(vec![], 1.0).is_err());
    }
}
