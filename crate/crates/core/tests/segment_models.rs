// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma, Normal};

use common::{ks_test, quadrature_log_marginal};
use unicp::segment::{ObservationSeries, PrefixCache, SegmentModelSpec, ThetaPosterior};

fn random_values(spec: &SegmentModelSpec, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len)
        .map(|_| match spec {
            SegmentModelSpec::Normal { .. } => rng.random_range(-3.0..3.0),
            SegmentModelSpec::Exponential { .. } => rng.random_range(0.01..4.0),
            SegmentModelSpec::Poisson { .. } => rng.random_range(0..8) as f64,
        })
        .collect()
}

fn specs() -> Vec<SegmentModelSpec> {
    vec![
        SegmentModelSpec::Normal {
            prior_mean: 0.5,
            prior_var: 2.0,
            noise_var: 0.8,
        },
        SegmentModelSpec::Exponential { shape: 2.0, rate: 1.5 },
        SegmentModelSpec::Poisson { shape: 1.5, rate: 0.7 },
    ]
}

#[test]
fn marginals_match_quadrature_on_twenty_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for spec in specs() {
        let ys = random_values(&spec, 20, &mut rng);
        let series = ObservationSeries::from_values(ys.clone()).unwrap();
        let cache = PrefixCache::build(&series, spec).unwrap();
        let exact = cache.log_marginal(0, 20);
        let quad = quadrature_log_marginal(&spec, &ys);
        assert!(
            ((exact - quad) / quad).abs() < 1e-6,
            "{}: closed form {exact} vs quadrature {quad}",
            spec.family()
        );
    }
}

#[test]
fn interior_segments_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for spec in specs() {
        let ys = random_values(&spec, 60, &mut rng);
        let series = ObservationSeries::from_values(ys.clone()).unwrap();
        let cache = PrefixCache::build(&series, spec).unwrap();
        for &(s, t) in &[(5, 9), (17, 50), (0, 1), (59, 60)] {
            let quad = quadrature_log_marginal(&spec, &ys[s..t]);
            let exact = cache.log_marginal(s, t);
            assert!(((exact - quad) / quad).abs() < 1e-6, "({s},{t}): {exact} vs {quad}");
        }
    }
}

#[test]
fn adjacent_segments_factorize() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for spec in specs() {
        let ys = random_values(&spec, 30, &mut rng);
        let series = ObservationSeries::from_values(ys.clone()).unwrap();
        let cache = PrefixCache::build(&series, spec).unwrap();
        let whole_left = quadrature_log_marginal(&spec, &ys[..12]);
        let whole_right = quadrature_log_marginal(&spec, &ys[12..]);
        let joint = cache.log_marginal(0, 12) + cache.log_marginal(12, 30);
        assert!((joint - (whole_left + whole_right)).abs() < 1e-6 * joint.abs());
    }
}

#[test]
fn theta_draws_pass_ks() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for spec in specs() {
        let ys = random_values(&spec, 25, &mut rng);
        let series = ObservationSeries::from_values(ys).unwrap();
        let cache = PrefixCache::build(&series, spec).unwrap();
        let draws: Vec<f64> = (0..100_000).map(|_| cache.sample_theta(3, 21, &mut rng)).collect();
        let p = match cache.posterior(3, 21) {
            ThetaPosterior::Normal { mean, var } => {
                let d = Normal::new(mean, var.sqrt()).unwrap();
                ks_test(&draws, |x| d.cdf(x))
            }
            ThetaPosterior::Gamma { shape, rate } => {
                let d = Gamma::new(shape, rate).unwrap();
                ks_test(&draws, |x| d.cdf(x))
            }
        };
        assert!(p > 0.01, "{}: KS p-value {p}", spec.family());
    }
}

#[test]
fn theta_moments_converge_at_root_n() {
    let spec = SegmentModelSpec::Poisson { shape: 2.0, rate: 1.0 };
    let series = ObservationSeries::from_values(vec![3.0, 1.0, 4.0, 1.0, 5.0]).unwrap();
    let cache = PrefixCache::build(&series, spec).unwrap();
    let post = cache.posterior(0, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for &n in &[1_000usize, 16_000, 256_000] {
        let mean = (0..n).map(|_| cache.sample_theta(0, 5, &mut rng)).sum::<f64>() / n as f64;
        let se = (post.variance() / n as f64).sqrt();
        assert!((mean - post.mean()).abs() < 4.0 * se, "n = {n}");
    }
}

#[test]
fn predictive_mode_observation_keeps_comparison_signs() {
    // Appending the posterior-predictive mode to both candidate segments
    // must not flip which segmentation of the prefix is preferred.
    let spec = SegmentModelSpec::Normal {
        prior_mean: 0.0,
        prior_var: 4.0,
        noise_var: 1.0,
    };
    let base = vec![0.1, -0.2, 0.3, 2.9, 3.1, 3.0];
    let series = ObservationSeries::from_values(base.clone()).unwrap();
    let cache = PrefixCache::build(&series, spec).unwrap();
    let split = cache.log_marginal(0, 3) + cache.log_marginal(3, 6);
    let joint = cache.log_marginal(0, 6);
    let mode = cache.posterior(3, 6).mean();
    let mut longer = base;
    longer.push(mode);
    let series2 = ObservationSeries::from_values(longer).unwrap();
    let cache2 = PrefixCache::build(&series2, spec).unwrap();
    let split2 = cache2.log_marginal(0, 3) + cache2.log_marginal(3, 7);
    let joint2 = cache2.log_marginal(0, 7);
    assert_eq!((split > joint), (split2 > joint2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_segments_match_quadrature(seed in any::<u64>(), family in 0usize..3, len in 1usize..=50) {
        let spec = specs()[family];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys = random_values(&spec, len, &mut rng);
        let series = ObservationSeries::from_values(ys.clone()).unwrap();
        let cache = PrefixCache::build(&series, spec).unwrap();
        let exact = cache.log_marginal(0, len);
        let quad = quadrature_log_marginal(&spec, &ys);
        prop_assert!(((exact - quad) / quad).abs() < 1e-6, "{} vs {}", exact, quad);
    }

    #[test]
    fn prefix_sums_match_direct_sums(ys in prop::collection::vec(0.0f64..100.0, 1..80)) {
        let series = ObservationSeries::from_values(ys.clone()).unwrap();
        let spec = SegmentModelSpec::Exponential { shape: 1.0, rate: 1.0 };
        let cache = PrefixCache::build(&series, spec).unwrap();
        let n = ys.len();
        let direct: f64 = ys.iter().sum();
        prop_assert!((cache.segment_sum(0, n) - direct).abs() <= 1e-9 * direct.max(1.0));
    }
}
