// SPDX-License-Identifier: MIT OR Apache-2.0

//! Collapsed Gibbs sampler over changepoint configurations.
//!
//! Each iteration draws a uniform grid from the current trajectory, samples a
//! new changepoint configuration on it by FFBS with knot pruning, and then
//! redraws the jump rates from their Gamma full conditionals. Segment
//! parameters are integrated out during the sweep and drawn from their
//! conjugate full conditionals on every retained iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ffbs::{self, BlockMarginals, ChangepointSample, RunLengthModel};
use crate::io::cusum;
use crate::segment::{ObservationSeries, PrefixCache, SegmentModelSpec};
use crate::uniformization::{self, RateConfiguration, UniformGrid};

/// Which uniformization scheme drives the grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    /// Intensity `k·q_{X(t)}` by thinning, previous changepoints carried over.
    #[default]
    Piecewise,
    /// Homogeneous intensity `k·max q`, no carry-over.
    Constant,
}

/// Starting trajectory and rates.
#[derive(Clone, Debug, PartialEq)]
pub struct Initialization {
    pub trajectory: ChangepointSample,
    pub rates: RateConfiguration,
}

impl Initialization {
    /// `count` equally spaced changepoints, rates `(count+1)/T` and prior
    /// `Gamma(1, T/(count+1))`, whose mean matches the initial rate.
    pub fn equally_spaced(series: &ObservationSeries, count: usize) -> Result<Self> {
        let trajectory = ChangepointSample::equally_spaced(series, count);
        let segments = trajectory.count() + 1;
        let horizon = series.horizon();
        let rate = segments as f64 / horizon;
        let rates = RateConfiguration::new(vec![rate; segments], 1.0, horizon / segments as f64)?;
        Ok(Self { trajectory, rates })
    }

    /// Equally spaced start whose count is the number of corners in the
    /// normalized CUSUM curve. Falls back to no changepoints when the CUSUM is
    /// undefined (zero total).
    pub fn from_cusum(series: &ObservationSeries) -> Result<Self> {
        let count = cusum::corner_count(series.values()).unwrap_or(0);
        Self::equally_spaced(series, count)
    }

    /// Keeps the trajectory but replaces the rate prior.
    pub fn with_prior(mut self, shape: f64, rate: f64) -> Result<Self> {
        self.rates = RateConfiguration::new(self.rates.rates().to_vec(), shape, rate)?;
        Ok(self)
    }
}

#[derive(Clone, Debug)]
pub struct GibbsConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Resolution `k`: grid intensity is `k` times the current jump rate.
    pub resolution: f64,
    /// Knot-pruning repeat count `R`.
    pub prune_repeats: usize,
    /// Cap `L` on the number of uniform times per iteration.
    pub grid_cap: usize,
    pub seed: u64,
    /// Consecutive aborted iterations tolerated before the run stops.
    pub max_consecutive_aborts: usize,
    pub scheme: GridScheme,
    /// Skip the rate update: state `i` keeps the initial rate `q_i`, and
    /// states beyond the initial ones reuse the last initial rate.
    pub fix_rates: bool,
    /// Keep every iteration's grid times in the diagnostics.
    pub record_grids: bool,
    /// `None` means [`Initialization::from_cusum`].
    pub init: Option<Initialization>,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            burn_in: 1000,
            resolution: 10.0,
            prune_repeats: 5,
            grid_cap: 250,
            seed: 0,
            max_consecutive_aborts: 50,
            scheme: GridScheme::Piecewise,
            fix_rates: false,
            record_grids: false,
            init: None,
        }
    }
}

impl GibbsConfig {
    /// 6000 iterations, 3000 retained, `k = 15` (normal simulation study).
    pub fn normal_study() -> Self {
        Self {
            iterations: 6000,
            burn_in: 3000,
            resolution: 15.0,
            ..Self::default()
        }
    }

    /// 1500 iterations, 500 retained, `k = 10` (sparse exponential study).
    pub fn sparse_study() -> Self {
        Self {
            iterations: 1500,
            burn_in: 1000,
            resolution: 10.0,
            ..Self::default()
        }
    }

    /// 5000 iterations, 3000 retained, `k = 15` (count data).
    pub fn count_study() -> Self {
        Self {
            iterations: 5000,
            burn_in: 2000,
            resolution: 15.0,
            ..Self::default()
        }
    }

    /// 2000 iterations, 1000 retained, `k = 12` (long piecewise-constant signal).
    pub fn long_signal_study() -> Self {
        Self {
            iterations: 2000,
            burn_in: 1000,
            resolution: 12.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::invalid(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if !(self.resolution > 1.0 && self.resolution.is_finite()) {
            return Err(Error::invalid(format!("resolution must be > 1, got {}", self.resolution)));
        }
        if self.prune_repeats == 0 {
            return Err(Error::invalid("prune repeats must be positive"));
        }
        if self.grid_cap == 0 {
            return Err(Error::invalid("grid cap must be positive"));
        }
        Ok(())
    }
}

/// A retained draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchivedDraw {
    pub iteration: usize,
    pub sample: ChangepointSample,
    pub rates: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Per-iteration bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationDiagnostics {
    pub iteration: usize,
    /// Number of uniform times `K`, or the rejected count when aborted.
    pub grid_size: usize,
    pub aborted: bool,
    pub count: usize,
    /// `None` when the iteration was aborted.
    pub log_evidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PosteriorArchive {
    pub n: usize,
    pub horizon: f64,
    pub draws: Vec<ArchivedDraw>,
    pub diagnostics: Vec<IterationDiagnostics>,
    /// Set when the run stopped early.
    pub termination: Option<String>,
}

impl PosteriorArchive {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn counts(&self) -> impl Iterator<Item = usize> + '_ {
        self.draws.iter().map(|d| d.sample.count())
    }

    /// Concatenates independent chains over the same series.
    pub fn merge(archives: impl IntoIterator<Item = PosteriorArchive>) -> Result<Self> {
        let mut out: Option<PosteriorArchive> = None;
        for a in archives {
            match out.as_mut() {
                None => out = Some(a),
                Some(acc) => {
                    if acc.n != a.n || acc.horizon != a.horizon {
                        return Err(Error::invalid("cannot merge archives of different series"));
                    }
                    acc.draws.extend(a.draws);
                    acc.diagnostics.extend(a.diagnostics);
                    if acc.termination.is_none() {
                        acc.termination = a.termination;
                    }
                }
            }
        }
        out.ok_or(Error::EmptyArchive)
    }
}

/// Progress report passed to the callback after every iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    pub count: usize,
    pub grid_size: usize,
}

/// Full conditional of the rates: `Gamma(a+1, b + (τ_i − τ_{i−1}))` for the
/// closed segments and `Gamma(a, b + (T − τ_m))` for the open last one.
pub fn sample_rates<R: Rng + ?Sized>(
    trajectory: &ChangepointSample,
    shape: f64,
    rate: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<RateConfiguration> {
    let mut rates = Vec::with_capacity(trajectory.count() + 1);
    let mut prev = 0.0;
    for &tau in trajectory.locations() {
        rates.push(draw_gamma(shape + 1.0, rate + (tau - prev), rng)?);
        prev = tau;
    }
    rates.push(draw_gamma(shape, rate + (horizon - prev), rng)?);
    RateConfiguration::new(rates, shape, rate)
}

fn draw_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::invalid(format!("gamma({shape}, {rate}): {e}")))?;
    // Guard against a zero draw, which the rate configuration rejects.
    Ok(g.sample(rng).max(f64::MIN_POSITIVE))
}

fn fixed_rates(known: &[f64], segments: usize, shape: f64, rate: f64) -> Result<RateConfiguration> {
    let last = *known.last().expect("at least one rate");
    let rates = (0..segments).map(|i| known.get(i).copied().unwrap_or(last)).collect();
    RateConfiguration::new(rates, shape, rate)
}

/// Exact draws of the changepoint configuration on a fixed grid: repeated
/// backward sampling from one forward pass. Each draw lists 1-based grid
/// indices.
pub fn fixed_grid_draws(
    series: &ObservationSeries,
    spec: SegmentModelSpec,
    grid: &UniformGrid,
    draws: usize,
    prune_repeats: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if prune_repeats == 0 {
        return Err(Error::invalid("prune repeats must be positive"));
    }
    let cache = PrefixCache::build(series, spec)?;
    let model = RunLengthModel::from_grid(grid)?;
    let marginals = BlockMarginals::new(&cache, series, grid);
    let trellis = ffbs::forward_filter(&model, |i, j| marginals.log_marginal(i, j))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..draws)
        .map(|_| ffbs::backward_sample_pruned(&trellis, &model, prune_repeats, &mut rng))
        .collect())
}

/// Piecewise-intensity collapsed sampler.
pub fn gibbs_run(
    series: &ObservationSeries,
    spec: SegmentModelSpec,
    config: &GibbsConfig,
) -> Result<PosteriorArchive> {
    let config = GibbsConfig {
        scheme: GridScheme::Piecewise,
        ..config.clone()
    };
    run_with_progress(series, spec, &config, |_| {})
}

/// Baseline sampler on a homogeneous grid without changepoint carry-over.
pub fn constant_rate_run(
    series: &ObservationSeries,
    spec: SegmentModelSpec,
    config: &GibbsConfig,
) -> Result<PosteriorArchive> {
    let config = GibbsConfig {
        scheme: GridScheme::Constant,
        ..config.clone()
    };
    run_with_progress(series, spec, &config, |_| {})
}

/// Runs the sampler with the scheme chosen in `config`, reporting progress.
pub fn run_with_progress<F>(
    series: &ObservationSeries,
    spec: SegmentModelSpec,
    config: &GibbsConfig,
    mut progress: F,
) -> Result<PosteriorArchive>
where
    F: FnMut(&Progress),
{
    config.validate()?;
    let cache = PrefixCache::build(series, spec)?;
    let horizon = series.horizon();
    let init = match &config.init {
        Some(init) => init.clone(),
        None => Initialization::from_cusum(series)?,
    };
    if init.trajectory.count() + 1 != init.rates.segments() {
        return Err(Error::invalid("initial trajectory and rates disagree on the segment count"));
    }
    let (shape, prior_rate) = (init.rates.prior_shape(), init.rates.prior_rate());
    let known_rates = init.rates.rates().to_vec();
    let mut trajectory = init.trajectory;
    let mut rates = init.rates;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut archive = PosteriorArchive {
        n: series.len(),
        horizon,
        draws: Vec::with_capacity(config.iterations - config.burn_in),
        diagnostics: Vec::with_capacity(config.iterations),
        termination: None,
    };
    let mut consecutive_aborts = 0;

    for iteration in 0..config.iterations {
        let step = sweep(series, &cache, config, &trajectory, &rates, &mut rng);
        let mut diag = IterationDiagnostics {
            iteration,
            grid_size: 0,
            aborted: false,
            count: trajectory.count(),
            log_evidence: None,
            grid_times: None,
        };
        match step {
            Ok((grid, sample, log_evidence)) => {
                consecutive_aborts = 0;
                diag.grid_size = grid.len();
                diag.log_evidence = Some(log_evidence);
                diag.count = sample.count();
                if config.record_grids {
                    diag.grid_times = Some(grid.times().to_vec());
                }
                trajectory = sample;
            }
            Err(Error::GridCapExceeded { count, .. }) => {
                diag.grid_size = count;
                diag.aborted = true;
                consecutive_aborts += 1;
            }
            Err(Error::FilterUnderflow { .. }) => {
                diag.aborted = true;
                consecutive_aborts += 1;
            }
            Err(e) => return Err(e),
        }

        if config.fix_rates {
            rates = fixed_rates(&known_rates, trajectory.count() + 1, shape, prior_rate)?;
        } else {
            rates = sample_rates(&trajectory, shape, prior_rate, horizon, &mut rng)?;
        }

        progress(&Progress {
            iteration,
            count: trajectory.count(),
            grid_size: diag.grid_size,
        });
        let aborted = diag.aborted;
        archive.diagnostics.push(diag);

        if iteration >= config.burn_in {
            let theta = trajectory
                .segments(series.len())
                .into_iter()
                .map(|(s, t)| cache.sample_theta(s, t, &mut rng))
                .collect();
            archive.draws.push(ArchivedDraw {
                iteration,
                sample: trajectory.clone(),
                rates: rates.rates().to_vec(),
                theta,
            });
        }

        if aborted && consecutive_aborts > config.max_consecutive_aborts {
            archive.termination = Some(format!(
                "stopped after {consecutive_aborts} consecutive aborted iterations at iteration {iteration} \
                 (grid cap {}, rates {:?})",
                config.grid_cap,
                rates.rates()
            ));
            break;
        }
    }
    Ok(archive)
}

/// One grid + FFBS step. Returns the grid, the new trajectory and the grid
/// model's log evidence.
fn sweep<R: Rng + ?Sized>(
    series: &ObservationSeries,
    cache: &PrefixCache,
    config: &GibbsConfig,
    trajectory: &ChangepointSample,
    rates: &RateConfiguration,
    rng: &mut R,
) -> Result<(UniformGrid, ChangepointSample, f64)> {
    let horizon = series.horizon();
    let grid = match config.scheme {
        GridScheme::Piecewise => uniformization::build_grid(
            trajectory,
            rates,
            config.resolution,
            horizon,
            config.grid_cap,
            rng,
        )?,
        GridScheme::Constant => uniformization::build_constant_grid(
            trajectory,
            rates,
            config.resolution,
            horizon,
            config.grid_cap,
            rng,
        )?,
    };
    let model = RunLengthModel::from_grid(&grid)?;
    let marginals = BlockMarginals::new(cache, series, &grid);
    let trellis = ffbs::forward_filter(&model, |i, j| marginals.log_marginal(i, j))?;
    let indices = ffbs::backward_sample_pruned(&trellis, &model, config.prune_repeats, rng);
    let sample = ChangepointSample::from_grid_indices(&grid, series, &indices);
    Ok((grid, sample, trellis.log_evidence()))
}
