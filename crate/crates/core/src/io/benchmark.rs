// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded synthetic series with known changepoints.

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

use crate::error::{Error, Result};
use crate::gibbs::GibbsConfig;
use crate::segment::{ObservationSeries, SegmentModelSpec};

#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    /// 1200 unit-variance normals, 10 mean shifts.
    Normal1200,
    /// 10000 exponentials, mean shifts at 3000, 5000 and 7000.
    Exponential10000,
    /// Poisson counts with user-supplied segment lengths and means.
    PoissonCustom { lengths: Vec<usize>, means: Vec<f64> },
}

impl Preset {
    pub fn poisson_default() -> Self {
        Preset::PoissonCustom {
            lengths: vec![164, 84, 32],
            means: vec![1.5, 3.5, 1.5],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Normal1200 => "normal-1200",
            Preset::Exponential10000 => "exponential-10000",
            Preset::PoissonCustom { .. } => "poisson-custom",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "normal-1200" => Ok(Preset::Normal1200),
            "exponential-10000" => Ok(Preset::Exponential10000),
            "poisson-custom" => Ok(Preset::poisson_default()),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?} (normal-1200, exponential-10000, poisson-custom)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Benchmark {
    pub series: ObservationSeries,
    /// Serial index of the first observation of each new segment.
    pub truth: Vec<usize>,
    /// Generating mean per segment.
    pub means: Vec<f64>,
    pub spec: SegmentModelSpec,
    pub config: GibbsConfig,
}

const NORMAL_MEANS: [f64; 11] = [0.0, 3.0, 0.0, 2.0, 0.0, -2.0, 0.0, 3.0, 0.0, 3.0, 0.0];
const NORMAL_LENGTHS: [usize; 11] = [100, 60, 100, 100, 120, 120, 100, 100, 100, 100, 200];
const EXP_MEANS: [f64; 4] = [1.0, 2.5, 1.0, 2.0];
const EXP_LENGTHS: [usize; 4] = [2999, 2000, 2000, 3001];

fn truth_from_lengths(lengths: &[usize]) -> Vec<usize> {
    lengths
        .iter()
        .scan(0usize, |acc, &l| {
            *acc += l;
            Some(*acc + 1)
        })
        .take(lengths.len().saturating_sub(1))
        .collect()
}

pub fn generate_benchmark(preset: &Preset, seed: u64) -> Result<Benchmark> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lengths, means, spec, config): (Vec<usize>, Vec<f64>, _, _) = match preset {
        Preset::Normal1200 => (
            NORMAL_LENGTHS.to_vec(),
            NORMAL_MEANS.to_vec(),
            SegmentModelSpec::Normal {
                prior_mean: 1.5,
                prior_var: 1.0,
                noise_var: 1.0,
            },
            GibbsConfig::normal_study(),
        ),
        Preset::Exponential10000 => (
            EXP_LENGTHS.to_vec(),
            EXP_MEANS.to_vec(),
            SegmentModelSpec::Exponential {
                shape: 1.0,
                rate: 1.0,
            },
            GibbsConfig::sparse_study(),
        ),
        Preset::PoissonCustom { lengths, means } => {
            if lengths.is_empty() || lengths.len() != means.len() {
                return Err(Error::invalid(format!(
                    "need one mean per segment, got {} lengths and {} means",
                    lengths.len(),
                    means.len()
                )));
            }
            (
                lengths.clone(),
                means.clone(),
                SegmentModelSpec::Poisson {
                    shape: 1.0,
                    rate: 1.0,
                },
                GibbsConfig::count_study(),
            )
        }
    };
    if lengths.contains(&0) {
        return Err(Error::invalid("segment lengths must be positive"));
    }
    let mut values = Vec::with_capacity(lengths.iter().sum());
    for (&len, &mean) in lengths.iter().zip(&means) {
        match spec {
            SegmentModelSpec::Normal { noise_var, .. } => {
                let d = Normal::new(mean, noise_var.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
                values.extend((0..len).map(|_| d.sample(&mut rng)));
            }
            SegmentModelSpec::Exponential { .. } => {
                let d = Exp::new(1.0 / mean).map_err(|e| Error::invalid(e.to_string()))?;
                values.extend((0..len).map(|_| d.sample(&mut rng)));
            }
            SegmentModelSpec::Poisson { .. } => {
                let d = Poisson::new(mean).map_err(|e| Error::invalid(e.to_string()))?;
                values.extend((0..len).map(|_| d.sample(&mut rng)));
            }
        }
    }
    let config = GibbsConfig { seed, ..config };
    Ok(Benchmark {
        series: ObservationSeries::from_values(values)?,
        truth: truth_from_lengths(&lengths),
        means,
        spec,
        config,
    })
}
