// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bayesian multiple changepoint detection via auxiliary uniformization.
//!
//! Observations are placed at auxiliary event times on `[0, T]` and the
//! changepoint process is a left-to-right continuous-time chain with a jump
//! rate per segment. A collapsed Gibbs sampler alternates
//!
//! 1. drawing a random grid of uniform times (thinned Poisson process with
//!    intensity proportional to the current rates, plus the previous
//!    changepoints),
//! 2. forward filtering / backward sampling the changepoints on that grid
//!    using closed-form conjugate segment marginals,
//! 3. redrawing the rates from their Gamma full conditionals,
//!
//! so the cost per iteration is quadratic in the grid size rather than in
//! the number of observations. MAP locations for the modal changepoint
//! count come from a continuous-time Viterbi decoder.
//!
//! ```no_run
//! use unicp::{gibbs, io::benchmark::{generate_benchmark, Preset}, viterbi};
//!
//! let bench = generate_benchmark(&Preset::Normal1200, 7).unwrap();
//! let config = gibbs::GibbsConfig { seed: 7, ..gibbs::GibbsConfig::normal_study() };
//! let archive = gibbs::gibbs_run(&bench.series, bench.spec, &config).unwrap();
//! let map = viterbi::map_segmentation(&bench.series, &bench.spec, &archive).unwrap();
//! println!("{:?}", map.sample.serial_indices());
//! ```

#![forbid(unsafe_code)]

pub mod error;
pub mod ffbs;
pub mod gibbs;
pub mod io;
pub mod math;
pub mod segment;
pub mod uniformization;
pub mod viterbi;

pub use error::{Error, Result};
pub use ffbs::{ChangepointSample, FilterTrellis, RunLengthModel};
pub use gibbs::{GibbsConfig, PosteriorArchive};
pub use segment::{ObservationSeries, PrefixCache, SegmentModelSpec};
pub use uniformization::{RateConfiguration, UniformGrid};
