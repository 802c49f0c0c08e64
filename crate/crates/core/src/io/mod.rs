// SPDX-License-Identifier: MIT OR Apache-2.0

//! Ingestion, synthetic benchmarks, diagnostics, summaries and output files.

pub mod benchmark;
pub mod cusum;
pub mod ingest;
pub mod output;
pub mod runspec;
pub mod summary;
