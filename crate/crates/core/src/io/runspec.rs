// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat `key = value` run specifications.
//!
//! ```text
//! # well-log run
//! input = welllog.csv
//! family = normal
//! prior_mean = 0
//! prior_var = 4
//! noise_var = 1
//! offset = 115000
//! scale = 10000
//! seed = 11
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const KEYS: &[&str] = &[
    "input",
    "value_column",
    "time_column",
    "header",
    "horizon",
    "offset",
    "scale",
    "preset",
    "family",
    "prior_mean",
    "prior_var",
    "noise_var",
    "shape",
    "rate",
    "iterations",
    "burn_in",
    "resolution",
    "prune_repeats",
    "grid_cap",
    "seed",
    "chains",
    "scheme",
    "init_changepoints",
    "rate_prior_shape",
    "rate_prior_rate",
    "hpd_mass",
    "bin_width",
    "outdir",
    "write_archive",
];

/// Parsed key/value pairs with the line each came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSpec {
    path: PathBuf,
    entries: BTreeMap<String, (usize, String)>,
}

impl RunSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let bad = |message: String| Error::Parse {
                path: path.clone(),
                line,
                message,
            };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {content:?}")))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(bad(format!("unknown key {key:?}")));
            }
            if entries
                .insert(key.to_string(), (line, value.trim().to_string()))
                .is_some()
            {
                return Err(bad(format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { path, entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// Typed lookup; parse failures carry the line number.
    pub fn parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|e: T::Err| Error::Parse {
                path: self.path.clone(),
                line: *line,
                message: format!("{key}: {e}"),
            }),
        }
    }

    /// Resolves a path value relative to the run-spec's directory.
    pub fn path_value(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| {
            let p = PathBuf::from(v);
            match self.path.parent() {
                Some(dir) if p.is_relative() => dir.join(p),
                _ => p,
            }
        })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
