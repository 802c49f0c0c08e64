// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV ingestion.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::segment::ObservationSeries;

/// Column selector: 0-based position or header name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Column {
    Index(usize),
    Name(String),
}

impl FromStr for Column {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.trim().parse::<usize>() {
            Ok(i) => Column::Index(i),
            Err(_) => Column::Name(s.trim().to_string()),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HeaderMode {
    /// Header present iff the first row's value cell is not numeric.
    #[default]
    Auto,
    Present,
    Absent,
}

impl FromStr for HeaderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(HeaderMode::Auto),
            "true" | "yes" | "present" => Ok(HeaderMode::Present),
            "false" | "no" | "absent" => Ok(HeaderMode::Absent),
            other => Err(Error::invalid(format!("unknown header mode {other:?}"))),
        }
    }
}

/// Affine map `y' = (y − offset) / scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rescale {
    pub offset: f64,
    pub scale: f64,
}

impl Rescale {
    pub fn apply(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }
}

#[derive(Clone, Debug)]
pub struct CsvOptions {
    pub value_column: Column,
    /// Event-time column; regular placement when absent.
    pub time_column: Option<Column>,
    pub header: HeaderMode,
    pub rescale: Option<Rescale>,
    /// Horizon `T`; defaults to `n` for regular placement and to the last
    /// event time otherwise.
    pub horizon: Option<f64>,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            value_column: Column::Index(0),
            time_column: None,
            header: HeaderMode::Auto,
            rescale: None,
            horizon: None,
            delimiter: b',',
        }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<ObservationSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, path, options)
}

/// Parses CSV from any reader; `label` is used in error messages.
pub fn ingest_reader<R: Read>(
    reader: R,
    label: impl AsRef<Path>,
    options: &CsvOptions,
) -> Result<ObservationSeries> {
    let label = label.as_ref();
    if let Some(r) = options.rescale {
        if !(r.scale.is_finite() && r.scale != 0.0 && r.offset.is_finite()) {
            return Err(Error::invalid(format!("invalid rescale {r:?}")));
        }
    }
    let parse_err = |line: usize, message: String| Error::Parse {
        path: label.to_path_buf(),
        line,
        message,
    };

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .delimiter(options.delimiter)
        .from_reader(reader);

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(parse_err(0, "empty file".into()));
    }

    let resolve = |col: &Column, header: Option<&csv::StringRecord>| -> Result<usize> {
        match col {
            Column::Index(i) => Ok(*i),
            Column::Name(name) => header
                .and_then(|h| h.iter().position(|c| c == name))
                .ok_or_else(|| parse_err(1, format!("no column named {name:?}"))),
        }
    };

    let has_header = match options.header {
        HeaderMode::Present => true,
        HeaderMode::Absent => false,
        HeaderMode::Auto => match &options.value_column {
            Column::Name(_) => true,
            Column::Index(i) => records[0]
                .1
                .get(*i)
                .is_some_and(|c| c.parse::<f64>().is_err()),
        },
    };
    let header = if has_header {
        Some(records.remove(0).1)
    } else {
        None
    };
    if records.is_empty() {
        return Err(parse_err(1, "file has a header but no data".into()));
    }
    let value_idx = resolve(&options.value_column, header.as_ref())?;
    let time_idx = options
        .time_column
        .as_ref()
        .map(|c| resolve(c, header.as_ref()))
        .transpose()?;

    let cell = |line: usize, rec: &csv::StringRecord, idx: usize, what: &str| -> Result<f64> {
        let raw = rec
            .get(idx)
            .ok_or_else(|| parse_err(line, format!("missing {what} column {idx}")))?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| parse_err(line, format!("non-numeric {what} cell {raw:?}")))
    };

    let mut values = Vec::with_capacity(records.len());
    let mut times = Vec::new();
    for (line, rec) in &records {
        let y = cell(*line, rec, value_idx, "value")?;
        values.push(options.rescale.map_or(y, |r| r.apply(y)));
        if let Some(ti) = time_idx {
            times.push(cell(*line, rec, ti, "time")?);
        }
    }

    match time_idx {
        None => {
            let horizon = options.horizon.unwrap_or(values.len() as f64);
            ObservationSeries::regular(values, horizon)
        }
        Some(_) => {
            let horizon = options
                .horizon
                .unwrap_or_else(|| times.last().copied().unwrap_or(0.0));
            ObservationSeries::with_times(values, times, horizon)
        }
    }
}
