// SPDX-License-Identifier: MIT OR Apache-2.0

//! Output files: draws, summary, histogram and CUSUM curve.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::PosteriorArchive;
use crate::io::summary::SummaryReport;

pub const SAMPLES_FILE: &str = "samples.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const CUSUM_FILE: &str = "cusum.csv";
pub const ARCHIVE_FILE: &str = "archive.json";

/// One row of `samples.csv`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleRow {
    pub iteration: usize,
    pub count: usize,
    pub serial_indices: Vec<usize>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// `iteration,m,serial_indices` with the indices space-free and
/// comma-joined in a single quoted field.
pub fn write_samples_csv(path: &Path, archive: &PosteriorArchive) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["iteration", "m", "serial_indices"])
        .map_err(|e| csv_err(path, e))?;
    for d in &archive.draws {
        let joined = d
            .sample
            .serial_indices()
            .iter()
            .map(usize::to_string)
            .collect::<Vec<_>>()
            .join(",");
        w.write_record([d.iteration.to_string(), d.sample.count().to_string(), joined])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<SampleRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |i: usize| rec.get(i).ok_or_else(|| bad(format!("missing field {i}")));
        let iteration = field(0)?.parse().map_err(|e| bad(format!("iteration: {e}")))?;
        let count: usize = field(1)?.parse().map_err(|e| bad(format!("m: {e}")))?;
        let raw = field(2)?;
        let serial_indices = if raw.is_empty() {
            Vec::new()
        } else {
            raw.split(',')
                .map(|s| s.parse().map_err(|e| bad(format!("index {s:?}: {e}"))))
                .collect::<Result<Vec<usize>>>()?
        };
        if serial_indices.len() != count {
            return Err(bad(format!("m = {count} but {} indices", serial_indices.len())));
        }
        rows.push(SampleRow {
            iteration,
            count,
            serial_indices,
        });
    }
    Ok(rows)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::io(path, e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn write_histogram_csv(path: &Path, report: &SummaryReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["start", "end", "frequency"])
        .map_err(|e| csv_err(path, e))?;
    for b in &report.histogram {
        w.serialize((b.start, b.end, b.frequency))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_cusum_csv(path: &Path, cusum: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["index", "cusum"]).map_err(|e| csv_err(path, e))?;
    for (j, c) in cusum.iter().enumerate() {
        w.serialize((j + 1, c)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes every output file into `dir`, creating it if needed. Nothing is
/// written for an empty archive.
pub fn emit_outputs(
    dir: &Path,
    archive: &PosteriorArchive,
    report: &SummaryReport,
    include_archive: bool,
) -> Result<Vec<PathBuf>> {
    if archive.is_empty() {
        return Err(Error::EmptyArchive);
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let samples = dir.join(SAMPLES_FILE);
    write_samples_csv(&samples, archive)?;
    written.push(samples);
    let summary = dir.join(SUMMARY_FILE);
    write_json(&summary, report)?;
    written.push(summary);
    let histogram = dir.join(HISTOGRAM_FILE);
    write_histogram_csv(&histogram, report)?;
    written.push(histogram);
    if !report.cusum.is_empty() {
        let cusum = dir.join(CUSUM_FILE);
        write_cusum_csv(&cusum, &report.cusum)?;
        written.push(cusum);
    }
    if include_archive {
        let path = dir.join(ARCHIVE_FILE);
        write_json(&path, archive)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_archive(path: &Path) -> Result<PosteriorArchive> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}
