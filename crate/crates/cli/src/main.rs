// SPDX-License-Identifier: MIT OR Apache-2.0

//! `unicp`: Bayesian multiple changepoint detection from the command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use unicp::gibbs::{self, GibbsConfig, GridScheme, Initialization, PosteriorArchive};
use unicp::io::benchmark::{generate_benchmark, Preset};
use unicp::io::cusum::cusum_diagnostic;
use unicp::io::ingest::{ingest_csv, Column, CsvOptions, HeaderMode, Rescale};
use unicp::io::output::{emit_outputs, read_archive};
use unicp::io::runspec::RunSpec;
use unicp::io::summary::{summarize, SummaryOptions};
use unicp::viterbi::{map_segmentation, plug_in_estimates, viterbi_map};
use unicp::{Error, ObservationSeries, SegmentModelSpec};

const EXIT_INPUT: u8 = 1;
const EXIT_ABORT: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "unicp", version, about = "Bayesian multiple changepoint detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sampler and write samples, summary, histogram and CUSUM tables.
    Run(RunArgs),
    /// Write a seeded synthetic benchmark series as CSV.
    Generate(GenerateArgs),
    /// Recompute summaries from a saved archive.
    Summarize(SummarizeArgs),
    /// MAP changepoint locations from a saved archive.
    Viterbi(ViterbiArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Normal,
    Exponential,
    Poisson,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Scheme {
    Piecewise,
    Constant,
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// Flat `key = value` run-spec file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV input file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Synthetic preset instead of an input file.
    #[arg(long, conflicts_with = "input")]
    preset: Option<String>,
    /// Value column: 0-based index or header name.
    #[arg(long)]
    value_column: Option<String>,
    /// Event-time column; observations are placed at 1..n when absent.
    #[arg(long)]
    time_column: Option<String>,
    /// auto, present or absent.
    #[arg(long)]
    header: Option<String>,
    /// Horizon T (defaults to n, or to the last event time).
    #[arg(long)]
    horizon: Option<f64>,
    /// Affine rescale y' = (y - offset) / scale.
    #[arg(long)]
    offset: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct ModelArgs {
    #[arg(long, value_enum)]
    family: Option<Family>,
    #[arg(long)]
    prior_mean: Option<f64>,
    #[arg(long)]
    prior_var: Option<f64>,
    #[arg(long)]
    noise_var: Option<f64>,
    /// Gamma prior shape for exponential or Poisson segments.
    #[arg(long)]
    shape: Option<f64>,
    /// Gamma prior rate for exponential or Poisson segments.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SummaryArgs {
    #[arg(long)]
    hpd_mass: Option<f64>,
    /// Histogram bin width in observation indices.
    #[arg(long)]
    bin_width: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    summary: SummaryArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Resolution k of the uniformization grid.
    #[arg(long, short = 'k')]
    resolution: Option<f64>,
    #[arg(long)]
    prune_repeats: Option<usize>,
    #[arg(long)]
    grid_cap: Option<usize>,
    #[arg(long, value_enum)]
    scheme: Option<Scheme>,
    /// Initial number of changepoints (default: CUSUM corner count).
    #[arg(long)]
    init_changepoints: Option<usize>,
    #[arg(long)]
    rate_prior_shape: Option<f64>,
    #[arg(long)]
    rate_prior_rate: Option<f64>,
    /// Independent chains with seeds seed, seed+1, ...; run in parallel and merged.
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    preset: String,
    #[arg(long)]
    seed: u64,
    /// Comma-separated segment lengths (poisson-custom).
    #[arg(long, value_delimiter = ',')]
    lengths: Vec<usize>,
    /// Comma-separated segment means (poisson-custom).
    #[arg(long, value_delimiter = ',')]
    means: Vec<f64>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    /// archive.json written by `run`.
    #[arg(long)]
    archive: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    summary: SummaryArgs,
    #[arg(long)]
    outdir: PathBuf,
}

#[derive(Args, Debug)]
struct ViterbiArgs {
    #[arg(long)]
    archive: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Decode this many changepoints instead of the MAP count.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Abort(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Abort(_) => EXIT_ABORT,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Abort(m) | Failure::Io(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } => Failure::Io(msg),
            Error::GridCapExceeded { .. } | Error::FilterUnderflow { .. } | Error::EmptyArchive => {
                Failure::Abort(msg)
            }
            _ => Failure::Input(msg),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

/// Flag value, else run-spec value, else `None`.
fn pick<T>(flag: Option<T>, spec: &RunSpec, key: &str) -> CliResult<Option<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => Ok(spec.parsed(key)?),
    }
}

fn load_spec(path: Option<&Path>) -> CliResult<RunSpec> {
    match path {
        Some(p) => Ok(RunSpec::load(p)?),
        None => Ok(RunSpec::default()),
    }
}

struct Dataset {
    series: ObservationSeries,
    preset_spec: Option<SegmentModelSpec>,
    preset_config: Option<GibbsConfig>,
    truth: Option<Vec<usize>>,
}

fn load_data(args: &DataArgs, spec: &RunSpec, seed: u64) -> CliResult<Dataset> {
    let preset: Option<String> = pick(args.preset.clone(), spec, "preset")?;
    let input = args.input.clone().or_else(|| spec.path_value("input"));
    match (input, preset) {
        (Some(path), _) => {
            let header = match pick(args.header.clone(), spec, "header")? {
                Some(h) => h.parse::<HeaderMode>()?,
                None => HeaderMode::Auto,
            };
            let column = |flag: &Option<String>, key: &str| -> CliResult<Option<Column>> {
                Ok(pick(flag.clone(), spec, key)?.map(|s: String| s.parse().expect("infallible")))
            };
            let offset = pick(args.offset, spec, "offset")?;
            let scale = pick(args.scale, spec, "scale")?;
            let rescale = if offset.is_some() || scale.is_some() {
                Some(Rescale {
                    offset: offset.unwrap_or(0.0),
                    scale: scale.unwrap_or(1.0),
                })
            } else {
                None
            };
            let options = CsvOptions {
                value_column: column(&args.value_column, "value_column")?.unwrap_or(Column::Index(0)),
                time_column: column(&args.time_column, "time_column")?,
                header,
                rescale,
                horizon: pick(args.horizon, spec, "horizon")?,
                ..CsvOptions::default()
            };
            Ok(Dataset {
                series: ingest_csv(&path, &options)?,
                preset_spec: None,
                preset_config: None,
                truth: None,
            })
        }
        (None, Some(name)) => {
            let bench = generate_benchmark(&name.parse::<Preset>()?, seed)?;
            Ok(Dataset {
                series: bench.series,
                preset_spec: Some(bench.spec),
                preset_config: Some(bench.config),
                truth: Some(bench.truth),
            })
        }
        (None, None) => Err(Failure::Input("no data: pass --input or --preset".into())),
    }
}

fn resolve_model(args: &ModelArgs, spec: &RunSpec, fallback: Option<SegmentModelSpec>) -> CliResult<SegmentModelSpec> {
    let family = match args.family {
        Some(f) => Some(f),
        None => match spec.get("family") {
            Some(s) => Some(
                Family::from_str(s, true).map_err(|_| Failure::Input(format!("unknown family {s:?}")))?,
            ),
            None => None,
        },
    };
    let base = match (family, fallback) {
        (None, Some(f)) => f,
        (Some(Family::Normal), _) | (None, None) => SegmentModelSpec::Normal {
            prior_mean: 0.0,
            prior_var: 1.0,
            noise_var: 1.0,
        },
        (Some(Family::Exponential), _) => SegmentModelSpec::Exponential { shape: 1.0, rate: 1.0 },
        (Some(Family::Poisson), _) => SegmentModelSpec::Poisson { shape: 1.0, rate: 1.0 },
    };
    let model = match base {
        SegmentModelSpec::Normal {
            prior_mean,
            prior_var,
            noise_var,
        } => SegmentModelSpec::Normal {
            prior_mean: pick(args.prior_mean, spec, "prior_mean")?.unwrap_or(prior_mean),
            prior_var: pick(args.prior_var, spec, "prior_var")?.unwrap_or(prior_var),
            noise_var: pick(args.noise_var, spec, "noise_var")?.unwrap_or(noise_var),
        },
        SegmentModelSpec::Exponential { shape, rate } => SegmentModelSpec::Exponential {
            shape: pick(args.shape, spec, "shape")?.unwrap_or(shape),
            rate: pick(args.rate, spec, "rate")?.unwrap_or(rate),
        },
        SegmentModelSpec::Poisson { shape, rate } => SegmentModelSpec::Poisson {
            shape: pick(args.shape, spec, "shape")?.unwrap_or(shape),
            rate: pick(args.rate, spec, "rate")?.unwrap_or(rate),
        },
    };
    model.validate()?;
    Ok(model)
}

fn summary_options(args: &SummaryArgs, spec: &RunSpec) -> CliResult<SummaryOptions> {
    let defaults = SummaryOptions::default();
    Ok(SummaryOptions {
        hpd_mass: pick(args.hpd_mass, spec, "hpd_mass")?.unwrap_or(defaults.hpd_mass),
        bin_width: pick(args.bin_width, spec, "bin_width")?,
    })
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    seed: u64,
    chains: usize,
    iterations: usize,
    burn_in: usize,
    resolution: f64,
    prune_repeats: usize,
    grid_cap: usize,
    scheme: GridScheme,
    model: &'a SegmentModelSpec,
    n: usize,
    horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<&'a [usize]>,
    map_serial_indices: Option<Vec<usize>>,
    map_locations: Option<Vec<f64>>,
}

fn run(args: RunArgs) -> CliResult<()> {
    let spec = load_spec(args.data.config.as_deref())?;
    let seed = pick(args.seed, &spec, "seed")?
        .ok_or_else(|| Failure::Input("--seed is required for reproducible runs".into()))?;
    let data = load_data(&args.data, &spec, seed)?;
    let model = resolve_model(&args.model, &spec, data.preset_spec)?;
    let series = &data.series;

    let base = data.preset_config.clone().unwrap_or_default();
    let init_count: Option<usize> = pick(args.init_changepoints, &spec, "init_changepoints")?;
    let mut init = match init_count {
        Some(m) => Initialization::equally_spaced(series, m)?,
        None => Initialization::from_cusum(series)?,
    };
    let a: Option<f64> = pick(args.rate_prior_shape, &spec, "rate_prior_shape")?;
    let b: Option<f64> = pick(args.rate_prior_rate, &spec, "rate_prior_rate")?;
    if a.is_some() || b.is_some() {
        let (a0, b0) = (init.rates.prior_shape(), init.rates.prior_rate());
        init = init.with_prior(a.unwrap_or(a0), b.unwrap_or(b0))?;
    }
    let scheme = match pick(args.scheme.map(|s| format!("{s:?}").to_lowercase()), &spec, "scheme")?.as_deref() {
        None | Some("piecewise") => GridScheme::Piecewise,
        Some("constant") => GridScheme::Constant,
        Some(other) => return Err(Failure::Input(format!("unknown scheme {other:?}"))),
    };
    let config = GibbsConfig {
        iterations: pick(args.iterations, &spec, "iterations")?.unwrap_or(base.iterations),
        burn_in: pick(args.burn_in, &spec, "burn_in")?.unwrap_or(base.burn_in),
        resolution: pick(args.resolution, &spec, "resolution")?.unwrap_or(base.resolution),
        prune_repeats: pick(args.prune_repeats, &spec, "prune_repeats")?.unwrap_or(base.prune_repeats),
        grid_cap: pick(args.grid_cap, &spec, "grid_cap")?.unwrap_or(base.grid_cap),
        seed,
        scheme,
        init: Some(init),
        ..base
    };
    config.validate()?;
    let chains = pick(args.chains, &spec, "chains")?.unwrap_or(1).max(1);
    let outdir = args
        .outdir
        .clone()
        .or_else(|| spec.path_value("outdir"))
        .ok_or_else(|| Failure::Input("no output directory: pass --outdir".into()))?;
    let options = summary_options(&args.summary, &spec)?;

    let quiet = args.quiet;
    let run_chain = |chain: usize| {
        let cfg = GibbsConfig {
            seed: seed.wrapping_add(chain as u64),
            ..config.clone()
        };
        let every = (cfg.iterations / 10).max(1);
        gibbs::run_with_progress(series, model, &cfg, |p| {
            if !quiet && (p.iteration + 1) % every == 0 {
                eprintln!(
                    "chain {chain}: iteration {}/{} m = {} K = {}",
                    p.iteration + 1,
                    cfg.iterations,
                    p.count,
                    p.grid_size
                );
            }
        })
    };
    let archives: Vec<PosteriorArchive> = if chains == 1 {
        vec![run_chain(0)?]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..chains).map(|c| s.spawn(move || run_chain(c))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect::<Result<Vec<_>, _>>()
        })?
    };
    let archive = PosteriorArchive::merge(archives)?;
    if archive.is_empty() {
        return Err(Failure::Abort(format!(
            "no draws retained: {}",
            archive.termination.as_deref().unwrap_or("run ended during burn-in")
        )));
    }

    let mut report = summarize(&archive, &options)?;
    report.cusum = cusum_diagnostic(series.values()).unwrap_or_default();
    let map = map_segmentation(series, &model, &archive).ok();
    report.map_locations = map.as_ref().map(|p| p.sample.serial_indices().to_vec());
    let written = emit_outputs(&outdir, &archive, &report, true)?;

    let meta = RunMetadata {
        seed,
        chains,
        iterations: config.iterations,
        burn_in: config.burn_in,
        resolution: config.resolution,
        prune_repeats: config.prune_repeats,
        grid_cap: config.grid_cap,
        scheme,
        model: &model,
        n: series.len(),
        horizon: series.horizon(),
        truth: data.truth.as_deref(),
        map_serial_indices: map.as_ref().map(|p| p.sample.serial_indices().to_vec()),
        map_locations: map.as_ref().map(|p| p.sample.locations().to_vec()),
    };
    let meta_path = outdir.join("run.json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&meta_path, text + "\n").map_err(|e| Failure::Io(format!("{}: {e}", meta_path.display())))?;

    if !quiet {
        for p in written.iter().chain(std::iter::once(&meta_path)) {
            eprintln!("wrote {}", p.display());
        }
    }
    println!(
        "draws {} | MAP count {} | MAP serial indices {:?}",
        archive.len(),
        report.map_count,
        report.map_locations.unwrap_or_default()
    );
    match archive.termination {
        Some(reason) => Err(Failure::Abort(reason)),
        None => Ok(()),
    }
}

fn generate(args: GenerateArgs) -> CliResult<()> {
    let mut preset: Preset = args.preset.parse()?;
    if let Preset::PoissonCustom { lengths, means } = &mut preset {
        if !args.lengths.is_empty() {
            *lengths = args.lengths.clone();
        }
        if !args.means.is_empty() {
            *means = args.means.clone();
        }
    }
    let bench = generate_benchmark(&preset, args.seed)?;
    let io_err = |e: std::io::Error| Failure::Io(format!("{}: {e}", args.output.display()));
    let mut file = std::io::BufWriter::new(fs::File::create(&args.output).map_err(io_err)?);
    writeln!(file, "value").map_err(io_err)?;
    for y in bench.series.values() {
        writeln!(file, "{y}").map_err(io_err)?;
    }
    file.flush().map_err(io_err)?;
    println!("{} observations, true changepoints {:?}", bench.series.len(), bench.truth);
    Ok(())
}

fn summarize_cmd(args: SummarizeArgs) -> CliResult<()> {
    let spec = load_spec(args.data.config.as_deref())?;
    let archive = read_archive(&args.archive)?;
    let options = summary_options(&args.summary, &spec)?;
    let mut report = summarize(&archive, &options)?;
    let has_data = args.data.input.is_some() || args.data.preset.is_some() || spec.get("input").is_some();
    if has_data {
        let seed = spec.parsed("seed")?.unwrap_or(0);
        let data = load_data(&args.data, &spec, seed)?;
        report.cusum = cusum_diagnostic(data.series.values()).unwrap_or_default();
    }
    let written = emit_outputs(&args.outdir, &archive, &report, false)?;
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    println!("MAP count {}", report.map_count);
    Ok(())
}

#[derive(Serialize)]
struct ViterbiOutput {
    count: usize,
    serial_indices: Vec<usize>,
    locations: Vec<f64>,
    log_score: f64,
}

fn viterbi_cmd(args: ViterbiArgs) -> CliResult<()> {
    let spec = load_spec(args.data.config.as_deref())?;
    let archive = read_archive(&args.archive)?;
    let seed = spec.parsed("seed")?.unwrap_or(0);
    let data = load_data(&args.data, &spec, seed)?;
    let model = resolve_model(&args.model, &spec, data.preset_spec)?;
    if data.series.len() != archive.n {
        return Err(Failure::Input(format!(
            "archive has n = {} but the data has {} observations",
            archive.n,
            data.series.len()
        )));
    }
    let path = match args.count {
        Some(m) => {
            let (rates, theta) = plug_in_estimates(&archive, m)?;
            viterbi_map(&data.series, &model, &rates, &theta, m)?
        }
        None => map_segmentation(&data.series, &model, &archive)?,
    };
    let out = ViterbiOutput {
        count: path.sample.count(),
        serial_indices: path.sample.serial_indices().to_vec(),
        locations: path.sample.locations().to_vec(),
        log_score: path.log_score,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("output serializes"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Generate(a) => generate(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::Viterbi(a) => viterbi_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
