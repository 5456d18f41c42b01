//! `stainforge` command-line tool.
//!
//! Exit codes: 0 success, 1 partial failure (some files failed, or the work
//! itself failed), 2 configuration error (bad flags, missing or invalid
//! inputs, weights or references).

mod bench;
mod common;
mod font;
mod metrics;
mod montage;
mod normalize;
mod reference;
mod train;
mod weights;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use common::{CmdResult, OrExit, Status};

#[derive(Parser, Debug)]
#[command(name = "stainforge", version, about = "Stain normalization for histopathology images")]
struct Cli {
    /// Worker threads for every pool (defaults to all cores).
    #[arg(long, global = true, env = "STAINFORGE_WORKERS", value_parser = clap::value_parser!(u16).range(1..))]
    workers: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct JsonArg {
    /// Write a machine-readable report to FILE (stdout if FILE is omitted or `-`).
    #[arg(long, value_name = "FILE", num_args = 0..=1, default_missing_value = "-")]
    json: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Copy)]
struct LutArgs {
    /// Map through the exact 256³ lookup table.
    #[arg(long, overrides_with = "no_lut")]
    lut: bool,
    /// Evaluate the mapper directly per pixel.
    #[arg(long, overrides_with = "lut")]
    no_lut: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Predicted per-image mapper (needs --weights).
    Paramnet,
    /// Statistics matching in lαβ (needs --reference).
    Reinhard,
    /// Optical-density stain separation (needs --reference).
    Macenko,
    /// A fixed mapper from a MapperParams JSON file (needs --params).
    Mapper,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Reinhard,
    Macenko,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchPaths {
    Direct,
    Lut,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normalize one image or every image in a directory.
    Normalize {
        /// Input raster (.png/.ppm) or directory of rasters.
        input: PathBuf,
        /// Output raster, or output directory when the input is a directory.
        output: PathBuf,
        #[arg(long, value_enum, default_value = "paramnet")]
        method: Method,
        /// Predictor weights file (PNWT).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Reference image, or JSON written by `fit-reference`.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// MapperParams JSON for `--method mapper`.
        #[arg(long)]
        params: Option<PathBuf>,
        #[command(flatten)]
        lut: LutArgs,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Normalize a whole slide tile by tile with one prediction per slide.
    NormalizeWsi {
        /// Slide directory (with index.json) or a single large raster.
        input: PathBuf,
        /// Output raster (.png/.ppm) or output slide directory.
        output: PathBuf,
        /// Predictor weights file (PNWT).
        #[arg(long)]
        weights: PathBuf,
        /// Side of the square mapping tiles in pixels.
        #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u32).range(1..))]
        tile: u32,
        #[command(flatten)]
        lut: LutArgs,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Time the mapping stage on in-memory random tiles (I/O excluded).
    Benchmark {
        /// Predictor weights; a seeded fixture is used when omitted.
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u32).range(1..))]
        tile: u32,
        #[arg(long, value_enum, default_value = "both")]
        path: BenchPaths,
        /// Seconds per measurement.
        #[arg(long, default_value_t = 2.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        json: JsonArg,
    },
    /// QSSIM/SSIM/PSNR against the target and grayscale SSIM against the source.
    Metrics {
        normalized: PathBuf,
        target: PathBuf,
        source: PathBuf,
        /// Row label in the table.
        #[arg(long)]
        label: Option<String>,
        /// Also print one row per image.
        #[arg(long)]
        per_image: bool,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Fit a fixed mapper to aligned source/target image pairs.
    TrainMapper {
        source: PathBuf,
        target: PathBuf,
        /// MapperParams JSON output.
        #[arg(long, short)]
        output: PathBuf,
        /// Loss curve CSV output (iter,lr,mse).
        #[arg(long)]
        curve: Option<PathBuf>,
        #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(2..))]
        iters: u64,
        /// Peak learning rate (warmup then linear decay to 0).
        #[arg(long, default_value_t = 1e-2)]
        peak_lr: f64,
        /// Warmup iterations; defaults to min(500, iters/10).
        #[arg(long)]
        warmup: Option<u64>,
        #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u32).range(1..))]
        batch: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Keep at most this many pixel pairs (evenly strided).
        #[arg(long, default_value_t = 1_000_000)]
        max_pairs: usize,
    },
    /// Fit baseline reference statistics or stain basis on one image.
    FitReference {
        image: PathBuf,
        #[arg(long, value_enum)]
        method: BaselineKind,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// List and validate the tensors of a weights file.
    InspectWeights {
        file: Option<PathBuf>,
        /// Print the tensor names and shapes a predictor file must contain.
        #[arg(long)]
        expected: bool,
        #[command(flatten)]
        json: JsonArg,
    },
    /// Write a predictor weights file for tests and demos.
    InitWeights {
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// All weights and biases zero (the mapper then outputs mid-gray).
        #[arg(long)]
        zero: bool,
        #[arg(long, default_value_t = 4.5)]
        alpha: f32,
    },
    /// Side-by-side preview with white gutters and a label strip.
    Montage {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        /// Comma-separated labels (default: file stems).
        #[arg(long, value_delimiter = ',')]
        labels: Vec<String>,
        /// Scale every panel to this height.
        #[arg(long)]
        height: Option<u32>,
    },
}

fn run(cli: Cli) -> CmdResult {
    let workers = match cli.workers {
        Some(w) => w as usize,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    rayon::ThreadPoolBuilder::new().num_threads(workers).build_global().config()?;

    match cli.command {
        Command::Normalize { input, output, method, weights, reference, params, lut, json } => {
            let opts = normalize::NormalizeArgs {
                method,
                weights,
                reference,
                params,
                lut: common::lut_choice(lut.lut, lut.no_lut, false),
                json: json.json,
            };
            normalize::run(&input, &output, &opts)
        }
        Command::NormalizeWsi { input, output, weights, tile, lut, json } => normalize::run_wsi(
            &input,
            &output,
            &weights,
            tile as usize,
            workers,
            common::lut_choice(lut.lut, lut.no_lut, true),
            &json.json,
        ),
        Command::Benchmark { weights, tile, path, duration, seed, json } => {
            bench::run(weights.as_deref(), tile as usize, path, duration, seed, workers, &json.json)
        }
        Command::Metrics { normalized, target, source, label, per_image, json } => {
            metrics::run(&normalized, &target, &source, label, per_image, &json.json)
        }
        Command::TrainMapper { source, target, output, curve, iters, peak_lr, warmup, batch, seed, max_pairs } => {
            train::run(&train::TrainArgs {
                source,
                target,
                output,
                curve,
                iters,
                peak_lr,
                warmup,
                batch: batch as usize,
                seed,
                max_pairs,
            })
        }
        Command::FitReference { image, method, output } => reference::run(&image, method, &output),
        Command::InspectWeights { file, expected, json } => weights::inspect(file.as_deref(), expected, &json.json),
        Command::InitWeights { output, seed, zero, alpha } => weights::init(&output, seed, zero, alpha),
        Command::Montage { inputs, output, labels, height } => montage::run(&inputs, &output, &labels, height),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Status::Success) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(common::EXIT_PARTIAL),
        Err(fatal) => {
            eprintln!("error: {:#}", fatal.error);
            ExitCode::from(fatal.code)
        }
    }
}
