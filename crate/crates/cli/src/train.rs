use std::path::PathBuf;

use anyhow::Context;
use stainforge::raster::read_raster;
use stainforge::training::{fit_mapper_with, pairs_from_images, FitConfig, LrSchedule, PixelPair};
use stainforge::decode_u8;

use crate::common::{config_error, file_name, list_rasters, CmdResult, OrExit, Status};

pub struct TrainArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    pub output: PathBuf,
    pub curve: Option<PathBuf>,
    pub iters: u64,
    pub peak_lr: f64,
    pub warmup: Option<u64>,
    pub batch: usize,
    pub seed: u64,
    pub max_pairs: usize,
}

fn load_pair(args: &TrainArgs, name: &str) -> anyhow::Result<Vec<PixelPair>> {
    let s = decode_u8(&read_raster(&args.source.join(name))?);
    let t = decode_u8(&read_raster(&args.target.join(name))?);
    Ok(pairs_from_images(&s, &t)?)
}

pub fn run(args: &TrainArgs) -> CmdResult {
    let warmup = args.warmup.unwrap_or_else(|| 500.min(args.iters / 10).max(1));
    let sched = LrSchedule::new(args.peak_lr, warmup, args.iters).config()?;
    if args.max_pairs == 0 {
        return Err(config_error("--max-pairs must be positive"));
    }
    let targets: Vec<String> = list_rasters(&args.target).config()?.iter().map(|p| file_name(p)).collect();
    let names: Vec<String> = list_rasters(&args.source)
        .config()?
        .iter()
        .map(|p| file_name(p))
        .filter(|n| {
            let found = targets.contains(n);
            if !found {
                eprintln!("warning: {n} has no target counterpart, skipped");
            }
            found
        })
        .collect();
    if names.is_empty() {
        return Err(config_error("no source image has a same-named target image"));
    }

    let mut pairs = Vec::new();
    let mut failed = 0;
    for name in &names {
        match load_pair(args, name) {
            Ok(p) => pairs.extend(p),
            Err(e) => {
                eprintln!("error: {name}: {e:#}");
                failed += 1;
            }
        }
    }
    if pairs.is_empty() {
        return Err(config_error("no pixel pairs could be extracted"));
    }
    if pairs.len() > args.max_pairs {
        let stride = pairs.len().div_ceil(args.max_pairs);
        pairs = pairs.into_iter().step_by(stride).collect();
    }

    let cfg = FitConfig { batch_size: args.batch, ..FitConfig::default() };
    let fit = fit_mapper_with(&pairs, &sched, args.seed, &cfg).config()?;
    std::fs::write(&args.output, fit.params.to_json() + "\n")
        .with_context(|| format!("writing {}", args.output.display()))
        .failed()?;
    if let Some(curve) = &args.curve {
        std::fs::write(curve, fit.curve_csv())
            .with_context(|| format!("writing {}", curve.display()))
            .failed()?;
    }
    println!(
        "{} pixel pairs from {} images, {} iterations, final mse {:.3e}",
        pairs.len(),
        names.len() - failed,
        args.iters,
        fit.final_mse
    );
    Ok(Status::from_failures(failed))
}
