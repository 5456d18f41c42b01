use std::path::{Path, PathBuf};

use serde::Serialize;
use stainforge::normalizer::{benchmark_params, random_tiles, reference_footer, BenchConfig, BenchPath, BenchReport};
use stainforge::predictor::init_weights;
use stainforge::{decode_u8, predict_params, PredictorWeights};

use crate::common::{config_error, emit_json, json_to_stdout, CmdResult, OrExit, Status};
use crate::normalize::load_predictor;
use crate::BenchPaths;

#[derive(Serialize)]
struct Output {
    reports: Vec<BenchReport>,
    footer: String,
}

/// 1, 2, 4, ... up to and including `max`.
fn worker_counts(max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = std::iter::successors(Some(1usize), |w| Some(w * 2)).take_while(|&w| w < max).collect();
    out.push(max);
    out
}

pub fn run(
    weights: Option<&Path>,
    tile: usize,
    paths: BenchPaths,
    duration: f64,
    seed: u64,
    workers: usize,
    json: &Option<PathBuf>,
) -> CmdResult {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(config_error(format!("--duration {duration} must be a positive number of seconds")));
    }
    let weights = match weights {
        Some(p) => load_predictor(p).config()?,
        None => PredictorWeights::from_store(&init_weights(seed)).config()?,
    };
    let cfg = BenchConfig { tile, duration_secs: duration, seed, ..BenchConfig::default() };
    let tiles = random_tiles(cfg.tile_pool, tile, seed).failed()?;
    let params = predict_params(&decode_u8(&tiles[0]), &weights).failed()?;
    let selected = match paths {
        BenchPaths::Direct => vec![BenchPath::Direct],
        BenchPaths::Lut => vec![BenchPath::Lut],
        BenchPaths::Both => vec![BenchPath::Direct, BenchPath::Lut],
    };

    let mut reports = Vec::new();
    for path in selected {
        for w in worker_counts(workers) {
            let run_cfg = BenchConfig { path, workers: w, ..cfg };
            reports.push(benchmark_params(&params, &tiles, &run_cfg).failed()?);
        }
    }

    if !json_to_stdout(json) {
        println!("{:<7} {:>7} {:>6} {:>8} {:>8} {:>10} {:>9} {:>9}", "path", "workers", "tile", "tiles", "wall s", "FPS", "Mpx/s", "lut s");
        for r in &reports {
            let lut = r.lut_compile_seconds.map_or("-".to_owned(), |s| format!("{s:.3}"));
            println!(
                "{:<7} {:>7} {:>6} {:>8} {:>8.3} {:>10.1} {:>9.1} {:>9}",
                r.path.to_string(),
                r.workers,
                r.tile_size,
                r.tiles,
                r.wall_seconds,
                r.fps,
                r.mpx_per_s,
                lut
            );
        }
        println!("{}", reference_footer());
    }
    emit_json(json, &Output { reports, footer: reference_footer() }).failed()?;
    Ok(Status::Success)
}
