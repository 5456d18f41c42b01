//! Whole-slide normalization: one parameter prediction per slide from its
//! thumbnail, then pointwise mapping of every tile on a worker pool, plus a
//! throughput benchmark over in-memory tiles.
//!
//! The mapping is per pixel, so tiles need no overlap and the output is
//! bit-identical for any tile size and worker count.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{decode_u8, Rgb8Image};
use crate::mapper::{compile_lut, map_image_lut, map_rgb8, ColorLut, MapperParams};
use crate::predictor::{predict_params, PredictorWeights};
use crate::raster::{read_raster, write_raster};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TileRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl TileRect {
    pub fn area(&self) -> usize {
        self.width * self.height
    }
}

/// Row-major grid of rectangles that exactly partitions the slide. Edge
/// tiles are clipped to the slide bounds.
pub fn plan_tiles(width: usize, height: usize, tile: usize) -> Result<Vec<TileRect>> {
    if width == 0 || height == 0 || tile == 0 {
        return Err(Error::Dimension(format!(
            "cannot tile a {width}x{height} slide with tile size {tile}"
        )));
    }
    let mut out = Vec::new();
    for y0 in (0..height).step_by(tile) {
        for x0 in (0..width).step_by(tile) {
            out.push(TileRect {
                x0,
                y0,
                width: tile.min(width - x0),
                height: tile.min(height - y0),
            });
        }
    }
    Ok(out)
}

pub const THUMBNAIL_MAX_SIDE: usize = 1024;

/// A slide readable by region.
pub trait SlideSource: Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn read_region(&self, rect: TileRect) -> Result<Rgb8Image>;

    /// Downscaled overview used for parameter prediction.
    fn thumbnail(&self) -> Result<Rgb8Image> {
        build_thumbnail(self, THUMBNAIL_MAX_SIDE)
    }
}

/// Box-averaged thumbnail whose longer side is at most `max_side`, read
/// block by block so the full slide is never resident.
pub fn build_thumbnail<S: SlideSource + ?Sized>(source: &S, max_side: usize) -> Result<Rgb8Image> {
    let (w, h) = (source.width(), source.height());
    let factor = w.max(h).div_ceil(max_side.max(1)).max(1);
    let (tw, th) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut sums = vec![0u64; tw * th * 3];
    let mut counts = vec![0u64; tw * th];
    let block = factor * (1024 / factor).max(1);
    for rect in plan_tiles(w, h, block)? {
        let region = source.read_region(rect)?;
        for y in 0..rect.height {
            let ty = (rect.y0 + y) / factor;
            for x in 0..rect.width {
                let tx = (rect.x0 + x) / factor;
                let p = region.pixel(x, y);
                let i = ty * tw + tx;
                counts[i] += 1;
                for c in 0..3 {
                    sums[i * 3 + c] += p[c] as u64;
                }
            }
        }
    }
    let data = sums
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let n = counts[i / 3];
            ((s + n / 2) / n) as u8
        })
        .collect();
    Rgb8Image::new(tw, th, data)
}

/// A slide held entirely in memory (single PNG/PPM input or synthetic).
pub struct MemorySlide {
    raster: Rgb8Image,
}

impl MemorySlide {
    pub fn new(raster: Rgb8Image) -> Self {
        Self { raster }
    }

    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self::new(read_raster(path)?))
    }

    pub fn raster(&self) -> &Rgb8Image {
        &self.raster
    }
}

impl SlideSource for MemorySlide {
    fn width(&self) -> usize {
        self.raster.width()
    }

    fn height(&self) -> usize {
        self.raster.height()
    }

    fn read_region(&self, rect: TileRect) -> Result<Rgb8Image> {
        self.raster
            .crop(rect.x0, rect.y0, rect.width, rect.height)
            .map_err(|e| tile_error(rect, e))
    }
}

fn tile_error(rect: TileRect, e: impl std::fmt::Display) -> Error {
    Error::TileRead {
        x0: rect.x0,
        y0: rect.y0,
        width: rect.width,
        height: rect.height,
        message: e.to_string(),
    }
}

pub const INDEX_FILE: &str = "index.json";

/// `index.json` of a tiled slide directory. `tile_path` is relative to the
/// directory and may use `{row}`, `{col}`, `{x}` and `{y}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideIndex {
    pub width: usize,
    pub height: usize,
    pub tile_size: usize,
    pub tile_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbnail: Option<String>,
}

impl SlideIndex {
    pub fn tile_file(&self, rect: TileRect) -> String {
        self.tile_path
            .replace("{row}", &(rect.y0 / self.tile_size).to_string())
            .replace("{col}", &(rect.x0 / self.tile_size).to_string())
            .replace("{x}", &rect.x0.to_string())
            .replace("{y}", &rect.y0.to_string())
    }
}

/// A slide stored as a directory of raster tiles plus `index.json`.
pub struct TiledSlide {
    root: PathBuf,
    index: SlideIndex,
    grid: Vec<TileRect>,
}

impl TiledSlide {
    pub fn open(root: &Path) -> Result<Self> {
        let path = root.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let index: SlideIndex = serde_json::from_str(&text)?;
        let grid = plan_tiles(index.width, index.height, index.tile_size)?;
        Ok(Self { root: root.to_owned(), index, grid })
    }

    pub fn index(&self) -> &SlideIndex {
        &self.index
    }

    fn read_stored(&self, rect: TileRect) -> Result<Rgb8Image> {
        let path = self.root.join(self.index.tile_file(rect));
        let img = read_raster(&path).map_err(|e| tile_error(rect, e))?;
        if img.width() != rect.width || img.height() != rect.height {
            return Err(tile_error(
                rect,
                format!("{} is {}x{}", path.display(), img.width(), img.height()),
            ));
        }
        Ok(img)
    }
}

impl SlideSource for TiledSlide {
    fn width(&self) -> usize {
        self.index.width
    }

    fn height(&self) -> usize {
        self.index.height
    }

    fn read_region(&self, rect: TileRect) -> Result<Rgb8Image> {
        if rect.area() == 0 || rect.x0 + rect.width > self.width() || rect.y0 + rect.height > self.height() {
            return Err(tile_error(rect, "region outside slide"));
        }
        let mut out = Rgb8Image::filled(rect.width, rect.height, [0; 3])?;
        let ts = self.index.tile_size;
        let cols = self.width().div_ceil(ts);
        for row in rect.y0 / ts..=(rect.y0 + rect.height - 1) / ts {
            for col in rect.x0 / ts..=(rect.x0 + rect.width - 1) / ts {
                let stored_rect = self.grid[row * cols + col];
                let stored = self.read_stored(stored_rect)?;
                let x0 = rect.x0.max(stored_rect.x0);
                let y0 = rect.y0.max(stored_rect.y0);
                let x1 = (rect.x0 + rect.width).min(stored_rect.x0 + stored_rect.width);
                let y1 = (rect.y0 + rect.height).min(stored_rect.y0 + stored_rect.height);
                let piece = stored.crop(x0 - stored_rect.x0, y0 - stored_rect.y0, x1 - x0, y1 - y0)?;
                out.paste(x0 - rect.x0, y0 - rect.y0, &piece)?;
            }
        }
        Ok(out)
    }

    fn thumbnail(&self) -> Result<Rgb8Image> {
        match &self.index.thumbnail {
            Some(name) => read_raster(&self.root.join(name)),
            None => build_thumbnail(self, THUMBNAIL_MAX_SIDE),
        }
    }
}

/// Receives normalized tiles, possibly out of order and from several threads.
pub trait TileSink: Sync {
    fn write_tile(&self, rect: TileRect, tile: Rgb8Image) -> Result<()>;
}

/// Assembles tiles into one in-memory raster.
pub struct RasterSink {
    raster: Mutex<Rgb8Image>,
}

impl RasterSink {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Ok(Self { raster: Mutex::new(Rgb8Image::filled(width, height, [0; 3])?) })
    }

    pub fn into_raster(self) -> Rgb8Image {
        self.raster.into_inner().expect("sink mutex poisoned")
    }
}

impl TileSink for RasterSink {
    fn write_tile(&self, rect: TileRect, tile: Rgb8Image) -> Result<()> {
        self.raster
            .lock()
            .expect("sink mutex poisoned")
            .paste(rect.x0, rect.y0, &tile)
    }
}

/// Writes each tile as a PNG into a tiled slide directory.
pub struct DirSink {
    root: PathBuf,
    index: SlideIndex,
}

impl DirSink {
    pub fn create(root: &Path, width: usize, height: usize, tile_size: usize) -> Result<Self> {
        let tiles = root.join("tiles");
        std::fs::create_dir_all(&tiles).map_err(|e| Error::io(&tiles, e))?;
        let index = SlideIndex {
            width,
            height,
            tile_size,
            tile_path: "tiles/{row}_{col}.png".into(),
            thumbnail: None,
        };
        let path = root.join(INDEX_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))?;
        Ok(Self { root: root.to_owned(), index })
    }
}

impl TileSink for DirSink {
    fn write_tile(&self, rect: TileRect, tile: Rgb8Image) -> Result<()> {
        write_raster(&self.root.join(self.index.tile_file(rect)), &tile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NormalizeOptions {
    pub tile: usize,
    pub workers: usize,
    pub use_lut: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        Self { tile: 512, workers: 1, use_lut: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlideReport {
    pub params: MapperParams,
    pub tiles: usize,
    pub predict_seconds: f64,
    pub map_seconds: f64,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Dimension(format!("cannot start {workers} workers: {e}")))
}

/// Predicts one parameter set from the slide thumbnail and maps every tile
/// with it.
pub fn normalize_slide(
    source: &dyn SlideSource,
    weights: &PredictorWeights,
    opts: &NormalizeOptions,
    sink: &dyn TileSink,
) -> Result<SlideReport> {
    let start = Instant::now();
    let thumb = source.thumbnail()?;
    let params = predict_params(&decode_u8(&thumb), weights)?;
    let predict_seconds = start.elapsed().as_secs_f64();
    let mut report = map_slide(source, &params, opts, sink)?;
    report.predict_seconds = predict_seconds;
    Ok(report)
}

/// Maps every tile of `source` under fixed `params`.
pub fn map_slide(
    source: &dyn SlideSource,
    params: &MapperParams,
    opts: &NormalizeOptions,
    sink: &dyn TileSink,
) -> Result<SlideReport> {
    let start = Instant::now();
    let tiles = plan_tiles(source.width(), source.height(), opts.tile)?;
    let lut = if opts.use_lut { Some(compile_lut(params)?) } else { None };
    let map_tile = |raw: &Rgb8Image, lut: Option<&ColorLut>| match lut {
        Some(l) => Ok(map_image_lut(raw, l)),
        None => map_rgb8(raw, params),
    };
    pool(opts.workers)?.install(|| {
        tiles.par_iter().try_for_each(|&rect| {
            let raw = source.read_region(rect)?;
            let out = map_tile(&raw, lut.as_ref())?;
            sink.write_tile(rect, out)
        })
    })?;
    Ok(SlideReport {
        params: *params,
        tiles: tiles.len(),
        predict_seconds: 0.0,
        map_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchPath {
    Direct,
    Lut,
}

impl std::fmt::Display for BenchPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchPath::Direct => "direct",
            BenchPath::Lut => "lut",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub tile: usize,
    pub path: BenchPath,
    pub workers: usize,
    pub duration_secs: f64,
    /// Distinct random tiles generated before timing starts.
    pub tile_pool: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { tile: 512, path: BenchPath::Lut, workers: 1, duration_secs: 2.0, tile_pool: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub tile_size: usize,
    pub path: BenchPath,
    pub workers: usize,
    pub tiles: u64,
    pub wall_seconds: f64,
    pub fps: f64,
    pub mpx_per_s: f64,
    /// One-off LUT build time, outside the timed loop.
    pub lut_compile_seconds: Option<f64>,
}

/// GPU reference throughput for 512×512 inputs, I/O excluded (GTX 1080Ti).
pub const REFERENCE_FPS: [(&str, f64); 2] = [("StainNet", 881.8), ("ParamNet", 1605.2)];

pub fn reference_footer() -> String {
    let parts: Vec<String> = REFERENCE_FPS.iter().map(|(m, f)| format!("{m} {f:.1} FPS")).collect();
    format!(
        "reference GPU throughput (GTX 1080Ti, 512x512 input, I/O excluded): {}",
        parts.join(", ")
    )
}

pub fn random_tiles(count: usize, tile: usize, seed: u64) -> Result<Vec<Rgb8Image>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count.max(1))
        .map(|_| {
            let mut data = vec![0u8; tile * tile * 3];
            rng.fill(&mut data[..]);
            Rgb8Image::new(tile, tile, data)
        })
        .collect()
}

/// Times only the mapping of pre-generated in-memory tiles; tile
/// generation, parameter prediction and LUT compilation happen before the
/// clock starts.
pub fn benchmark(weights: &PredictorWeights, cfg: &BenchConfig) -> Result<BenchReport> {
    if !(cfg.duration_secs > 0.0) {
        return Err(Error::OutOfRange(format!("duration {} must be > 0", cfg.duration_secs)));
    }
    let tiles = random_tiles(cfg.tile_pool, cfg.tile, cfg.seed)?;
    let params = predict_params(&decode_u8(&tiles[0]), weights)?;
    benchmark_params(&params, &tiles, cfg)
}

pub fn benchmark_params(params: &MapperParams, tiles: &[Rgb8Image], cfg: &BenchConfig) -> Result<BenchReport> {
    let tile_px = tiles[0].width() * tiles[0].height();
    let (lut, lut_compile_seconds) = match cfg.path {
        BenchPath::Lut => {
            let t = Instant::now();
            let lut = compile_lut(params)?;
            (Some(lut), Some(t.elapsed().as_secs_f64()))
        }
        BenchPath::Direct => (None, None),
    };
    let workers = cfg.workers.max(1);
    let round = workers as u64 * 2;
    let pool = pool(workers)?;
    let mut done = 0u64;
    let start = Instant::now();
    pool.install(|| -> Result<()> {
        while start.elapsed().as_secs_f64() < cfg.duration_secs {
            (0..round).into_par_iter().try_for_each(|i| -> Result<()> {
                let raw = &tiles[((done + i) as usize) % tiles.len()];
                let out = match &lut {
                    Some(l) => map_image_lut(raw, l),
                    None => map_rgb8(raw, params)?,
                };
                std::hint::black_box(out);
                Ok(())
            })?;
            done += round;
        }
        Ok(())
    })?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let fps = done as f64 / wall_seconds;
    Ok(BenchReport {
        tile_size: tiles[0].width(),
        path: cfg.path,
        workers,
        tiles: done,
        wall_seconds,
        fps,
        mpx_per_s: fps * tile_px as f64 / 1e6,
        lut_compile_seconds,
    })
}
