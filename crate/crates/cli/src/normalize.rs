use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use clap::ValueEnum;
use serde::Serialize;
use stainforge::baselines::{macenko_apply, macenko_fit, reinhard_apply, reinhard_fit};
use stainforge::normalizer::{normalize_slide, DirSink, MemorySlide, NormalizeOptions, RasterSink, SlideSource, TiledSlide, INDEX_FILE};
use stainforge::raster::{is_raster_path, read_raster, write_raster};
use stainforge::weights::WeightStore;
use stainforge::{
    compile_lut, decode_u8, encode_u8, map_image_lut, predict_params, ColorLut, MapperParams, PredictorWeights,
    Rgb8Image,
};
use stainforge::mapper::map_rgb8;

use crate::common::{config_error, emit_json, ensure_dir, file_name, json_to_stdout, list_rasters, CmdResult, OrExit, Status};
use crate::reference::{self, Reference};
use crate::{BaselineKind, Method};

pub struct NormalizeArgs {
    pub method: Method,
    pub weights: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub params: Option<PathBuf>,
    pub lut: bool,
    pub json: Option<PathBuf>,
}

pub fn load_predictor(path: &Path) -> anyhow::Result<PredictorWeights> {
    let store = WeightStore::read_file(path).with_context(|| format!("loading weights {}", path.display()))?;
    PredictorWeights::from_store(&store).with_context(|| format!("validating weights {}", path.display()))
}

enum Normalizer {
    Paramnet { weights: Box<PredictorWeights>, lut: bool },
    Fixed { params: MapperParams, lut: Option<ColorLut> },
    Baseline(Reference),
}

impl Normalizer {
    fn prepare(args: &NormalizeArgs) -> anyhow::Result<Self> {
        let require = |opt: &Option<PathBuf>, flag: &str| {
            let name = args.method.to_possible_value().expect("no skipped variants");
            opt.clone().ok_or_else(|| anyhow::anyhow!("--method {} needs {flag}", name.get_name()))
        };
        Ok(match args.method {
            Method::Paramnet => Normalizer::Paramnet {
                weights: Box::new(load_predictor(&require(&args.weights, "--weights")?)?),
                lut: args.lut,
            },
            Method::Mapper => {
                let path = require(&args.params, "--params")?;
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let params = MapperParams::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
                let lut = if args.lut { Some(compile_lut(&params)?) } else { None };
                Normalizer::Fixed { params, lut }
            }
            Method::Reinhard => Normalizer::Baseline(reference::load(&require(&args.reference, "--reference")?, BaselineKind::Reinhard)?),
            Method::Macenko => Normalizer::Baseline(reference::load(&require(&args.reference, "--reference")?, BaselineKind::Macenko)?),
        })
    }

    fn apply(&self, raw: &Rgb8Image) -> anyhow::Result<Rgb8Image> {
        Ok(match self {
            Normalizer::Paramnet { weights, lut } => {
                let params = predict_params(&decode_u8(raw), weights)?;
                if *lut {
                    map_image_lut(raw, &compile_lut(&params)?)
                } else {
                    map_rgb8(raw, &params)?
                }
            }
            Normalizer::Fixed { params, lut } => match lut {
                Some(l) => map_image_lut(raw, l),
                None => map_rgb8(raw, params)?,
            },
            Normalizer::Baseline(Reference::Reinhard { stats }) => {
                let img = decode_u8(raw);
                encode_u8(&reinhard_apply(&img, &reinhard_fit(&img), stats))
            }
            Normalizer::Baseline(Reference::Macenko { basis }) => {
                let img = decode_u8(raw);
                encode_u8(&macenko_apply(&img, &macenko_fit(&img)?, basis))
            }
        })
    }
}

#[derive(Serialize)]
struct FileReport {
    file: String,
    ok: bool,
    millis: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(input: &Path, output: &Path, args: &NormalizeArgs) -> CmdResult {
    let jobs: Vec<(PathBuf, PathBuf)> = if input.is_dir() {
        let files = list_rasters(input).config()?;
        if files.is_empty() {
            return Err(config_error(format!("no .png or .ppm files in {}", input.display())));
        }
        ensure_dir(output).config()?;
        files.into_iter().map(|f| { let out = output.join(f.file_name().unwrap()); (f, out) }).collect()
    } else if input.is_file() {
        if !is_raster_path(output) {
            return Err(config_error(format!("output {} must end in .png or .ppm", output.display())));
        }
        vec![(input.to_owned(), output.to_owned())]
    } else {
        return Err(config_error(format!("input {} does not exist", input.display())));
    };
    let normalizer = Normalizer::prepare(args).config()?;
    let quiet = json_to_stdout(&args.json);

    let mut reports = Vec::new();
    for (src, dst) in &jobs {
        let start = Instant::now();
        let result = read_raster(src)
            .map_err(anyhow::Error::from)
            .and_then(|raw| normalizer.apply(&raw))
            .and_then(|out| Ok(write_raster(dst, &out)?));
        let millis = start.elapsed().as_secs_f64() * 1e3;
        let name = file_name(src);
        match &result {
            Ok(()) if !quiet => println!("{name}: {millis:.1} ms"),
            Ok(()) => {}
            Err(e) => eprintln!("error: {name}: {e:#}"),
        }
        reports.push(FileReport { file: name, ok: result.is_ok(), millis, error: result.err().map(|e| format!("{e:#}")) });
    }
    let failed = reports.iter().filter(|r| !r.ok).count();
    if failed > 0 {
        eprintln!("{failed} of {} files failed", reports.len());
    }
    emit_json(&args.json, &reports).failed()?;
    Ok(Status::from_failures(failed))
}

#[derive(Serialize)]
struct WsiReport {
    width: usize,
    height: usize,
    tile: usize,
    workers: usize,
    lut: bool,
    tiles: usize,
    predict_seconds: f64,
    map_seconds: f64,
    params: MapperParams,
}

pub fn run_wsi(
    input: &Path,
    output: &Path,
    weights: &Path,
    tile: usize,
    workers: usize,
    use_lut: bool,
    json: &Option<PathBuf>,
) -> CmdResult {
    let slide: Box<dyn SlideSource> = if input.join(INDEX_FILE).is_file() {
        Box::new(TiledSlide::open(input).config()?)
    } else if input.is_file() {
        Box::new(MemorySlide::open(input).config()?)
    } else {
        return Err(config_error(format!("{} is neither a slide directory nor a raster", input.display())));
    };
    let weights = load_predictor(weights).config()?;
    let opts = NormalizeOptions { tile, workers, use_lut };
    let (w, h) = (slide.width(), slide.height());

    let report = if is_raster_path(output) {
        let sink = RasterSink::new(w, h).failed()?;
        let report = normalize_slide(slide.as_ref(), &weights, &opts, &sink).failed()?;
        write_raster(output, &sink.into_raster()).failed()?;
        report
    } else {
        let sink = DirSink::create(output, w, h, tile).config()?;
        normalize_slide(slide.as_ref(), &weights, &opts, &sink).failed()?
    };

    let out = WsiReport {
        width: w,
        height: h,
        tile,
        workers,
        lut: use_lut,
        tiles: report.tiles,
        predict_seconds: report.predict_seconds,
        map_seconds: report.map_seconds,
        params: report.params,
    };
    if !json_to_stdout(json) {
        println!(
            "{w}x{h}: {} tiles of {tile} on {workers} workers ({}), predict {:.3} s, map {:.3} s",
            out.tiles,
            if use_lut { "lut" } else { "direct" },
            out.predict_seconds,
            out.map_seconds
        );
    }
    emit_json(json, &out).failed()?;
    Ok(Status::Success)
}
