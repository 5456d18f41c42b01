use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stainforge::metrics::{image_metrics, ImageMetrics, MetricReport};
use stainforge::raster::read_raster;

use crate::common::{config_error, emit_json, file_name, json_to_stdout, list_rasters, CmdResult, OrExit, Status};

#[derive(Serialize)]
struct Output {
    label: String,
    files: Vec<String>,
    report: MetricReport,
}

fn names(dir: &Path) -> anyhow::Result<BTreeSet<String>> {
    Ok(list_rasters(dir)?.iter().map(|p| file_name(p)).collect())
}

fn measure(normalized: &Path, target: &Path, source: &Path, name: &str) -> anyhow::Result<ImageMetrics> {
    let n = read_raster(&normalized.join(name))?;
    let t = read_raster(&target.join(name))?;
    let s = read_raster(&source.join(name))?;
    Ok(image_metrics(&n, &t, &s)?)
}

pub fn run(
    normalized: &Path,
    target: &Path,
    source: &Path,
    label: Option<String>,
    per_image: bool,
    json: &Option<PathBuf>,
) -> CmdResult {
    let sets = [names(normalized).config()?, names(target).config()?, names(source).config()?];
    let common: BTreeSet<String> = sets[0].iter().filter(|n| sets[1].contains(*n) && sets[2].contains(*n)).cloned().collect();
    for (dir, set) in [normalized, target, source].iter().zip(&sets) {
        for missing in set.difference(&common) {
            eprintln!("warning: skipping {missing}: only some directories contain it (seen in {})", dir.display());
        }
    }
    if common.is_empty() {
        return Err(config_error("no file name is present in all three directories"));
    }

    let mut files = Vec::new();
    let mut rows = Vec::new();
    let mut failed = 0;
    for name in &common {
        match measure(normalized, target, source, name) {
            Ok(m) => {
                files.push(name.clone());
                rows.push(m);
            }
            Err(e) => {
                eprintln!("error: {name}: {e:#}");
                failed += 1;
            }
        }
    }
    if rows.is_empty() {
        return Err(config_error("no image triple could be evaluated"));
    }

    let label = label.unwrap_or_else(|| file_name(normalized));
    let report = MetricReport::from_images(rows).failed()?;
    if !json_to_stdout(json) {
        let width = label.len().max(files.iter().map(String::len).max().unwrap_or(0)).max(6);
        println!("{:<width$}  {:>13}  {:>13}  {:>15}  {:>13}", "", "QSSIM Target", "SSIM Target", "PSNR Target", "SSIM Source");
        if per_image {
            for (name, m) in files.iter().zip(&report.per_image) {
                println!(
                    "{name:<width$}  {:>13.3}  {:>13.3}  {:>15}  {:>13.3}",
                    m.qssim_target,
                    m.ssim_target,
                    m.psnr_target.to_string(),
                    m.ssim_source
                );
            }
        }
        println!(
            "{label:<width$}  {:>13}  {:>13}  {:>15}  {:>13}",
            report.qssim_target.to_string(),
            report.ssim_target.to_string(),
            report.psnr_target.to_string(),
            report.ssim_source.to_string()
        );
    }
    emit_json(json, &Output { label, files, report }).failed()?;
    Ok(Status::from_failures(failed))
}
