use std::path::{Path, PathBuf};

use stainforge::image::resize_bilinear;
use stainforge::raster::{read_raster, write_raster};
use stainforge::{decode_u8, encode_u8, Rgb8Image};

use crate::common::{config_error, CmdResult, OrExit, Status};
use crate::font::{glyph, ADVANCE, GLYPH_H, GLYPH_W};

pub const GUTTER: usize = 4;
const STRIP_PAD: usize = 3;
pub const STRIP_H: usize = GLYPH_H + 2 * STRIP_PAD;
const WHITE: [u8; 3] = [255; 3];
const INK: [u8; 3] = [0; 3];

fn draw_text(canvas: &mut Rgb8Image, x0: usize, y0: usize, max_w: usize, text: &str) {
    let fits = max_w.saturating_sub(2) / ADVANCE;
    for (i, c) in text.chars().take(fits).enumerate() {
        let rows = glyph(c);
        for (dy, bits) in rows.iter().enumerate() {
            for dx in 0..GLYPH_W {
                if bits & (0x10 >> dx) != 0 {
                    let (x, y) = (x0 + 1 + i * ADVANCE + dx, y0 + dy);
                    let at = (y * canvas.width() + x) * 3;
                    canvas.data_mut()[at..at + 3].copy_from_slice(&INK);
                }
            }
        }
    }
}

/// Panels side by side with white gutters and a label strip underneath.
/// Panels must share a height.
pub fn compose(panels: &[Rgb8Image], labels: &[String]) -> anyhow::Result<Rgb8Image> {
    anyhow::ensure!(!panels.is_empty(), "montage needs at least one image");
    let h = panels[0].height();
    anyhow::ensure!(panels.iter().all(|p| p.height() == h), "panels differ in height");
    let w = panels.iter().map(Rgb8Image::width).sum::<usize>() + GUTTER * (panels.len() - 1);
    let mut canvas = Rgb8Image::filled(w, h + STRIP_H, WHITE)?;
    let mut x = 0;
    for (i, panel) in panels.iter().enumerate() {
        canvas.paste(x, 0, panel)?;
        if let Some(label) = labels.get(i) {
            draw_text(&mut canvas, x, h + STRIP_PAD, panel.width(), label);
        }
        x += panel.width() + GUTTER;
    }
    Ok(canvas)
}

fn scale_to_height(img: Rgb8Image, height: usize) -> anyhow::Result<Rgb8Image> {
    if img.height() == height {
        return Ok(img);
    }
    let width = ((img.width() * height) as f64 / img.height() as f64).round().max(1.0) as usize;
    Ok(encode_u8(&resize_bilinear(&decode_u8(&img), width, height)?))
}

pub fn run(inputs: &[PathBuf], output: &Path, labels: &[String], height: Option<u32>) -> CmdResult {
    if !labels.is_empty() && labels.len() != inputs.len() {
        return Err(config_error(format!("{} labels for {} images", labels.len(), inputs.len())));
    }
    let images = inputs.iter().map(|p| read_raster(p)).collect::<Result<Vec<_>, _>>().config()?;
    let target_h = match height {
        Some(0) => return Err(config_error("--height must be positive")),
        Some(h) => h as usize,
        None => images.iter().map(Rgb8Image::height).min().unwrap_or(1),
    };
    let panels = images.into_iter().map(|img| scale_to_height(img, target_h)).collect::<Result<Vec<_>, _>>().failed()?;
    let labels: Vec<String> = if labels.is_empty() {
        inputs.iter().map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()).collect()
    } else {
        labels.to_vec()
    };
    let canvas = compose(&panels, &labels).failed()?;
    write_raster(output, &canvas).failed()?;
    println!("wrote {} ({}x{})", output.display(), canvas.width(), canvas.height());
    Ok(Status::Success)
}
