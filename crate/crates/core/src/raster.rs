//! PNG and binary PPM (P6) reading and writing for 8-bit RGB rasters.

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, RgbImage};

use crate::error::{Error, Result};
use crate::image::Rgb8Image;

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(Error::Format(format!(
            "unsupported raster extension for {} (expected .png or .ppm)",
            path.display()
        ))),
    }
}

pub fn is_raster_path(path: &Path) -> bool {
    format_for(path).is_ok()
}

pub fn read_raster(path: &Path) -> Result<Rgb8Image> {
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let decoded = image::load_from_memory_with_format(&bytes, format).map_err(|source| {
        Error::Codec {
            path: path.to_owned(),
            source,
        }
    })?;
    let rgb = decoded.into_rgb8();
    let (w, h) = rgb.dimensions();
    Rgb8Image::new(w as usize, h as usize, rgb.into_raw())
}

pub fn write_raster(path: &Path, img: &Rgb8Image) -> Result<()> {
    let codec = |source| Error::Codec { path: path.to_owned(), source };
    match format_for(path)? {
        ImageFormat::Pnm => {
            // The encoder's default subtype is PAM (P7); force binary P6.
            let mut bytes = Vec::new();
            PnmEncoder::new(&mut bytes)
                .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
                .write_image(img.data(), img.width() as u32, img.height() as u32, ExtendedColorType::Rgb8)
                .map_err(codec)?;
            std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
        }
        format => RgbImage::from_raw(img.width() as u32, img.height() as u32, img.data().to_vec())
            .expect("raster buffer length is validated on construction")
            .save_with_format(path, format)
            .map_err(codec),
    }
}
