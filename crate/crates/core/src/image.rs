//! Pixel containers and the 8-bit value convention.
//!
//! Every float image in the crate stores channel values in `[-1, 1]`, with
//! the 8-bit code `u` mapped to `u / 127.5 - 1`. Encoding back rounds half
//! to even, so `encode_u8(decode_u8(raw)) == raw` holds for every input.

use crate::error::{Error, Result};

/// Interleaved 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rgb8Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Rgb8Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "zero-sized raster {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "raster {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Copies the `width`×`height` region whose top-left corner is `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Dimension(format!(
                "region ({x0}, {y0}) {width}x{height} outside {}x{} raster",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height * 3);
        for y in y0..y0 + height {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        Self::new(width, height, data)
    }

    /// Writes `src` into this raster with its top-left corner at `(x0, y0)`.
    pub fn paste(&mut self, x0: usize, y0: usize, src: &Rgb8Image) -> Result<()> {
        if x0 + src.width > self.width || y0 + src.height > self.height {
            return Err(Error::Dimension(format!(
                "paste of {}x{} at ({x0}, {y0}) exceeds {}x{} raster",
                src.width, src.height, self.width, self.height
            )));
        }
        let row = src.width * 3;
        for y in 0..src.height {
            let dst = ((y0 + y) * self.width + x0) * 3;
            self.data[dst..dst + row].copy_from_slice(&src.data[y * row..(y + 1) * row]);
        }
        Ok(())
    }
}

/// H×W×3 float image with every value in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl PixelImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "zero-sized image {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Dimension(format!(
                "image {width}x{height} needs {} values, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::OutOfRange(format!(
                "pixel value {v} outside [-1, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::new(width, height, data)
    }

    pub(crate) fn from_raw_parts(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * 3);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f32; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    pub fn same_dims(&self, other: &PixelImage) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// A sub-image together with its offset in the parent image.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub x0: usize,
    pub y0: usize,
    pub image: PixelImage,
}

#[inline]
pub fn decode_value(u: u8) -> f32 {
    u as f32 / 127.5 - 1.0
}

#[inline]
pub fn encode_value(x: f32) -> u8 {
    ((x as f64 + 1.0) * 127.5).round_ties_even().clamp(0.0, 255.0) as u8
}

pub fn decode_u8(raw: &Rgb8Image) -> PixelImage {
    let data = raw.data().iter().map(|&u| decode_value(u)).collect();
    PixelImage::from_raw_parts(raw.width(), raw.height(), data)
}

pub fn encode_u8(img: &PixelImage) -> Rgb8Image {
    let data = img.data().iter().map(|&x| encode_value(x)).collect();
    Rgb8Image {
        width: img.width(),
        height: img.height(),
        data,
    }
}

/// Bilinear resampling with half-pixel-centred coordinates and edge clamping.
///
/// Resizing to the source dimensions returns an exact copy.
pub fn resize_bilinear(img: &PixelImage, width: usize, height: usize) -> Result<PixelImage> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "resize target {width}x{height} is empty"
        )));
    }
    if width == img.width() && height == img.height() {
        return Ok(img.clone());
    }
    let xs = sample_axis(img.width(), width);
    let ys = sample_axis(img.height(), height);
    let src = img.data();
    let sw = img.width();
    let mut out = Vec::with_capacity(width * height * 3);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for c in 0..3 {
                let p00 = src[(y0 * sw + x0) * 3 + c] as f64;
                let p01 = src[(y0 * sw + x1) * 3 + c] as f64;
                let p10 = src[(y1 * sw + x0) * 3 + c] as f64;
                let p11 = src[(y1 * sw + x1) * 3 + c] as f64;
                let top = p00 * (1.0 - fx) + p01 * fx;
                let bottom = p10 * (1.0 - fx) + p11 * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                out.push((v as f32).clamp(-1.0, 1.0));
            }
        }
    }
    Ok(PixelImage::from_raw_parts(width, height, out))
}

/// Source index pair and interpolation weight for each destination index.
fn sample_axis(src_len: usize, dst_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = src_len as f64 / dst_len as f64;
    let last = src_len - 1;
    (0..dst_len)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(last);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}
