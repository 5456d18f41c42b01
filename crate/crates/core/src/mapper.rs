//! The pointwise color mapper: two 1×1 convolution layers whose 59 weights
//! and biases are supplied at run time.
//!
//! `y = tanh(w2 · relu(w1 · x + b1) + b2)`, evaluated per pixel in `f64`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{decode_value, encode_value, PixelImage, Rgb8Image};

pub const HIDDEN: usize = 8;
pub const PARAM_COUNT: usize = HIDDEN * 3 + HIDDEN + 3 * HIDDEN + 3;

/// Offsets of each block inside the packed 59-vector.
pub const W1_RANGE: std::ops::Range<usize> = 0..24;
pub const B1_RANGE: std::ops::Range<usize> = 24..32;
pub const W2_RANGE: std::ops::Range<usize> = 32..56;
pub const B2_RANGE: std::ops::Range<usize> = 56..59;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MapperParams {
    pub w1: [[f64; 3]; HIDDEN],
    pub b1: [f64; HIDDEN],
    pub w2: [[f64; HIDDEN]; 3],
    pub b2: [f64; 3],
}

impl MapperParams {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        pack_params(self).iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        pack_params(self).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("params always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(s)?;
        if !p.is_finite() {
            return Err(Error::Numeric("mapper parameters contain non-finite values".into()));
        }
        Ok(p)
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric("mapper parameters contain non-finite values".into()))
        }
    }
}

/// Fixed layout: w1 row-major (24), b1 (8), w2 row-major (24), b2 (3).
pub fn pack_params(p: &MapperParams) -> [f64; PARAM_COUNT] {
    let mut v = [0.0; PARAM_COUNT];
    let src = p.w1.iter().flatten().chain(&p.b1).chain(p.w2.iter().flatten()).chain(&p.b2);
    for (dst, src) in v.iter_mut().zip(src) {
        *dst = *src;
    }
    v
}

pub fn unpack_params(v: &[f64]) -> Result<MapperParams> {
    if v.len() != PARAM_COUNT {
        return Err(Error::Dimension(format!(
            "mapper parameter vector must have {PARAM_COUNT} entries, got {}",
            v.len()
        )));
    }
    let mut p = MapperParams::zeros();
    for (i, row) in p.w1.iter_mut().enumerate() {
        row.copy_from_slice(&v[W1_RANGE][i * 3..i * 3 + 3]);
    }
    p.b1.copy_from_slice(&v[B1_RANGE]);
    for (i, row) in p.w2.iter_mut().enumerate() {
        row.copy_from_slice(&v[W2_RANGE][i * HIDDEN..(i + 1) * HIDDEN]);
    }
    p.b2.copy_from_slice(&v[B2_RANGE]);
    Ok(p)
}

/// Hidden pre-activations, for callers that need them (the trainer).
#[inline]
pub(crate) fn hidden_pre(x: [f64; 3], p: &MapperParams) -> [f64; HIDDEN] {
    let mut h = [0.0; HIDDEN];
    for (j, hj) in h.iter_mut().enumerate() {
        let w = &p.w1[j];
        *hj = w[0] * x[0] + w[1] * x[1] + w[2] * x[2] + p.b1[j];
    }
    h
}

#[inline]
fn eval(x: [f64; 3], p: &MapperParams) -> [f64; 3] {
    let mut h = hidden_pre(x, p);
    for v in &mut h {
        *v = v.max(0.0);
    }
    let mut y = [0.0; 3];
    for (c, yc) in y.iter_mut().enumerate() {
        let w = &p.w2[c];
        let mut acc = p.b2[c];
        for j in 0..HIDDEN {
            acc += w[j] * h[j];
        }
        *yc = acc.tanh();
    }
    y
}

pub fn map_pixel(x: [f64; 3], params: &MapperParams) -> Result<[f64; 3]> {
    params.check_finite()?;
    Ok(eval(x, params))
}

#[inline]
fn map_f32(px: &[f32], out: &mut [f32], p: &MapperParams) {
    let y = eval([px[0] as f64, px[1] as f64, px[2] as f64], p);
    out[0] = y[0] as f32;
    out[1] = y[1] as f32;
    out[2] = y[2] as f32;
}

const ROWS_PER_JOB: usize = 16;

pub fn map_image(img: &PixelImage, params: &MapperParams) -> Result<PixelImage> {
    params.check_finite()?;
    let mut out = vec![0.0f32; img.data().len()];
    let row = img.width() * 3;
    out.par_chunks_mut(row * ROWS_PER_JOB)
        .zip(img.data().par_chunks(row * ROWS_PER_JOB))
        .for_each(|(dst, src)| {
            for (o, i) in dst.chunks_exact_mut(3).zip(src.chunks_exact(3)) {
                map_f32(i, o, params);
            }
        });
    // tanh of a finite f64 rounds into [-1, 1] as f32
    Ok(PixelImage::from_raw_parts(img.width(), img.height(), out))
}

/// Direct 8-bit path: decode, map, encode.
pub fn map_rgb8(raw: &Rgb8Image, params: &MapperParams) -> Result<Rgb8Image> {
    params.check_finite()?;
    let mut out = vec![0u8; raw.data().len()];
    let row = raw.width() * 3;
    out.par_chunks_mut(row * ROWS_PER_JOB)
        .zip(raw.data().par_chunks(row * ROWS_PER_JOB))
        .for_each(|(dst, src)| {
            for (o, i) in dst.chunks_exact_mut(3).zip(src.chunks_exact(3)) {
                o.copy_from_slice(&map_code([i[0], i[1], i[2]], params));
            }
        });
    Rgb8Image::new(raw.width(), raw.height(), out)
}

#[inline]
fn map_code(rgb: [u8; 3], p: &MapperParams) -> [u8; 3] {
    let px = [decode_value(rgb[0]), decode_value(rgb[1]), decode_value(rgb[2])];
    let mut y = [0.0f32; 3];
    map_f32(&px, &mut y, p);
    [encode_value(y[0]), encode_value(y[1]), encode_value(y[2])]
}

const LUT_SIDE: usize = 256;

/// Exact 256³ lookup table of encoded mapper outputs.
pub struct ColorLut {
    table: Vec<u8>,
}

impl std::fmt::Debug for ColorLut {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ColorLut").field("bits", &self.bits()).finish()
    }
}

impl ColorLut {
    pub fn bits(&self) -> u32 {
        8
    }

    #[inline]
    pub fn lookup(&self, rgb: [u8; 3]) -> [u8; 3] {
        let i = lut_index(rgb);
        [self.table[i], self.table[i + 1], self.table[i + 2]]
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.table
    }
}

#[inline]
fn lut_index(rgb: [u8; 3]) -> usize {
    (((rgb[0] as usize) << 16) | ((rgb[1] as usize) << 8) | rgb[2] as usize) * 3
}

pub fn compile_lut(params: &MapperParams) -> Result<ColorLut> {
    params.check_finite()?;
    let mut table = vec![0u8; LUT_SIDE * LUT_SIDE * LUT_SIDE * 3];
    table
        .par_chunks_mut(LUT_SIDE * LUT_SIDE * 3)
        .enumerate()
        .for_each(|(r, plane)| {
            for (gb, out) in plane.chunks_exact_mut(3).enumerate() {
                let rgb = [r as u8, (gb >> 8) as u8, (gb & 0xff) as u8];
                out.copy_from_slice(&map_code(rgb, params));
            }
        });
    Ok(ColorLut { table })
}

pub fn map_image_lut(raw: &Rgb8Image, lut: &ColorLut) -> Rgb8Image {
    let mut out = vec![0u8; raw.data().len()];
    let row = raw.width() * 3;
    out.par_chunks_mut(row * ROWS_PER_JOB)
        .zip(raw.data().par_chunks(row * ROWS_PER_JOB))
        .for_each(|(dst, src)| {
            for (o, i) in dst.chunks_exact_mut(3).zip(src.chunks_exact(3)) {
                let j = lut_index([i[0], i[1], i[2]]);
                o.copy_from_slice(&lut.table[j..j + 3]);
            }
        });
    Rgb8Image::new(raw.width(), raw.height(), out).expect("dimensions copied from input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{decode_u8, encode_u8};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Straight-line scalar evaluator kept independent of `eval`.
    fn reference(x: [f64; 3], v: &[f64]) -> [f64; 3] {
        let mut hidden = Vec::new();
        for j in 0..8 {
            let s = v[j * 3] * x[0] + v[j * 3 + 1] * x[1] + v[j * 3 + 2] * x[2] + v[24 + j];
            hidden.push(if s > 0.0 { s } else { 0.0 });
        }
        let mut y = [0.0; 3];
        for c in 0..3 {
            let mut s = v[56 + c];
            for j in 0..8 {
                s += v[32 + c * 8 + j] * hidden[j];
            }
            y[c] = s.tanh();
        }
        y
    }

    fn random_params(rng: &mut impl Rng, scale: f64) -> MapperParams {
        let v: Vec<f64> = (0..PARAM_COUNT).map(|_| rng.random_range(-scale..=scale)).collect();
        unpack_params(&v).unwrap()
    }

    fn random_raw(rng: &mut impl Rng, w: usize, h: usize) -> Rgb8Image {
        let data = (0..w * h * 3).map(|_| rng.random()).collect();
        Rgb8Image::new(w, h, data).unwrap()
    }

    #[test]
    fn parameter_count_is_59() {
        assert_eq!(PARAM_COUNT, 59);
        assert_eq!(pack_params(&MapperParams::zeros()).len(), 59);
        // 7c + 3 at c = 8
        assert_eq!(7 * HIDDEN + 3, PARAM_COUNT);
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let p = MapperParams::zeros();
        for x in [[-1.0, 0.0, 1.0], [0.3, 0.3, -0.9]] {
            assert_eq!(map_pixel(x, &p).unwrap(), [0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn bias_only_network() {
        let mut p = MapperParams::zeros();
        p.b2 = [0.5, -0.5, 0.0];
        let y = map_pixel([0.7, -0.2, 0.1], &p).unwrap();
        assert!((y[0] - 0.4621).abs() < 1e-4);
        assert!((y[1] + 0.4621).abs() < 1e-4);
        assert_eq!(y[2], 0.0);
    }

    #[test]
    fn non_finite_params_are_rejected() {
        let mut p = MapperParams::zeros();
        p.w2[1][3] = f64::NAN;
        assert!(matches!(map_pixel([0.0; 3], &p), Err(Error::Numeric(_))));
        let img = PixelImage::filled(2, 2, [0.0; 3]).unwrap();
        assert!(map_image(&img, &p).is_err());
        assert!(compile_lut(&p).is_err());
    }

    #[test]
    fn matches_reference_evaluator() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let p = random_params(&mut rng, 3.0);
            let x = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            let got = map_pixel(x, &p).unwrap();
            let want = reference(x, &pack_params(&p));
            for c in 0..3 {
                assert!((got[c] - want[c]).abs() <= 1e-6);
                assert!(got[c] > -1.0 - 1e-12 && got[c] < 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn map_image_is_per_pixel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_params(&mut rng, 2.0);
        let img = decode_u8(&random_raw(&mut rng, 4, 4));
        let out = map_image(&img, &p).unwrap();
        assert_eq!((out.width(), out.height()), (4, 4));
        for (i, o) in img.pixels().zip(out.pixels()) {
            let y = map_pixel([i[0] as f64, i[1] as f64, i[2] as f64], &p).unwrap();
            assert_eq!(o, [y[0] as f32, y[1] as f32, y[2] as f32]);
        }
    }

    #[test]
    fn map_image_commutes_with_pixel_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_params(&mut rng, 2.0);
        let raw = random_raw(&mut rng, 7, 3);
        let mut perm: Vec<usize> = (0..21).collect();
        perm.reverse();
        perm.swap(2, 9);
        let permuted: Vec<u8> = perm.iter().flat_map(|&i| raw.data()[i * 3..i * 3 + 3].to_vec()).collect();
        let permuted = Rgb8Image::new(7, 3, permuted).unwrap();
        let a = map_image(&decode_u8(&raw), &p).unwrap();
        let b = map_image(&decode_u8(&permuted), &p).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(&b.data()[k * 3..k * 3 + 3], &a.data()[i * 3..i * 3 + 3]);
        }
    }

    #[test]
    fn zero_params_lut_is_mid_gray() {
        let lut = compile_lut(&MapperParams::zeros()).unwrap();
        assert!(lut.as_bytes().iter().all(|&v| v == 128));
    }

    #[test]
    fn lut_matches_direct_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let p = random_params(&mut rng, 4.5);
        let lut = compile_lut(&p).unwrap();
        for _ in 0..1000 {
            let rgb: [u8; 3] = [rng.random(), rng.random(), rng.random()];
            let raw = Rgb8Image::new(1, 1, rgb.to_vec()).unwrap();
            let direct = encode_u8(&map_image(&decode_u8(&raw), &p).unwrap());
            assert_eq!(lut.lookup(rgb), direct.pixel(0, 0));
        }
        let raw = random_raw(&mut rng, 64, 64);
        assert_eq!(
            map_image_lut(&raw, &lut),
            encode_u8(&map_image(&decode_u8(&raw), &p).unwrap())
        );
        assert_eq!(map_rgb8(&raw, &p).unwrap(), map_image_lut(&raw, &lut));
        let again = compile_lut(&p).unwrap();
        assert!(again.as_bytes() == lut.as_bytes());
    }

    #[test]
    fn constant_image_stays_constant_through_lut() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&mut rng, 1.0);
        let lut = compile_lut(&p).unwrap();
        let out = map_image_lut(&Rgb8Image::filled(9, 5, [200, 40, 90]).unwrap(), &lut);
        let first = out.pixel(0, 0);
        assert!(out.pixels().all(|px| px == first));
    }

    #[test]
    fn unpack_rejects_wrong_length() {
        assert!(matches!(unpack_params(&[0.0; 58]), Err(Error::Dimension(_))));
        assert!(unpack_params(&[0.0; 60]).is_err());
    }

    #[test]
    fn packed_layout() {
        let mut v = [0.0; PARAM_COUNT];
        v[24] = 7.0;
        let p = unpack_params(&v).unwrap();
        assert_eq!(p.b1[0], 7.0);
        assert_eq!(pack_params(&p).iter().filter(|&&x| x != 0.0).count(), 1);
        let v: Vec<f64> = (0..PARAM_COUNT).map(|i| i as f64).collect();
        let p = unpack_params(&v).unwrap();
        assert_eq!(p.w1[1], [3.0, 4.0, 5.0]);
        assert_eq!(p.w2[1][0], 40.0);
        assert_eq!(p.b2, [56.0, 57.0, 58.0]);
    }

    #[test]
    fn json_form_has_named_blocks() {
        let p = unpack_params(&(0..59).map(|i| i as f64 * 0.5).collect::<Vec<_>>()).unwrap();
        let json = p.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["w1"].as_array().unwrap().len(), 8);
        assert_eq!(v["w2"].as_array().unwrap().len(), 3);
        assert_eq!(v["w2"][0].as_array().unwrap().len(), 8);
        assert_eq!(MapperParams::from_json(&json).unwrap(), p);
    }

    proptest! {
        #[test]
        fn pack_unpack_round_trip(v in prop::collection::vec(-10.0f64..10.0, PARAM_COUNT)) {
            let p = unpack_params(&v).unwrap();
            prop_assert_eq!(pack_params(&p).to_vec(), v);
        }

        #[test]
        fn json_round_trip_is_bit_exact(v in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), PARAM_COUNT)) {
            let p = unpack_params(&v).unwrap();
            let back = MapperParams::from_json(&p.to_json()).unwrap();
            prop_assert_eq!(pack_params(&back).map(f64::to_bits), pack_params(&p).map(f64::to_bits));
        }
    }
}
