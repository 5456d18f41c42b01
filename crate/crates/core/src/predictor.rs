//! Parameter prediction network: a ResNet18 without normalization layers,
//! every convolution biased, run on a 128×128 downsample of the input. Its
//! 59 outputs pass through `tanh` and are scaled by the learned `alpha`.
//!
//! Tensor names in a weights file:
//!
//! | name | shape |
//! |---|---|
//! | `stem.conv.weight` / `.bias` | `[64, 3, 7, 7]` / `[64]` |
//! | `stage{s}.block{b}.conv{1,2}.weight` / `.bias` | `[out, in, 3, 3]` / `[out]` |
//! | `stage{s}.block0.shortcut.weight` / `.bias` (s = 2..4) | `[out, in, 1, 1]` / `[out]` |
//! | `head.fc.weight` / `.bias` | `[59, 512]` / `[59]` |
//! | `alpha` | `[1]` |

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{resize_bilinear, PixelImage};
use crate::mapper::{map_image, unpack_params, MapperParams, PARAM_COUNT};
use crate::weights::{Tensor, WeightStore};

pub const INPUT_SIZE: usize = 128;
pub const STAGE_WIDTHS: [usize; 4] = [64, 128, 256, 512];
pub const BLOCKS_PER_STAGE: usize = 2;
pub const DEFAULT_ALPHA: f32 = 4.5;

#[derive(Debug, Clone, Copy)]
struct ConvSpec {
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    pad: usize,
}

impl ConvSpec {
    fn fan_in(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_c, self.in_c, self.k, self.k]
    }
}

/// Every convolution in forward order, with its tensor-name prefix.
fn conv_layout() -> Vec<(String, ConvSpec)> {
    let mut out = vec![(
        "stem.conv".to_owned(),
        ConvSpec { out_c: 64, in_c: 3, k: 7, stride: 2, pad: 3 },
    )];
    let mut in_c = 64;
    for (s, &width) in STAGE_WIDTHS.iter().enumerate() {
        for b in 0..BLOCKS_PER_STAGE {
            let stride = if s > 0 && b == 0 { 2 } else { 1 };
            let prefix = format!("stage{}.block{b}", s + 1);
            out.push((
                format!("{prefix}.conv1"),
                ConvSpec { out_c: width, in_c, k: 3, stride, pad: 1 },
            ));
            out.push((
                format!("{prefix}.conv2"),
                ConvSpec { out_c: width, in_c: width, k: 3, stride: 1, pad: 1 },
            ));
            if in_c != width || stride != 1 {
                out.push((
                    format!("{prefix}.shortcut"),
                    ConvSpec { out_c: width, in_c, k: 1, stride, pad: 0 },
                ));
            }
            in_c = width;
        }
    }
    out
}

const FC_IN: usize = 512;

/// Tensor names and shapes a complete predictor weights file must contain.
pub fn expected_tensors() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (prefix, spec) in conv_layout() {
        out.push((format!("{prefix}.weight"), spec.weight_shape()));
        out.push((format!("{prefix}.bias"), vec![spec.out_c]));
    }
    out.push(("head.fc.weight".into(), vec![PARAM_COUNT, FC_IN]));
    out.push(("head.fc.bias".into(), vec![PARAM_COUNT]));
    out.push(("alpha".into(), vec![1]));
    out
}

/// Seeded fixture weights: every weight and bias uniform in `[-k, k]` with
/// `k = 1/sqrt(fan_in)` of its layer, `alpha = 4.5`.
pub fn init_weights(seed: u64) -> WeightStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = WeightStore::new();
    for (name, shape) in expected_tensors() {
        if name == "alpha" {
            store.set(name, Tensor::scalar(DEFAULT_ALPHA));
            continue;
        }
        let fan_in = if name.starts_with("head.") {
            FC_IN
        } else {
            let layer = name.rsplit_once('.').map(|(p, _)| p).unwrap_or(&name);
            conv_layout()
                .into_iter()
                .find(|(p, _)| p == layer)
                .map(|(_, s)| s.fan_in())
                .expect("layout names cover every conv tensor")
        };
        let k = 1.0 / (fan_in as f32).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-k..=k)).collect();
        store.set(name, Tensor::new(shape, values).expect("shape matches count"));
    }
    store
}

/// All weights and biases zero.
pub fn zero_weights(alpha: f32) -> WeightStore {
    let mut store = WeightStore::new();
    for (name, shape) in expected_tensors() {
        let t = if name == "alpha" {
            Tensor::scalar(alpha)
        } else {
            let n = shape.iter().product();
            Tensor::new(shape, vec![0.0; n]).expect("shape matches count")
        };
        store.set(name, t);
    }
    store
}

#[derive(Debug, Clone)]
struct Conv {
    spec: ConvSpec,
    weight: Vec<f32>,
    bias: Vec<f32>,
}

#[derive(Debug, Clone)]
struct Block {
    conv1: Conv,
    conv2: Conv,
    shortcut: Option<Conv>,
}

/// Validated predictor weights, laid out for the forward pass.
#[derive(Debug, Clone)]
pub struct PredictorWeights {
    stem: Conv,
    blocks: Vec<Block>,
    fc_weight: Vec<f32>,
    fc_bias: Vec<f32>,
    alpha: f32,
}

fn take(store: &WeightStore, name: &str, shape: &[usize]) -> Result<Vec<f32>> {
    let t = store.require(name)?;
    if t.shape() != shape {
        return Err(Error::Shape {
            name: name.to_owned(),
            expected: shape.to_vec(),
            found: t.shape().to_vec(),
        });
    }
    Ok(t.values().to_vec())
}

fn take_conv(store: &WeightStore, prefix: &str, spec: ConvSpec) -> Result<Conv> {
    Ok(Conv {
        spec,
        weight: take(store, &format!("{prefix}.weight"), &spec.weight_shape())?,
        bias: take(store, &format!("{prefix}.bias"), &[spec.out_c])?,
    })
}

impl PredictorWeights {
    pub fn from_store(store: &WeightStore) -> Result<Self> {
        let mut layout = conv_layout().into_iter();
        let (prefix, spec) = layout.next().expect("stem is first");
        let stem = take_conv(store, &prefix, spec)?;
        let mut blocks: Vec<Block> = Vec::new();
        for (prefix, spec) in layout {
            let conv = take_conv(store, &prefix, spec)?;
            if prefix.ends_with(".conv1") {
                blocks.push(Block { conv1: conv.clone(), conv2: conv, shortcut: None });
            } else {
                let block = blocks.last_mut().expect("conv1 precedes conv2 and shortcut");
                if prefix.ends_with(".conv2") {
                    block.conv2 = conv;
                } else {
                    block.shortcut = Some(conv);
                }
            }
        }
        let fc_weight = take(store, "head.fc.weight", &[PARAM_COUNT, FC_IN])?;
        let fc_bias = take(store, "head.fc.bias", &[PARAM_COUNT])?;
        let alpha_t = store.require("alpha")?;
        if alpha_t.values().len() != 1 {
            return Err(Error::Shape {
                name: "alpha".into(),
                expected: vec![1],
                found: alpha_t.shape().to_vec(),
            });
        }
        let alpha = alpha_t.values()[0];
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Weights(format!("alpha must be finite and > 0, got {alpha}")));
        }
        let weights = Self { stem, blocks, fc_weight, fc_bias, alpha };
        if !weights.all_finite() {
            return Err(Error::Weights("predictor weights contain non-finite values".into()));
        }
        Ok(weights)
    }

    pub fn alpha(&self) -> f32 {
        self.alpha
    }

    fn all_finite(&self) -> bool {
        let convs = std::iter::once(&self.stem).chain(
            self.blocks
                .iter()
                .flat_map(|b| [Some(&b.conv1), Some(&b.conv2), b.shortcut.as_ref()])
                .flatten(),
        );
        convs
            .flat_map(|c| c.weight.iter().chain(&c.bias))
            .chain(&self.fc_weight)
            .chain(&self.fc_bias)
            .all(|v| v.is_finite())
    }
}

/// Channel-major activation volume.
#[derive(Debug, Clone)]
struct Volume {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Volume {
    fn from_image(img: &PixelImage) -> Self {
        let (h, w) = (img.height(), img.width());
        let mut data = vec![0.0; 3 * h * w];
        for (p, px) in img.pixels().enumerate() {
            for c in 0..3 {
                data[c * h * w + p] = px[c];
            }
        }
        Self { c: 3, h, w, data }
    }

    fn relu(mut self) -> Self {
        for v in &mut self.data {
            *v = v.max(0.0);
        }
        self
    }
}

fn conv2d(input: &Volume, conv: &Conv) -> Volume {
    let s = conv.spec;
    debug_assert_eq!(input.c, s.in_c);
    let out_h = (input.h + 2 * s.pad - s.k) / s.stride + 1;
    let out_w = (input.w + 2 * s.pad - s.k) / s.stride + 1;
    let positions = out_h * out_w;
    let depth = s.fan_in();

    let owned;
    let cols: &[f32] = if s.k == 1 && s.stride == 1 && s.pad == 0 {
        &input.data
    } else {
        let mut buf = vec![0.0f32; depth * positions];
        for ci in 0..s.in_c {
            let plane = &input.data[ci * input.h * input.w..(ci + 1) * input.h * input.w];
            for ky in 0..s.k {
                for kx in 0..s.k {
                    let row = ((ci * s.k + ky) * s.k + kx) * positions;
                    let dst = &mut buf[row..row + positions];
                    for oy in 0..out_h {
                        let iy = (oy * s.stride + ky) as isize - s.pad as isize;
                        if iy < 0 || iy >= input.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * input.w..(iy as usize + 1) * input.w];
                        for ox in 0..out_w {
                            let ix = (ox * s.stride + kx) as isize - s.pad as isize;
                            if ix >= 0 && ix < input.w as isize {
                                dst[oy * out_w + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        owned = buf;
        &owned
    };

    let mut out = vec![0.0f32; s.out_c * positions];
    for (o, row) in out.chunks_exact_mut(positions).enumerate() {
        row.fill(conv.bias[o]);
    }
    // SAFETY: a is out_c×depth, b is depth×positions, c is out_c×positions,
    // all row-major with the strides given, and the slices are that long.
    unsafe {
        matrixmultiply::sgemm(
            s.out_c,
            depth,
            positions,
            1.0,
            conv.weight.as_ptr(),
            depth as isize,
            1,
            cols.as_ptr(),
            positions as isize,
            1,
            1.0,
            out.as_mut_ptr(),
            positions as isize,
            1,
        );
    }
    Volume { c: s.out_c, h: out_h, w: out_w, data: out }
}

/// 3×3 stride-2 max pool with one pixel of padding.
fn max_pool(input: &Volume) -> Volume {
    let out_h = (input.h + 2 - 3) / 2 + 1;
    let out_w = (input.w + 2 - 3) / 2 + 1;
    let mut data = vec![f32::NEG_INFINITY; input.c * out_h * out_w];
    for c in 0..input.c {
        let plane = &input.data[c * input.h * input.w..(c + 1) * input.h * input.w];
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut m = f32::NEG_INFINITY;
                for ky in 0..3 {
                    let iy = (oy * 2 + ky) as isize - 1;
                    if iy < 0 || iy >= input.h as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let ix = (ox * 2 + kx) as isize - 1;
                        if ix >= 0 && ix < input.w as isize {
                            m = m.max(plane[iy as usize * input.w + ix as usize]);
                        }
                    }
                }
                data[(c * out_h + oy) * out_w + ox] = m;
            }
        }
    }
    Volume { c: input.c, h: out_h, w: out_w, data }
}

fn basic_block(x: Volume, block: &Block) -> Volume {
    let y = conv2d(&conv2d(&x, &block.conv1).relu(), &block.conv2);
    let skip = match &block.shortcut {
        Some(sc) => conv2d(&x, sc),
        None => x,
    };
    let mut out = y;
    for (o, s) in out.data.iter_mut().zip(&skip.data) {
        *o += s;
    }
    out.relu()
}

pub fn downsample_128(img: &PixelImage) -> PixelImage {
    resize_bilinear(img, INPUT_SIZE, INPUT_SIZE).expect("target size is non-zero")
}

/// Raw head outputs before the `tanh`/`alpha` bound, on an already
/// downsampled image.
fn head_outputs(small: &PixelImage, weights: &PredictorWeights) -> Vec<f32> {
    let mut x = conv2d(&Volume::from_image(small), &weights.stem).relu();
    x = max_pool(&x);
    for block in &weights.blocks {
        x = basic_block(x, block);
    }
    let plane = x.h * x.w;
    let pooled: Vec<f32> = x
        .data
        .chunks_exact(plane)
        .map(|ch| (ch.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
        .collect();
    weights
        .fc_weight
        .chunks_exact(FC_IN)
        .zip(&weights.fc_bias)
        .map(|(row, b)| b + row.iter().zip(&pooled).map(|(w, v)| w * v).sum::<f32>())
        .collect()
}

pub fn predict_params(img: &PixelImage, weights: &PredictorWeights) -> Result<MapperParams> {
    let small = downsample_128(img);
    let raw = head_outputs(&small, weights);
    let alpha = weights.alpha as f64;
    let bounded: Vec<f64> = raw.iter().map(|&v| alpha * (v as f64).tanh()).collect();
    if bounded.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("predictor produced non-finite parameters".into()));
    }
    unpack_params(&bounded)
}

pub fn normalize_one(img: &PixelImage, weights: &PredictorWeights) -> Result<PixelImage> {
    let params = predict_params(img, weights)?;
    map_image(img, &params)
}
