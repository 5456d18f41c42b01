//! Stain normalization with a dynamic-parameter color mapper.
//!
//! A ResNet18-style predictor looks at a 128×128 thumbnail of an image and
//! emits the 59 weights and biases of a two-layer 1×1 convolutional mapper,
//! which is then applied to every pixel at full resolution. Around that core
//! the crate provides an exact 256³ LUT fast path, a tiled whole-slide
//! pipeline, Reinhard and Macenko baselines, SSIM/QSSIM/PSNR metrics, the
//! adversarial-framework loss functions, and a gradient-checked trainer for
//! the mapper alone.

pub mod baselines;
pub mod error;
pub mod image;
pub mod mapper;
pub mod metrics;
pub mod normalizer;
pub mod predictor;
pub mod raster;
pub mod training;
pub mod weights;

pub use error::{Error, Result};
pub use image::{decode_u8, encode_u8, PixelImage, Rgb8Image, Tile};
pub use mapper::{
    compile_lut, map_image, map_image_lut, map_pixel, pack_params, unpack_params, ColorLut,
    MapperParams,
};
pub use predictor::{downsample_128, normalize_one, predict_params, PredictorWeights};
pub use weights::{load_weights, save_weights, Tensor, WeightStore};
