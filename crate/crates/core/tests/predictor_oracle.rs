//! The predictor forward pass against a straight-line f64 reference that
//! reads tensors by name and convolves with plain nested loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stainforge::mapper::{map_image, pack_params};
use stainforge::predictor::{downsample_128, init_weights, normalize_one, predict_params, PredictorWeights};
use stainforge::{PixelImage, Tensor, WeightStore};

struct Vol {
    c: usize,
    h: usize,
    w: usize,
    d: Vec<f64>,
}

impl Vol {
    fn at(&self, c: usize, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y >= self.h as isize || x >= self.w as isize {
            0.0
        } else {
            self.d[(c * self.h + y as usize) * self.w + x as usize]
        }
    }
}

fn conv(store: &WeightStore, name: &str, x: &Vol, stride: usize, pad: usize) -> Vol {
    let w = store.get(&format!("{name}.weight")).unwrap();
    let b = store.get(&format!("{name}.bias")).unwrap();
    let (oc, ic, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    assert_eq!(ic, x.c);
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let mut d = vec![0.0; oc * oh * ow];
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b.values()[o] as f64;
                for i in 0..ic {
                    for ky in 0..k {
                        for kx in 0..k {
                            let wv = w.values()[((o * ic + i) * k + ky) * k + kx] as f64;
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let xx = (ox * stride + kx) as isize - pad as isize;
                            acc += wv * x.at(i, y, xx);
                        }
                    }
                }
                d[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Vol { c: oc, h: oh, w: ow, d }
}

fn relu(mut v: Vol) -> Vol {
    v.d.iter_mut().for_each(|x| *x = x.max(0.0));
    v
}

fn reference_head(store: &WeightStore, img: &PixelImage) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let mut d = vec![0.0; 3 * h * w];
    for (p, px) in img.pixels().enumerate() {
        for c in 0..3 {
            d[c * h * w + p] = px[c] as f64;
        }
    }
    let mut x = relu(conv(store, "stem.conv", &Vol { c: 3, h, w, d }, 2, 3));
    // 3x3/2 max pool, pad 1
    let (ph, pw) = ((x.h - 1) / 2 + 1, (x.w - 1) / 2 + 1);
    let mut pooled = vec![f64::NEG_INFINITY; x.c * ph * pw];
    for c in 0..x.c {
        for oy in 0..ph {
            for ox in 0..pw {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let (y, xx) = ((oy * 2 + ky) as isize - 1, (ox * 2 + kx) as isize - 1);
                        if y >= 0 && xx >= 0 && (y as usize) < x.h && (xx as usize) < x.w {
                            let v = x.at(c, y, xx);
                            let slot = &mut pooled[(c * ph + oy) * pw + ox];
                            *slot = slot.max(v);
                        }
                    }
                }
            }
        }
    }
    x = Vol { c: x.c, h: ph, w: pw, d: pooled };
    for stage in 1..=4 {
        for block in 0..2 {
            let name = format!("stage{stage}.block{block}");
            let stride = if stage > 1 && block == 0 { 2 } else { 1 };
            let y = conv(store, &format!("{name}.conv2"), &relu(conv(store, &format!("{name}.conv1"), &x, stride, 1)), 1, 1);
            let skip = if store.get(&format!("{name}.shortcut.weight")).is_some() {
                conv(store, &format!("{name}.shortcut"), &x, stride, 0)
            } else {
                x
            };
            x = relu(Vol { d: y.d.iter().zip(&skip.d).map(|(a, b)| a + b).collect(), ..y });
        }
    }
    let plane = (x.h * x.w) as f64;
    let gap: Vec<f64> = x.d.chunks(x.h * x.w).map(|ch| ch.iter().sum::<f64>() / plane).collect();
    let fw = store.get("head.fc.weight").unwrap();
    let fb = store.get("head.fc.bias").unwrap();
    let alpha = store.get("alpha").unwrap().values()[0] as f64;
    (0..59)
        .map(|o| {
            let z = fb.values()[o] as f64
                + (0..512).map(|i| fw.values()[o * 512 + i] as f64 * gap[i]).sum::<f64>();
            alpha * z.tanh()
        })
        .collect()
}

/// Half-pixel bilinear resampling written out per output pixel.
fn naive_resize(img: &PixelImage, ow: usize, oh: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let get = |x: usize, y: usize, c: usize| img.data()[(y * w + x) * 3 + c] as f64;
    let mut out = Vec::new();
    for oy in 0..oh {
        for ox in 0..ow {
            let sx = ((ox as f64 + 0.5) * w as f64 / ow as f64 - 0.5).max(0.0).min((w - 1) as f64);
            let sy = ((oy as f64 + 0.5) * h as f64 / oh as f64 - 0.5).max(0.0).min((h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            for c in 0..3 {
                out.push(
                    (1.0 - fy) * ((1.0 - fx) * get(x0, y0, c) + fx * get(x1, y0, c))
                        + fy * ((1.0 - fx) * get(x0, y1, c) + fx * get(x1, y1, c)),
                );
            }
        }
    }
    out
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> PixelImage {
    PixelImage::new(w, h, (0..w * h * 3).map(|_| rng.random_range(-1.0f32..=1.0)).collect()).unwrap()
}

#[test]
fn forward_matches_f64_reference() {
    let store = init_weights(11);
    let weights = PredictorWeights::from_store(&store).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let img = random_image(&mut rng, 8, 8);
    let got = pack_params(&predict_params(&img, &weights).unwrap());
    let want = reference_head(&store, &downsample_128(&img));
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-4, "{g} vs {w}");
    }
}

#[test]
fn downsample_matches_naive_resampler() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for (w, h) in [(256, 256), (300, 170), (97, 128), (40, 12)] {
        let img = random_image(&mut rng, w, h);
        let got = downsample_128(&img);
        assert_eq!((got.width(), got.height()), (128, 128));
        for (g, n) in got.data().iter().zip(naive_resize(&img, 128, 128)) {
            assert!((*g as f64 - n).abs() < 1e-6);
        }
    }
}

#[test]
fn pixel_checkerboard_halves_to_mid_gray() {
    let data = (0..256 * 256)
        .flat_map(|i| {
            let v = if (i % 256 + i / 256) % 2 == 0 { -1.0 } else { 1.0 };
            [v; 3]
        })
        .collect();
    let small = downsample_128(&PixelImage::new(256, 256, data).unwrap());
    assert!(small.data().iter().all(|&v| v.abs() < 1e-6));
}

#[test]
fn outputs_stay_within_alpha() {
    let mut store = init_weights(3);
    // scale the head so tanh saturates
    let fc = store.get("head.fc.weight").unwrap().clone();
    store.set("head.fc.weight", Tensor::new(fc.shape().to_vec(), fc.values().iter().map(|v| v * 1e4).collect()).unwrap());
    let weights = PredictorWeights::from_store(&store).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..3 {
        let p = pack_params(&predict_params(&random_image(&mut rng, 64, 48), &weights).unwrap());
        assert!(p.iter().all(|v| v.abs() <= 4.5));
        assert!(p.iter().any(|v| v.abs() > 4.0));
    }
}

#[test]
fn constant_images_predict_alike_at_any_size() {
    let weights = PredictorWeights::from_store(&init_weights(4)).unwrap();
    let a = predict_params(&PixelImage::filled(16, 16, [0.3, -0.2, 0.5]).unwrap(), &weights).unwrap();
    let b = predict_params(&PixelImage::filled(500, 333, [0.3, -0.2, 0.5]).unwrap(), &weights).unwrap();
    assert_eq!(a, b);
}

#[test]
fn normalize_one_is_predict_then_map() {
    let weights = PredictorWeights::from_store(&init_weights(9)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let img = random_image(&mut rng, 70, 50);
    let p = predict_params(&img, &weights).unwrap();
    assert_eq!(normalize_one(&img, &weights).unwrap(), map_image(&img, &p).unwrap());
}
