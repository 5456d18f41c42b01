//! Python bindings. Images cross the boundary as raw RGB bytes plus width
//! and height (row-major, 3 bytes per pixel), which maps directly onto
//! `numpy.frombuffer(data, numpy.uint8).reshape(height, width, 3)`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use sf::baselines;
use sf::metrics::{self, Psnr};
use sf::normalizer::plan_tiles;
use sf::training::{self, LrSchedule};

fn to_py(e: sf::Error) -> PyErr {
    match e {
        sf::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn raster(data: &[u8], width: usize, height: usize) -> PyResult<sf::Rgb8Image> {
    sf::Rgb8Image::new(width, height, data.to_vec()).map_err(to_py)
}

fn bytes<'py>(py: Python<'py>, img: &sf::Rgb8Image) -> Bound<'py, PyBytes> {
    PyBytes::new(py, img.data())
}

/// The 59 weights and biases of the per-pixel color mapper.
#[pyclass(name = "MapperParams", from_py_object)]
#[derive(Clone)]
struct PyMapperParams {
    inner: sf::MapperParams,
}

#[pymethods]
impl PyMapperParams {
    /// Unpacks a flat list in W1, b1, W2, b2 order.
    #[new]
    fn new(values: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: sf::unpack_params(&values).map_err(to_py)? })
    }

    #[staticmethod]
    fn zeros() -> Self {
        Self { inner: sf::MapperParams::zeros() }
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: sf::MapperParams::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_list(&self) -> Vec<f64> {
        sf::pack_params(&self.inner).to_vec()
    }

    fn __len__(&self) -> usize {
        sf::mapper::PARAM_COUNT
    }

    /// Maps one pixel given as three values in [-1, 1].
    fn map_pixel(&self, rgb: [f64; 3]) -> PyResult<[f64; 3]> {
        sf::map_pixel(rgb, &self.inner).map_err(to_py)
    }

    /// Maps an 8-bit RGB image pixel by pixel.
    fn apply<'py>(&self, py: Python<'py>, data: &[u8], width: usize, height: usize) -> PyResult<Bound<'py, PyBytes>> {
        let img = raster(data, width, height)?;
        let p = self.inner;
        let out = py.detach(|| sf::mapper::map_rgb8(&img, &p)).map_err(to_py)?;
        Ok(bytes(py, &out))
    }

    fn __repr__(&self) -> String {
        format!("MapperParams(max_abs={:.4})", self.inner.max_abs())
    }
}

/// Exact 256³ lookup table compiled from one parameter set.
#[pyclass(name = "ColorLut")]
struct PyColorLut {
    inner: sf::ColorLut,
}

#[pymethods]
impl PyColorLut {
    #[new]
    fn new(py: Python<'_>, params: &PyMapperParams) -> PyResult<Self> {
        let p = params.inner;
        Ok(Self { inner: py.detach(|| sf::compile_lut(&p)).map_err(to_py)? })
    }

    fn lookup(&self, rgb: [u8; 3]) -> [u8; 3] {
        self.inner.lookup(rgb)
    }

    fn apply<'py>(&self, py: Python<'py>, data: &[u8], width: usize, height: usize) -> PyResult<Bound<'py, PyBytes>> {
        let img = raster(data, width, height)?;
        let out = py.detach(|| sf::map_image_lut(&img, &self.inner));
        Ok(bytes(py, &out))
    }
}

/// Parameter-prediction network.
#[pyclass(name = "Predictor")]
struct PyPredictor {
    inner: sf::PredictorWeights,
}

#[pymethods]
impl PyPredictor {
    /// Loads and validates a PNWT weights file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let store = sf::WeightStore::read_file(path.as_ref()).map_err(to_py)?;
        Ok(Self { inner: sf::PredictorWeights::from_store(&store).map_err(to_py)? })
    }

    /// Seeded random fixture weights.
    #[staticmethod]
    fn seeded(seed: u64) -> PyResult<Self> {
        let store = sf::predictor::init_weights(seed);
        Ok(Self { inner: sf::PredictorWeights::from_store(&store).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (alpha = 4.5))]
    fn zero(alpha: f32) -> PyResult<Self> {
        let store = sf::predictor::zero_weights(alpha);
        Ok(Self { inner: sf::PredictorWeights::from_store(&store).map_err(to_py)? })
    }

    #[getter]
    fn alpha(&self) -> f32 {
        self.inner.alpha()
    }

    fn predict(&self, py: Python<'_>, data: &[u8], width: usize, height: usize) -> PyResult<PyMapperParams> {
        let img = sf::decode_u8(&raster(data, width, height)?);
        let inner = py.detach(|| sf::predict_params(&img, &self.inner)).map_err(to_py)?;
        Ok(PyMapperParams { inner })
    }

    /// Predicts parameters from the image and maps it at full resolution.
    #[pyo3(signature = (data, width, height, lut = false))]
    fn normalize<'py>(&self, py: Python<'py>, data: &[u8], width: usize, height: usize, lut: bool) -> PyResult<Bound<'py, PyBytes>> {
        let img = raster(data, width, height)?;
        let out = py
            .detach(|| -> sf::Result<sf::Rgb8Image> {
                let params = sf::predict_params(&sf::decode_u8(&img), &self.inner)?;
                if lut {
                    Ok(sf::map_image_lut(&img, &sf::compile_lut(&params)?))
                } else {
                    sf::mapper::map_rgb8(&img, &params)
                }
            })
            .map_err(to_py)?;
        Ok(bytes(py, &out))
    }
}

/// Reads a PNG or binary PPM file as `(data, width, height)`.
#[pyfunction]
fn read_raster<'py>(py: Python<'py>, path: &str) -> PyResult<(Bound<'py, PyBytes>, usize, usize)> {
    let img = sf::raster::read_raster(path.as_ref()).map_err(to_py)?;
    Ok((bytes(py, &img), img.width(), img.height()))
}

#[pyfunction]
fn write_raster(path: &str, data: &[u8], width: usize, height: usize) -> PyResult<()> {
    sf::raster::write_raster(path.as_ref(), &raster(data, width, height)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (a, b, width, height, grayscale = false))]
fn ssim(a: &[u8], b: &[u8], width: usize, height: usize, grayscale: bool) -> PyResult<f64> {
    metrics::ssim(&raster(a, width, height)?, &raster(b, width, height)?, grayscale).map_err(to_py)
}

#[pyfunction]
fn qssim(a: &[u8], b: &[u8], width: usize, height: usize) -> PyResult<f64> {
    metrics::qssim(&raster(a, width, height)?, &raster(b, width, height)?).map_err(to_py)
}

/// PSNR in dB; identical images give `float("inf")`.
#[pyfunction]
fn psnr(a: &[u8], b: &[u8], width: usize, height: usize) -> PyResult<f64> {
    Ok(match metrics::psnr(&raster(a, width, height)?, &raster(b, width, height)?).map_err(to_py)? {
        Psnr::Finite(v) => v,
        Psnr::Infinite => f64::INFINITY,
    })
}

/// Reinhard lαβ statistics as `(mean, std)`.
#[pyfunction]
fn reinhard_fit(data: &[u8], width: usize, height: usize) -> PyResult<([f64; 3], [f64; 3])> {
    let s = baselines::reinhard_fit(&sf::decode_u8(&raster(data, width, height)?));
    Ok((s.mean, s.std))
}

/// Matches the image's lαβ statistics to `target = (mean, std)`.
#[pyfunction]
fn reinhard_normalize<'py>(
    py: Python<'py>,
    data: &[u8],
    width: usize,
    height: usize,
    target: ([f64; 3], [f64; 3]),
) -> PyResult<Bound<'py, PyBytes>> {
    let img = sf::decode_u8(&raster(data, width, height)?);
    let tgt = baselines::ReinhardStats { mean: target.0, std: target.1 };
    let out = sf::encode_u8(&baselines::reinhard_apply(&img, &baselines::reinhard_fit(&img), &tgt));
    Ok(bytes(py, &out))
}

/// Macenko stain basis as `(stain_matrix rows, max_conc)`.
#[pyfunction]
fn macenko_fit(data: &[u8], width: usize, height: usize) -> PyResult<([[f64; 2]; 3], [f64; 2])> {
    let b = baselines::macenko_fit(&sf::decode_u8(&raster(data, width, height)?)).map_err(to_py)?;
    Ok((b.stain_matrix, b.max_conc))
}

#[pyfunction]
fn macenko_normalize<'py>(
    py: Python<'py>,
    data: &[u8],
    width: usize,
    height: usize,
    target: ([[f64; 2]; 3], [f64; 2]),
) -> PyResult<Bound<'py, PyBytes>> {
    let img = sf::decode_u8(&raster(data, width, height)?);
    let src = baselines::macenko_fit(&img).map_err(to_py)?;
    let tgt = baselines::StainBasis { stain_matrix: target.0, max_conc: target.1 };
    Ok(bytes(py, &sf::encode_u8(&baselines::macenko_apply(&img, &src, &tgt))))
}

/// Tile rectangles `(x0, y0, width, height)` covering a slide.
#[pyfunction]
fn tiles(width: usize, height: usize, tile: usize) -> PyResult<Vec<(usize, usize, usize, usize)>> {
    Ok(plan_tiles(width, height, tile)
        .map_err(to_py)?
        .into_iter()
        .map(|r| (r.x0, r.y0, r.width, r.height))
        .collect())
}

#[pyfunction]
fn lr_at(peak: f64, warmup_iters: u64, total_iters: u64, iter: u64) -> PyResult<f64> {
    let sched = LrSchedule::new(peak, warmup_iters, total_iters).map_err(to_py)?;
    training::lr_at(&sched, iter).map_err(to_py)
}

/// Fits a mapper to aligned source/target images; returns
/// `(params, final_mse)`.
#[pyfunction]
#[pyo3(signature = (source, target, width, height, iters = 5000, seed = 0))]
fn fit_mapper(
    py: Python<'_>,
    source: &[u8],
    target: &[u8],
    width: usize,
    height: usize,
    iters: u64,
    seed: u64,
) -> PyResult<(PyMapperParams, f64)> {
    let s = sf::decode_u8(&raster(source, width, height)?);
    let t = sf::decode_u8(&raster(target, width, height)?);
    let pairs = training::pairs_from_images(&s, &t).map_err(to_py)?;
    let sched = LrSchedule::supervised(iters).map_err(to_py)?;
    let fit = py.detach(|| training::fit_mapper(&pairs, &sched, seed)).map_err(to_py)?;
    Ok((PyMapperParams { inner: fit.params }, fit.final_mse))
}

/// `(name, shape)` of every tensor a predictor weights file must hold.
#[pyfunction]
fn expected_tensors() -> Vec<(String, Vec<usize>)> {
    sf::predictor::expected_tensors()
}

#[pymodule]
fn stainforge(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PARAM_COUNT", sf::mapper::PARAM_COUNT)?;
    m.add_class::<PyMapperParams>()?;
    m.add_class::<PyColorLut>()?;
    m.add_class::<PyPredictor>()?;
    m.add_function(wrap_pyfunction!(read_raster, m)?)?;
    m.add_function(wrap_pyfunction!(write_raster, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(qssim, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(reinhard_fit, m)?)?;
    m.add_function(wrap_pyfunction!(reinhard_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(macenko_fit, m)?)?;
    m.add_function(wrap_pyfunction!(macenko_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(tiles, m)?)?;
    m.add_function(wrap_pyfunction!(lr_at, m)?)?;
    m.add_function(wrap_pyfunction!(fit_mapper, m)?)?;
    m.add_function(wrap_pyfunction!(expected_tensors, m)?)?;
    Ok(())
}
