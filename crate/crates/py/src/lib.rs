//! Python bindings: textures, the generator, the bundled toy detector and
//! the evaluation metrics.

use std::path::PathBuf;

use advtex_autograd::Tensor;
use advtex_core::bbox::{BBox, Detection};
use advtex_core::detector::{detect_eval, DetectorAdapter, ToyDetector, NMS_IOU};
use advtex_core::evaluation::{self, IOU_MATCH, MASR_THRESHOLDS};
use advtex_core::generator::{Generator as CoreGenerator, GeneratorSpec};
use advtex_core::io::imageio::{export_texture, load_texture};
use advtex_core::objectives;
use advtex_core::pipeline::{load_generator, load_latent_unit, save_latent_unit, synthesize_texture, RunConfig};
use advtex_core::torus::{self, LocalLatentPattern, TexturePattern};
use advtex_core::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Image { .. } | Error::CorruptDataset { .. } => PyOSError::new_err(e.to_string()),
        Error::Divergence { .. } | Error::Capability(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Nested = Vec<Vec<Vec<f64>>>;

fn from_nested(data: Nested) -> PyResult<Tensor> {
    let c = data.len();
    let h = data.first().map_or(0, Vec::len);
    let w = data.first().and_then(|p| p.first()).map_or(0, Vec::len);
    if data.iter().any(|p| p.len() != h || p.iter().any(|r| r.len() != w)) {
        return Err(PyValueError::new_err("array must be rectangular"));
    }
    Ok(Tensor::new(&[c, h, w], data.into_iter().flatten().flatten().collect()))
}

fn to_nested(t: &Tensor) -> Nested {
    let s = t.shape();
    let (h, w) = (s[1], s[2]);
    t.data()
        .chunks(h * w)
        .map(|plane| plane.chunks(w).map(<[f64]>::to_vec).collect())
        .collect()
}

fn preset(name: &str) -> PyResult<RunConfig> {
    match name {
        "desk" => Ok(RunConfig::desk()),
        "full" => Ok(RunConfig::full()),
        other => Err(PyValueError::new_err(format!(
            "unknown preset {other:?}; use \"desk\" or \"full\""
        ))),
    }
}

/// An RGB texture of shape `(3, H, W)` with values in `[0, 1]`.
#[pyclass(module = "advtex", frozen)]
pub struct Texture(TexturePattern);

#[pymethods]
impl Texture {
    #[new]
    fn new(data: Nested) -> PyResult<Self> {
        Ok(Self(TexturePattern::new(from_nested(data)?).map_err(py_err)?))
    }

    #[staticmethod]
    fn constant(height: usize, width: usize, rgb: [f64; 3]) -> PyResult<Self> {
        Ok(Self(TexturePattern::constant(height, width, rgb).map_err(py_err)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(load_texture(&path).map_err(py_err)?))
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (3, self.0.height(), self.0.width())
    }

    fn tolist(&self) -> Nested {
        to_nested(self.0.tensor())
    }

    /// Window of the periodic tiling starting at `(row, col)`.
    fn crop_torus(&self, row: i64, col: i64, rows: usize, cols: usize) -> PyResult<Self> {
        Ok(Self(self.0.crop_torus(row, col, rows, cols).map_err(py_err)?))
    }

    fn tile(&self, reps_rows: usize, reps_cols: usize) -> PyResult<Self> {
        Ok(Self(self.0.tile(reps_rows, reps_cols).map_err(py_err)?))
    }

    fn tv_loss(&self) -> PyResult<f64> {
        objectives::tv_loss(&self.0).map_err(py_err)
    }

    /// Writes a PNG; with `preview` also a 3×3 tiled copy. Returns the
    /// preview path when written.
    #[pyo3(signature = (path, preview = false))]
    fn save(&self, path: PathBuf, preview: bool) -> PyResult<Option<PathBuf>> {
        export_texture(&self.0, &path, preview, &[]).map_err(py_err)
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }

    fn __repr__(&self) -> String {
        format!("Texture(3×{}×{})", self.0.height(), self.0.width())
    }
}

/// A toroidal latent unit of shape `(C, n, n)`.
#[pyclass(module = "advtex", frozen)]
pub struct LatentUnit(LocalLatentPattern);

#[pymethods]
impl LatentUnit {
    #[new]
    fn new(data: Nested) -> PyResult<Self> {
        Ok(Self(LocalLatentPattern::new(from_nested(data)?).map_err(py_err)?))
    }

    #[staticmethod]
    #[pyo3(signature = (channels, side, seed = 0))]
    fn random(channels: usize, side: usize, seed: u64) -> PyResult<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = advtex_core::pipeline::init_local_latent(&mut rng, channels, side).map_err(py_err)?;
        Ok(Self(unit))
    }

    /// Loads a unit saved for `generator`.
    #[staticmethod]
    fn load(path: PathBuf, generator: &Generator) -> PyResult<Self> {
        Ok(Self(load_latent_unit(&path, generator.0.spec()).map_err(py_err)?))
    }

    fn save(&self, path: PathBuf, generator: &Generator) -> PyResult<()> {
        save_latent_unit(&path, &self.0, generator.0.spec()).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.0.channels(), self.0.side(), self.0.side())
    }

    fn tolist(&self) -> Nested {
        to_nested(self.0.tensor())
    }
}

/// A fully convolutional texture generator.
#[pyclass(module = "advtex", frozen)]
pub struct Generator(CoreGenerator);

#[pymethods]
impl Generator {
    /// Randomly initialized generator of a preset architecture.
    #[new]
    #[pyo3(signature = (preset = "desk", seed = 0))]
    fn new(preset: &str, seed: u64) -> PyResult<Self> {
        let spec = match preset {
            "desk" => GeneratorSpec::desk(),
            "full" => GeneratorSpec::full(),
            other => return Err(PyValueError::new_err(format!("unknown preset {other:?}"))),
        };
        let g = CoreGenerator::build(spec, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(py_err)?;
        Ok(Self(g))
    }

    /// Restores the generator of a training checkpoint.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self(load_generator(&path, None).map_err(py_err)?.generator))
    }

    #[getter]
    fn latent_channels(&self) -> usize {
        self.0.spec().latent_channels
    }

    #[getter]
    fn expansion(&self) -> usize {
        self.0.expansion()
    }

    #[getter]
    fn border_margin(&self) -> usize {
        self.0.border_margin()
    }

    fn output_size(&self, height: usize, width: usize) -> (usize, usize) {
        self.0.output_size(height, width)
    }

    /// Texture from a latent of `sides` cells: the tiled `unit` when given,
    /// otherwise a standard-normal sample drawn with `seed`.
    #[pyo3(signature = (sides, unit = None, seed = 0))]
    fn synthesize(&self, sides: (usize, usize), unit: Option<&LatentUnit>, seed: u64) -> PyResult<Texture> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = synthesize_texture(&self.0, unit.map(|u| &u.0), sides, &mut rng).map_err(py_err)?;
        Ok(Texture(t))
    }
}

/// The bundled toy person detector.
#[pyclass(module = "advtex", frozen)]
pub struct ToyPersonDetector(ToyDetector);

#[pymethods]
impl ToyPersonDetector {
    #[new]
    #[pyo3(signature = (weights = None))]
    fn new(weights: Option<PathBuf>) -> PyResult<Self> {
        let det = match weights {
            Some(p) => ToyDetector::load(&p),
            None => ToyDetector::bundled(),
        };
        Ok(Self(det.map_err(py_err)?))
    }

    #[getter]
    fn input_size(&self) -> (usize, usize) {
        self.0.input_size()
    }

    /// Person boxes `(cx, cy, w, h, confidence)` in normalized coordinates
    /// after thresholding and NMS.
    #[pyo3(signature = (image, conf_threshold = 0.5, nms_iou = NMS_IOU))]
    fn detect(&self, image: Nested, conf_threshold: f64, nms_iou: f64) -> PyResult<Vec<PyDetection>> {
        let t = from_nested(image)?;
        let dets = detect_eval(&self.0, &[t], conf_threshold, nms_iou).map_err(py_err)?;
        Ok(dets[0]
            .iter()
            .map(|d| (d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h, d.confidence))
            .collect())
    }
}

type PyDetection = (f64, f64, f64, f64, f64);
type PyBox = (f64, f64, f64, f64);

fn detections(predictions: Vec<Vec<PyDetection>>) -> Vec<Vec<Detection>> {
    predictions
        .into_iter()
        .map(|p| {
            p.into_iter()
                .map(|(cx, cy, w, h, c)| Detection::person(BBox::new(cx, cy, w, h), c))
                .collect()
        })
        .collect()
}

fn boxes(gt: Vec<Vec<PyBox>>) -> Vec<Vec<BBox>> {
    gt.into_iter()
        .map(|g| g.into_iter().map(|(cx, cy, w, h)| BBox::new(cx, cy, w, h)).collect())
        .collect()
}

/// Single-class average precision over per-image predictions and ground truth.
#[pyfunction]
#[pyo3(signature = (predictions, ground_truth, iou_threshold = IOU_MATCH))]
fn compute_ap(predictions: Vec<Vec<PyDetection>>, ground_truth: Vec<Vec<PyBox>>, iou_threshold: f64) -> PyResult<f64> {
    evaluation::compute_ap(&detections(predictions), &boxes(ground_truth), iou_threshold).map_err(py_err)
}

/// `(threshold, recall)` pairs.
#[pyfunction]
fn recall_curve(
    predictions: Vec<Vec<PyDetection>>,
    ground_truth: Vec<Vec<PyBox>>,
    thresholds: Vec<f64>,
) -> PyResult<Vec<(f64, f64)>> {
    evaluation::recall_confidence_curve(&detections(predictions), &boxes(ground_truth), &thresholds).map_err(py_err)
}

/// Mean attack success rate over the thresholds 0.1, …, 0.9.
#[pyfunction]
fn masr(predictions: Vec<Vec<PyDetection>>, ground_truth: Vec<Vec<PyBox>>) -> PyResult<f64> {
    let r = evaluation::masr(&detections(predictions), &boxes(ground_truth), &MASR_THRESHOLDS).map_err(py_err)?;
    Ok(r.masr)
}

#[pyfunction]
fn info_objective(joint: Vec<f64>, marginal: Vec<f64>) -> PyResult<f64> {
    objectives::info_objective(&joint, &marginal).map_err(py_err)
}

/// Toroidal crop of any `(C, H, W)` array.
#[pyfunction]
fn toroidal_crop(data: Nested, row: i64, col: i64, rows: usize, cols: usize) -> PyResult<Nested> {
    let t = torus::toroidal_crop(&from_nested(data)?, row, col, rows, cols).map_err(py_err)?;
    Ok(to_nested(&t))
}

/// TOML text of a preset run config.
#[pyfunction]
#[pyo3(signature = (name = "desk"))]
fn config_toml(name: &str) -> PyResult<String> {
    Ok(preset(name)?.to_toml())
}

#[pymodule]
fn advtex(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Texture>()?;
    m.add_class::<LatentUnit>()?;
    m.add_class::<Generator>()?;
    m.add_class::<ToyPersonDetector>()?;
    m.add_function(wrap_pyfunction!(compute_ap, m)?)?;
    m.add_function(wrap_pyfunction!(recall_curve, m)?)?;
    m.add_function(wrap_pyfunction!(masr, m)?)?;
    m.add_function(wrap_pyfunction!(info_objective, m)?)?;
    m.add_function(wrap_pyfunction!(toroidal_crop, m)?)?;
    m.add_function(wrap_pyfunction!(config_toml, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
