//! Python module `ferret`: region encoding, the spatial sampler, grounded
//! text parsing, the command line and instruction-data compilation.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ferret_core::featmap::FeatureMap;
use ferret_core::geometry::{self, BBox, BinaryMask, ImageSize, Region};
use ferret_core::grit::{self, ConvertOptions, SceneRecord, Task};
use ferret_core::grounding::parse_grounded_text;
use ferret_core::quantizer::{self, BinCoords, QuantizerConfig};
use ferret_core::sampler::{SamplerConfig, SamplerParams, SpatialSampler};

fn py_err(e: ferret_core::Error) -> PyErr {
    match e {
        ferret_core::Error::Io(e) => PyIOError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn qcfg(n_bins: u32) -> PyResult<QuantizerConfig> {
    QuantizerConfig::new(n_bins).map_err(py_err)
}

fn region(json: &str) -> PyResult<Region> {
    serde_json::from_str(json).map_err(json_err)
}

fn coords_list(c: &BinCoords) -> Vec<u32> {
    match c {
        BinCoords::Point(p) => p.to_vec(),
        BinCoords::Box(b) => b.0.to_vec(),
    }
}

fn mask_from_rows(rows: Vec<Vec<bool>>) -> PyResult<BinaryMask> {
    let h = rows.len() as u32;
    let w = rows.first().map_or(0, Vec::len) as u32;
    if rows.iter().any(|r| r.len() as u32 != w) {
        return Err(PyValueError::new_err("mask rows differ in length"));
    }
    BinaryMask::from_bits(w, h, rows.concat()).map_err(py_err)
}

fn mask_rows(m: &BinaryMask) -> Vec<Vec<bool>> {
    m.bits().chunks(m.width() as usize).map(<[bool]>::to_vec).collect()
}

#[pyfunction]
#[pyo3(signature = (coord, extent, n_bins = 1000))]
fn quantize(coord: f64, extent: f64, n_bins: u32) -> PyResult<u32> {
    quantizer::quantize(coord, extent, qcfg(n_bins)?).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (bin, extent, n_bins = 1000))]
fn dequantize(bin: u32, extent: f64, n_bins: u32) -> PyResult<f64> {
    quantizer::dequantize(bin, extent, qcfg(n_bins)?).map_err(py_err)
}

/// IoU of two `[x_min, y_min, x_max, y_max]` boxes.
#[pyfunction]
fn iou(a: [f64; 4], b: [f64; 4]) -> PyResult<f64> {
    let (a, b) = (
        BBox::from_array(a).map_err(py_err)?,
        BBox::from_array(b).map_err(py_err)?,
    );
    Ok(geometry::iou(&a, &b))
}

/// Region JSON to a list of mask rows.
#[pyfunction]
fn rasterize(region_json: &str, width: u32, height: u32) -> PyResult<Vec<Vec<bool>>> {
    let m = region(region_json)?
        .rasterize(ImageSize::new(width, height))
        .map_err(py_err)?;
    Ok(mask_rows(&m))
}

#[pyfunction]
#[pyo3(signature = (region_json, width, height, n_bins = 1000))]
fn region_bins(region_json: &str, width: u32, height: u32, n_bins: u32) -> PyResult<Vec<u32>> {
    let c =
        quantizer::region_bins(&region(region_json)?, ImageSize::new(width, height), qcfg(n_bins)?).map_err(py_err)?;
    Ok(coords_list(&c))
}

/// `name [bins] <SPE>`.
#[pyfunction]
#[pyo3(signature = (name, region_json, width, height, n_bins = 1000))]
fn encode_region_text(name: &str, region_json: &str, width: u32, height: u32, n_bins: u32) -> PyResult<String> {
    quantizer::encode_region_text(
        name,
        &region(region_json)?,
        ImageSize::new(width, height),
        qcfg(n_bins)?,
    )
    .map_err(py_err)
}

/// `(phrase, [bins, ...])` for every grounded span.
#[pyfunction]
#[pyo3(signature = (text, n_bins = 1000))]
fn parse_grounded(text: &str, n_bins: u32) -> Vec<(String, Vec<Vec<u32>>)> {
    parse_grounded_text(text, n_bins)
        .spans
        .iter()
        .map(|s| (s.phrase.clone(), s.coords.iter().map(coords_list).collect()))
        .collect()
}

/// Runs the command line; returns `(exit code, stdout, stderr)`.
#[pyfunction]
fn run_cli(args: Vec<String>) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = ferret_core::cli::run_with(std::iter::once("ferret".to_string()).chain(args), &mut out, &mut err);
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

/// Converts one scene record (JSON) into instruction samples (JSON strings).
#[pyfunction]
#[pyo3(signature = (scene_json, tasks = None, seed = 0))]
fn compile_scene(scene_json: &str, tasks: Option<Vec<String>>, seed: u64) -> PyResult<Vec<String>> {
    let scene: SceneRecord = serde_json::from_str(scene_json).map_err(json_err)?;
    let tasks: Vec<Task> = match tasks {
        Some(t) => t.iter().map(|s| s.parse().map_err(py_err)).collect::<PyResult<_>>()?,
        None => Task::ALL.to_vec(),
    };
    let samples = grit::convert_all(&scene, &tasks, &ConvertOptions::default(), seed).map_err(py_err)?;
    samples
        .iter()
        .map(|s| serde_json::to_string(s).map_err(json_err))
        .collect()
}

/// The built-in example scene as JSON.
#[pyfunction]
fn example_scene() -> PyResult<String> {
    serde_json::to_string(&grit::example_scene()).map_err(json_err)
}

/// A spatial sampler with seeded weights.
#[pyclass(name = "Sampler")]
struct PySampler {
    inner: SpatialSampler,
}

#[pymethods]
impl PySampler {
    #[new]
    #[pyo3(signature = (channels, dim, n_points = 512, ratio = 4, k = 24, blocks = 2, seed = 0))]
    fn new(
        channels: usize,
        dim: usize,
        n_points: usize,
        ratio: usize,
        k: usize,
        blocks: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let cfg = SamplerConfig {
            n_points,
            ratio,
            k,
            blocks,
            channels,
            dim,
        };
        cfg.validate().map_err(py_err)?;
        let inner = SpatialSampler::new(cfg, SamplerParams::init(&cfg, seed)).map_err(py_err)?;
        Ok(Self { inner })
    }

    /// Loads a `.sparams` file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let (cfg, params) = SamplerParams::load(path).map_err(py_err)?;
        Ok(Self {
            inner: SpatialSampler::new(cfg, params).map_err(py_err)?,
        })
    }

    /// Region feature for mask rows and a flat `height x width x channels` map.
    fn forward(
        &self,
        mask: Vec<Vec<bool>>,
        fmap: Vec<f64>,
        height: usize,
        width: usize,
        seed: u64,
    ) -> PyResult<Vec<f64>> {
        let fmap = FeatureMap::new(height, width, self.inner.config().channels, fmap).map_err(py_err)?;
        let (out, _) = self
            .inner
            .forward(&mask_from_rows(mask)?, &fmap, seed)
            .map_err(py_err)?;
        Ok(out.0)
    }

    /// `(feature, d(upstream . feature)/d fmap)`.
    fn forward_backward(
        &self,
        mask: Vec<Vec<bool>>,
        fmap: Vec<f64>,
        height: usize,
        width: usize,
        seed: u64,
        upstream: Vec<f64>,
    ) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let fmap = FeatureMap::new(height, width, self.inner.config().channels, fmap).map_err(py_err)?;
        let (out, tape) = self
            .inner
            .forward(&mask_from_rows(mask)?, &fmap, seed)
            .map_err(py_err)?;
        let grads = self.inner.backward(&tape, &upstream).map_err(py_err)?;
        Ok((out.0, grads.featmap))
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.config().dim
    }

    #[getter]
    fn out_points(&self) -> usize {
        self.inner.config().out_points()
    }
}

#[pymodule]
fn ferret(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(dequantize, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(rasterize, m)?)?;
    m.add_function(wrap_pyfunction!(region_bins, m)?)?;
    m.add_function(wrap_pyfunction!(encode_region_text, m)?)?;
    m.add_function(wrap_pyfunction!(parse_grounded, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    m.add_function(wrap_pyfunction!(compile_scene, m)?)?;
    m.add_function(wrap_pyfunction!(example_scene, m)?)?;
    m.add_class::<PySampler>()?;
    m.add("SPE_TOKEN", quantizer::SPE_TOKEN)?;
    Ok(())
}
