//! Python bindings: fields, videos, editing and the guidance helpers.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;

use nvf_core::config::RunConfig;
use nvf_core::editing::field_edit;
use nvf_core::field::{forward, load_params, save_params};
use nvf_core::fitting::fit;
use nvf_core::guidance::{self, Cond, GuidanceWeights, LatentTensor, NoisePredictor};
use nvf_core::render::{self, RenderSpec};
use nvf_core::synthetic::MovingSquare;
use nvf_core::{FieldConfig, FieldParams, NormalizedCoord, NvfError, VideoTensor};

fn py_err(e: NvfError) -> PyErr {
    match e {
        NvfError::Io { .. } => PyIOError::new_err(e.to_string()),
        NvfError::Optimizer { .. } | NvfError::Training { .. } | NvfError::Edit { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py_json<'py>(py: Python<'py>, value: &impl serde::Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn run_config(options: &[(&str, String)]) -> PyResult<RunConfig> {
    let mut config = RunConfig::default();
    for (key, value) in options {
        config.set(key, value).map_err(py_err)?;
    }
    Ok(config)
}

/// A video of RGB frames with values in [0, 1].
#[pyclass(module = "nvf")]
struct Video {
    inner: VideoTensor,
}

#[pymethods]
impl Video {
    /// Build from a flat `frames * height * width * 3` list.
    #[new]
    #[pyo3(signature = (frames, height, width, data, fps = 24.0))]
    fn new(frames: usize, height: usize, width: usize, data: Vec<f32>, fps: f32) -> PyResult<Self> {
        Ok(Video { inner: VideoTensor::new(frames, height, width, fps, data).map_err(py_err)? })
    }

    /// Frame directory or `.y4m` file.
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Video { inner: render::load_video(path).map_err(py_err)? })
    }

    /// The synthetic moving-square clip, optionally resized.
    #[staticmethod]
    #[pyo3(signature = (height = 64, width = 64, frames = 16))]
    fn moving_square(height: usize, width: usize, frames: usize) -> Self {
        let mut square = MovingSquare::reference().with_resolution(height, width);
        square.frames = frames;
        Video { inner: square.video() }
    }

    fn save(&self, path: &str) -> PyResult<()> {
        render::save_video(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        (self.inner.frames, self.inner.height, self.inner.width)
    }

    #[getter]
    fn fps(&self) -> f32 {
        self.inner.fps
    }

    fn to_list(&self) -> Vec<f32> {
        self.inner.data.clone()
    }

    fn psnr(&self, reference: &Video) -> PyResult<f64> {
        render::psnr(&self.inner, &reference.inner).map_err(py_err)
    }

    fn psnr_per_frame(&self, reference: &Video) -> PyResult<Vec<f64>> {
        render::psnr_per_frame(&self.inner, &reference.inner).map_err(py_err)
    }

    fn temporal_consistency(&self) -> PyResult<f64> {
        render::temporal_consistency(&self.inner).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let (t, h, w) = self.shape();
        format!("Video(frames={t}, height={h}, width={w}, fps={})", self.inner.fps)
    }
}

/// A neural video field.
#[pyclass(module = "nvf")]
struct Field {
    inner: FieldParams,
}

#[pymethods]
impl Field {
    /// A freshly initialized field sized for a `frames x height x width` video.
    #[new]
    #[pyo3(signature = (frames, height, width, seed = 0))]
    fn new(frames: usize, height: usize, width: usize, seed: u64) -> PyResult<Self> {
        let config = FieldConfig::for_video(frames, height, width);
        Ok(Field { inner: FieldParams::init(&config, seed).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Field { inner: load_params(path).map_err(py_err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_params(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.inner.parameter_count()
    }

    /// Colours at normalized `(x, y, t)` points in [0, 1].
    fn forward(&self, coords: Vec<(f64, f64, f64)>) -> PyResult<Vec<[f32; 3]>> {
        let batch = coords
            .into_iter()
            .map(|(x, y, t)| NormalizedCoord::new(x, y, t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?;
        forward(&self.inner, &batch).map_err(py_err)
    }

    /// Fit to `video`; returns the report as a dict.
    #[pyo3(signature = (video, iterations = None, batch_size = None, target_psnr = None, seed = None))]
    fn fit<'py>(
        &mut self,
        py: Python<'py>,
        video: &Video,
        iterations: Option<usize>,
        batch_size: Option<usize>,
        target_psnr: Option<f64>,
        seed: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let mut options = Vec::new();
        if let Some(v) = iterations {
            options.push(("fit.iterations", v.to_string()));
        }
        if let Some(v) = batch_size {
            options.push(("fit.batch_size", v.to_string()));
        }
        if let Some(v) = target_psnr {
            options.push(("fit.target_psnr", v.to_string()));
        }
        if let Some(v) = seed {
            options.push(("seed", v.to_string()));
        }
        let config = run_config(&options)?.fit_config().map_err(py_err)?;
        let report = py.detach(|| fit(&mut self.inner, &video.inner, &config)).map_err(py_err)?;
        to_py_json(py, &report)
    }

    /// Propagate a built-in edit. `options` are run-config `(key, value)`
    /// pairs, e.g. `[("editor.kind", "hue-shift"), ("editor.hue_degrees", "180")]`.
    #[pyo3(signature = (video, options))]
    fn edit<'py>(
        &mut self,
        py: Python<'py>,
        video: &Video,
        options: Vec<(String, String)>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let options: Vec<(&str, String)> = options.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        let config = run_config(&options)?;
        let edit = config.edit_config(video.inner.frames).map_err(py_err)?;
        let mut editor = config.editor(None).map_err(py_err)?;
        let report = field_edit(&mut self.inner, &video.inner, editor.as_mut(), &edit).map_err(py_err)?;
        to_py_json(py, &report)
    }

    /// Render `frames` evenly spaced source frames, with `interp` novel
    /// frames inserted between each pair.
    #[pyo3(signature = (width = None, height = None, frames = None, interp = 0))]
    fn render(
        &self,
        width: Option<usize>,
        height: Option<usize>,
        frames: Option<usize>,
        interp: usize,
    ) -> PyResult<Video> {
        let source = self.inner.source;
        let need = |v: Option<usize>, s: Option<usize>, name: &str| {
            v.or(s).ok_or_else(|| PyValueError::new_err(format!("{name} is required: the field has no source shape")))
        };
        let width = need(width, source.map(|s| s.width), "width")?;
        let height = need(height, source.map(|s| s.height), "height")?;
        let frames = need(frames, source.map(|s| s.frames), "frames")?;
        let spec = RenderSpec { width, height, time_samples: render::interpolated_time_samples(frames, interp) };
        Ok(Video { inner: render::render_video(&self.inner, &spec).map_err(py_err)? })
    }
}

/// Adapts a Python callable `predict(z, image, text) -> list` to the
/// predictor interface.
struct PyPredictor<'py> {
    callable: Bound<'py, PyAny>,
}

impl NoisePredictor for PyPredictor<'_> {
    fn predict(&self, z: &LatentTensor, image: Cond, text: Cond) -> nvf_core::Result<LatentTensor> {
        let out = self
            .callable
            .call1((z.data.clone(), image == Cond::Present, text == Cond::Present))
            .and_then(|v| v.extract::<Vec<f32>>())
            .map_err(|e| NvfError::contract(format!("predictor failed: {e}")))?;
        LatentTensor::new(z.height, z.width, z.channels, z.step, out)
    }
}

fn latent(shape: (usize, usize, usize), data: Vec<f32>) -> PyResult<LatentTensor> {
    LatentTensor::new(shape.0, shape.1, shape.2, 0, data).map_err(py_err)
}

/// Guided noise prediction from a Python predictor over a
/// `(height, width, channels)` latent.
#[pyfunction]
fn combine_guidance(
    predict: Bound<'_, PyAny>,
    z: Vec<f32>,
    shape: (usize, usize, usize),
    image_weight: f32,
    text_weight: f32,
) -> PyResult<Vec<f32>> {
    let weights = GuidanceWeights::new(image_weight, text_weight).map_err(py_err)?;
    let pred = PyPredictor { callable: predict };
    Ok(guidance::combine_guidance(&pred, &latent(shape, z)?, weights).map_err(py_err)?.data)
}

/// Binary `height x width` mask from an instruction-guidance term.
#[pyfunction]
fn aux_mask(delta: Vec<f32>, shape: (usize, usize, usize), tau: f32) -> PyResult<Vec<bool>> {
    let mask = guidance::build_aux_mask(&latent(shape, delta)?, tau).map_err(py_err)?;
    Ok(mask.data.iter().map(|&m| m != 0).collect())
}

/// Keep `z_edit` inside the mask and `z_cond` outside it.
#[pyfunction]
fn blend_latents(
    z_edit: Vec<f32>,
    z_cond: Vec<f32>,
    shape: (usize, usize, usize),
    mask: Vec<bool>,
) -> PyResult<Vec<f32>> {
    let (h, w, _) = shape;
    if mask.len() != h * w {
        return Err(PyValueError::new_err(format!("mask needs {} entries, got {}", h * w, mask.len())));
    }
    let mask = guidance::AuxMask::from_fn(h, w, 0.0, |r, c| mask[r * w + c]);
    let out = guidance::blend_latents(&latent(shape, z_edit)?, &latent(shape, z_cond)?, &mask).map_err(py_err)?;
    Ok(out.data)
}

#[pymodule]
fn nvf(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Video>()?;
    m.add_class::<Field>()?;
    m.add_function(wrap_pyfunction!(combine_guidance, m)?)?;
    m.add_function(wrap_pyfunction!(aux_mask, m)?)?;
    m.add_function(wrap_pyfunction!(blend_latents, m)?)?;
    Ok(())
}
