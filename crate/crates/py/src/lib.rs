//! Python module `ganterp`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ganterp::pipeline::{BackendSelector, RunConfig};
use ganterp::{
    AlphaMode, AudioBuffer, ClassWeights, FramePlan, GeneratorSpec as CoreSpec, Generator, InflectionSet as CoreSet,
    LatentKeyframe, PlannedFrame, TrajectoryError,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

create_exception!(ganterp, GanterpError, PyException);
create_exception!(ganterp, MalformedTrajectory, GanterpError);
create_exception!(ganterp, PipelineFailed, GanterpError);

fn err(e: impl std::fmt::Display) -> PyErr {
    GanterpError::new_err(e.to_string())
}

fn trajectory_err(e: TrajectoryError) -> PyErr {
    match e.field() {
        Some(field) => MalformedTrajectory::new_err((e.to_string(), field.to_string())),
        None => GanterpError::new_err(e.to_string()),
    }
}

/// Decodes a WAV file to mono samples in [-1, 1]. Returns `(samples, sample_rate)`.
#[pyfunction]
fn decode_audio(path: PathBuf) -> PyResult<(Vec<f64>, u32)> {
    let audio = ganterp::decode_audio(path).map_err(err)?;
    Ok((audio.samples().to_vec(), audio.sample_rate()))
}

/// Magnitude spectrogram, indexed `[freq, slice]`.
#[pyclass(module = "ganterp", frozen)]
struct Spectrogram(ganterp::Spectrogram);

#[pymethods]
impl Spectrogram {
    #[new]
    #[pyo3(signature = (samples, sample_rate, fps=30.0, window=2048))]
    fn new(samples: Vec<f64>, sample_rate: u32, fps: f64, window: usize) -> PyResult<Self> {
        let audio = AudioBuffer::new(samples, sample_rate).map_err(err)?;
        ganterp::compute_spectrogram(&audio, fps, window).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (path, fps=30.0, window=2048))]
    fn from_file(path: PathBuf, fps: f64, window: usize) -> PyResult<Self> {
        let audio = ganterp::decode_audio(path).map_err(err)?;
        ganterp::compute_spectrogram(&audio, fps, window).map(Self).map_err(err)
    }

    #[getter]
    fn num_freqs(&self) -> usize {
        self.0.num_freqs()
    }

    #[getter]
    fn num_slices(&self) -> usize {
        self.0.num_slices()
    }

    #[getter]
    fn hop_samples(&self) -> usize {
        self.0.hop_samples()
    }

    fn get(&self, freq: usize, slice: usize) -> PyResult<f64> {
        if freq >= self.0.num_freqs() || slice >= self.0.num_slices() {
            return Err(pyo3::exceptions::PyIndexError::new_err("spectrogram index out of range"));
        }
        Ok(self.0.get(freq, slice))
    }

    fn column(&self, slice: usize) -> PyResult<Vec<f64>> {
        if slice >= self.0.num_slices() {
            return Err(pyo3::exceptions::PyIndexError::new_err("slice out of range"));
        }
        Ok(self.0.column(slice))
    }

    /// TV series as a list of `num_slices - 1` floats.
    #[pyo3(signature = (normalize=true))]
    fn tv_series(&self, normalize: bool) -> Vec<f64> {
        ganterp::compute_tv_series(&self.0, normalize).values().to_vec()
    }
}

#[pyclass(module = "ganterp", frozen)]
struct InflectionSet(CoreSet);

#[pymethods]
impl InflectionSet {
    #[new]
    fn new(indices: Vec<usize>, rolling_length: usize, delta: f64) -> PyResult<Self> {
        CoreSet::new(indices, rolling_length, delta).map(Self).map_err(err)
    }

    #[getter]
    fn indices(&self) -> Vec<usize> {
        self.0.indices().to_vec()
    }

    #[getter]
    fn rolling_length(&self) -> usize {
        self.0.rolling_length()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.0.delta()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("InflectionSet({:?})", self.0.indices())
    }
}

fn tv_from(values: Vec<f64>) -> PyResult<ganterp::TvSeries> {
    ganterp::TvSeries::new(values, false).map_err(err)
}

#[pyfunction]
fn detect_inflection_points(tv: Vec<f64>, rolling_length: usize, delta: f64) -> PyResult<InflectionSet> {
    let tv = tv_from(tv)?;
    ganterp::detect_inflection_points(&tv, rolling_length, delta)
        .map(InflectionSet)
        .map_err(err)
}

#[pyclass(module = "ganterp", frozen)]
struct AlphaTrack(ganterp::AlphaTrack);

#[pymethods]
impl AlphaTrack {
    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.0.alphas().to_vec()
    }

    #[getter]
    fn legacy(&self) -> bool {
        self.0.mode() == AlphaMode::SegmentLength
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyfunction]
#[pyo3(signature = (tv, inflections, legacy=false))]
fn compute_alpha_track(tv: Vec<f64>, inflections: &InflectionSet, legacy: bool) -> PyResult<AlphaTrack> {
    let mode = if legacy { AlphaMode::SegmentLength } else { AlphaMode::SegmentTotal };
    ganterp::compute_alpha_track_with(&tv_from(tv)?, &inflections.0, mode)
        .map(AlphaTrack)
        .map_err(err)
}

#[pyclass(module = "ganterp", frozen, from_py_object)]
#[derive(Clone)]
struct GeneratorSpec(CoreSpec);

#[pymethods]
impl GeneratorSpec {
    #[new]
    #[pyo3(signature = (latent_dim=128, num_classes=1000, image_size=(128, 128), truncation=None))]
    fn new(latent_dim: usize, num_classes: u32, image_size: (u32, u32), truncation: Option<f64>) -> PyResult<Self> {
        CoreSpec::new(latent_dim, num_classes, image_size, truncation)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.0.latent_dim
    }

    #[getter]
    fn num_classes(&self) -> u32 {
        self.0.num_classes
    }

    #[getter]
    fn image_size(&self) -> (u32, u32) {
        self.0.image_size
    }

    #[getter]
    fn truncation(&self) -> Option<f64> {
        self.0.truncation
    }
}

#[pyclass(module = "ganterp", frozen, from_py_object)]
#[derive(Clone)]
struct Keyframe(LatentKeyframe);

#[pymethods]
impl Keyframe {
    #[getter]
    fn slice_index(&self) -> usize {
        self.0.slice_index
    }

    #[getter]
    fn z(&self) -> Vec<f64> {
        self.0.z.clone()
    }

    #[getter]
    fn category(&self) -> u32 {
        self.0.category
    }
}

#[pyclass(module = "ganterp", frozen)]
struct Frame(PlannedFrame);

#[pymethods]
impl Frame {
    #[getter]
    fn z(&self) -> Vec<f64> {
        self.0.z_mix.clone()
    }

    #[getter]
    fn class_weights(&self) -> BTreeMap<u32, f64> {
        self.0.class_weights.as_map().clone()
    }
}

/// Draws one keyframe per inflection. `pins[i]`, when not `None`, fixes the
/// category of keyframe `i`.
#[pyfunction]
#[pyo3(signature = (inflections, spec, seed, pins=Vec::new()))]
fn sample_keyframes(
    inflections: &InflectionSet,
    spec: &GeneratorSpec,
    seed: u64,
    pins: Vec<Option<u32>>,
) -> PyResult<Vec<Keyframe>> {
    let keyframes = ganterp::sample_keyframes(&inflections.0, &spec.0, &pins, seed).map_err(err)?;
    Ok(keyframes.into_iter().map(Keyframe).collect())
}

#[pyfunction]
fn build_frame_plan(keyframes: Vec<Keyframe>, alphas: &AlphaTrack) -> PyResult<Vec<Frame>> {
    let keyframes: Vec<LatentKeyframe> = keyframes.into_iter().map(|k| k.0).collect();
    let plan = ganterp::build_frame_plan(&keyframes, &alphas.0).map_err(err)?;
    Ok(plan.frames.into_iter().map(Frame).collect())
}

#[pyclass(module = "ganterp", frozen)]
struct MockGenerator(ganterp::MockGenerator);

#[pymethods]
impl MockGenerator {
    #[new]
    fn new(spec: &GeneratorSpec) -> PyResult<Self> {
        ganterp::MockGenerator::new(spec.0.clone()).map(Self).map_err(err)
    }

    /// Renders one frame. Returns `(width, height, rgb_bytes)`.
    fn render<'py>(
        &self,
        py: Python<'py>,
        z: Vec<f64>,
        class_weights: BTreeMap<u32, f64>,
    ) -> PyResult<(u32, u32, Bound<'py, PyBytes>)> {
        let weights = ClassWeights::from_map(class_weights);
        let image = py
            .detach(|| ganterp::render_frame(&self.0, &z, &weights))
            .map_err(err)?;
        Ok((image.width(), image.height(), PyBytes::new(py, image.pixels())))
    }

    #[getter]
    fn spec(&self) -> GeneratorSpec {
        GeneratorSpec(self.0.spec().clone())
    }
}

#[pyclass(module = "ganterp", frozen)]
struct Trajectory(ganterp::Trajectory);

#[pymethods]
impl Trajectory {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        ganterp::read_trajectory(path).map(Self).map_err(trajectory_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ganterp::Trajectory::from_json(text).map(Self).map_err(trajectory_err)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        ganterp::write_trajectory(&self.0, path).map_err(trajectory_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(trajectory_err)
    }

    #[getter]
    fn spec(&self) -> GeneratorSpec {
        GeneratorSpec(self.0.spec.clone())
    }

    #[getter]
    fn fps(&self) -> f64 {
        self.0.fps
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.metadata.seed
    }

    #[getter]
    fn audio_sha256(&self) -> String {
        self.0.metadata.audio_sha256.clone()
    }

    #[getter]
    fn keyframes(&self) -> Vec<Keyframe> {
        self.0.keyframes.iter().cloned().map(Keyframe).collect()
    }

    #[getter]
    fn frames(&self) -> Vec<Frame> {
        let FramePlan { frames } = &self.0.plan;
        frames.iter().cloned().map(Frame).collect()
    }

    fn __len__(&self) -> usize {
        self.0.num_frames()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

/// Runs the whole pipeline and returns a report dict.
#[pyfunction]
#[pyo3(signature = (
    audio, out, *, fps=30.0, window=2048, rolling_length=30, delta=0.1, normalize_tv=true, seed=0,
    categories=None, backend="mock", spec=None, legacy_alpha_division=false, dump_analysis=None,
    parallelism=None,
))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline<'py>(
    py: Python<'py>,
    audio: PathBuf,
    out: PathBuf,
    fps: f64,
    window: usize,
    rolling_length: usize,
    delta: f64,
    normalize_tv: bool,
    seed: u64,
    categories: Option<PathBuf>,
    backend: &str,
    spec: Option<GeneratorSpec>,
    legacy_alpha_division: bool,
    dump_analysis: Option<PathBuf>,
    parallelism: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut config = RunConfig::new(audio, out);
    config.fps = fps;
    config.window_samples = window;
    config.rolling_length = rolling_length;
    config.delta = delta;
    config.normalize_tv = normalize_tv;
    config.seed = seed;
    config.categories_path = categories;
    config.backend = backend.parse::<BackendSelector>().map_err(err)?;
    if let Some(spec) = spec {
        config.generator = spec.0;
    }
    config.legacy_alpha_division = legacy_alpha_division;
    config.dump_analysis = dump_analysis;
    if let Some(n) = parallelism {
        config.parallelism = n;
    }
    let report = py
        .detach(|| ganterp::run_pipeline(&config))
        .map_err(|e| PipelineFailed::new_err((e.to_string(), e.exit_code())))?;
    let dict = PyDict::new(py);
    dict.set_item("num_slices", report.num_slices)?;
    dict.set_item("num_inflections", report.num_inflections)?;
    dict.set_item("frames_written", report.frames_written)?;
    dict.set_item("trajectory_path", report.trajectory_path)?;
    dict.set_item("frames_dir", report.frames_dir)?;
    Ok(dict)
}

#[pymodule(name = "ganterp")]
fn ganterp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("GanterpError", py.get_type::<GanterpError>())?;
    m.add("MalformedTrajectory", py.get_type::<MalformedTrajectory>())?;
    m.add("PipelineFailed", py.get_type::<PipelineFailed>())?;
    m.add_class::<Spectrogram>()?;
    m.add_class::<InflectionSet>()?;
    m.add_class::<AlphaTrack>()?;
    m.add_class::<GeneratorSpec>()?;
    m.add_class::<Keyframe>()?;
    m.add_class::<Frame>()?;
    m.add_class::<MockGenerator>()?;
    m.add_class::<Trajectory>()?;
    m.add_function(wrap_pyfunction!(decode_audio, m)?)?;
    m.add_function(wrap_pyfunction!(detect_inflection_points, m)?)?;
    m.add_function(wrap_pyfunction!(compute_alpha_track, m)?)?;
    m.add_function(wrap_pyfunction!(sample_keyframes, m)?)?;
    m.add_function(wrap_pyfunction!(build_frame_plan, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
