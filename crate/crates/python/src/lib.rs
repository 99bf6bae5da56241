//! Python bindings for the `xbar_snn` simulator.
//!
//! Vectors cross the boundary as lists of floats or bools, sparse updates as
//! `(row, col, delta)` tuples and error events as `(neuron, sign)` with
//! `sign` in `{+1, -1}`. Reports come back as plain dicts.

use std::path::PathBuf;

use pyo3::exceptions::{PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use snn::checkpoint::Checkpoint;
use snn::data::{self, LabeledSample};
use snn::learning::{self, ErrorEvent, Sign, SparseUpdate, SurrogateWindow};
use snn::network::{self, NullSink};
use snn::{crossbar, local_error, Error, RunConfig, UpdateModel};

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn window(u_minus: f64, u_plus: f64) -> PyResult<SurrogateWindow> {
    SurrogateWindow::new(u_minus, u_plus).map_err(py_err)
}

fn rows(m: &snn::Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn to_events(events: Vec<(usize, i32)>) -> PyResult<Vec<ErrorEvent>> {
    events
        .into_iter()
        .map(|(neuron, s)| {
            let sign = match s {
                1 => Sign::Plus,
                -1 => Sign::Minus,
                _ => return Err(PyValueError::new_err(format!("event sign must be +1 or -1, got {s}"))),
            };
            Ok(ErrorEvent {
                neuron,
                sign,
                step: 0,
                residual: 0.0,
            })
        })
        .collect()
}

fn triples(ups: Vec<SparseUpdate>) -> Vec<(usize, usize, f64)> {
    ups.into_iter().map(|u| (u.row, u.col, u.delta)).collect()
}

#[pyclass(name = "CrossbarArray", module = "xbar_snn", skip_from_py_object)]
#[derive(Clone)]
struct PyCrossbar {
    inner: crossbar::CrossbarArray,
}

#[pymethods]
impl PyCrossbar {
    #[new]
    #[pyo3(signature = (n_out, n_in, g_min = 0.0, g_max = 1.0))]
    fn new(n_out: usize, n_in: usize, g_min: f64, g_max: f64) -> PyResult<Self> {
        Ok(PyCrossbar {
            inner: crossbar::CrossbarArray::new(n_out, n_in, g_min, g_max).map_err(py_err)?,
        })
    }

    /// Conductances uniform in `G_ref +- spread (G_max - G_min)`.
    #[staticmethod]
    #[pyo3(signature = (n_out, n_in, seed, g_min = 0.0, g_max = 1.0, spread = 0.25))]
    fn random(n_out: usize, n_in: usize, seed: u64, g_min: f64, g_max: f64, spread: f64) -> PyResult<Self> {
        let mut r = snn::rng::from_seed(seed);
        Ok(PyCrossbar {
            inner: crossbar::CrossbarArray::random(n_out, n_in, g_min, g_max, spread, &mut r).map_err(py_err)?,
        })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n_out(), self.inner.n_in())
    }

    #[getter]
    fn g_ref(&self) -> f64 {
        self.inner.g_ref()
    }

    #[getter]
    fn total_writes(&self) -> u64 {
        self.inner.total_writes()
    }

    /// `"linear"` or `"soft-bound"`.
    #[getter]
    fn get_update_model(&self) -> &'static str {
        match self.inner.update_model {
            UpdateModel::Linear => "linear",
            UpdateModel::SoftBound => "soft-bound",
        }
    }

    #[setter]
    fn set_update_model(&mut self, model: &str) -> PyResult<()> {
        self.inner.update_model = match model {
            "linear" => UpdateModel::Linear,
            "soft-bound" => UpdateModel::SoftBound,
            other => return Err(PyValueError::new_err(format!("unknown update model {other:?}"))),
        };
        Ok(())
    }

    fn conductances(&self) -> Vec<Vec<f64>> {
        rows(self.inner.conductances())
    }

    fn effective_weight(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.effective_weight())
    }

    fn write_counts(&self) -> Vec<Vec<u64>> {
        let c = self.inner.write_counts();
        (0..c.rows()).map(|i| c.row(i).to_vec()).collect()
    }

    fn vmm(&self, p: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.vmm(&p).map_err(py_err)
    }

    /// Applies `(row, col, delta)` updates; returns the number of devices written.
    fn program(&mut self, updates: Vec<(usize, usize, f64)>) -> PyResult<u64> {
        let ups: Vec<SparseUpdate> = updates
            .into_iter()
            .map(|(row, col, delta)| SparseUpdate { row, col, delta })
            .collect();
        let stats = self.inner.program(&ups).map_err(|e| PyIndexError::new_err(e.to_string()))?;
        Ok(stats.total_writes)
    }

    fn __repr__(&self) -> String {
        format!(
            "CrossbarArray({}x{}, writes={})",
            self.inner.n_out(),
            self.inner.n_in(),
            self.inner.total_writes()
        )
    }
}

#[pyclass(name = "LocalErrorHead", module = "xbar_snn", skip_from_py_object)]
#[derive(Clone)]
struct PyHead {
    inner: local_error::LocalErrorHead,
}

#[pymethods]
impl PyHead {
    #[new]
    fn new(seed: u64, n_classes: usize, n_out: usize) -> PyResult<Self> {
        Ok(PyHead {
            inner: local_error::LocalErrorHead::init(seed, n_classes, n_out).map_err(py_err)?,
        })
    }

    fn classifier(&self) -> Vec<Vec<f64>> {
        rows(self.inner.classifier())
    }

    fn feedback(&self) -> Vec<Vec<f64>> {
        rows(self.inner.feedback())
    }

    fn omega(&self) -> Vec<Vec<f64>> {
        rows(self.inner.omega())
    }

    fn local_loss(&self, spikes: Vec<bool>, label: usize) -> PyResult<f64> {
        let y = self.one_hot(label)?;
        self.inner.local_loss(&spikes, &y).map_err(py_err)
    }

    fn local_error(&self, spikes: Vec<bool>, label: usize) -> PyResult<Vec<f64>> {
        let y = self.one_hot(label)?;
        self.inner.local_error(&spikes, &y).map_err(py_err)
    }

    fn feedback_error(&self, e: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.feedback_error(&e).map_err(py_err)
    }
}

impl PyHead {
    fn one_hot(&self, label: usize) -> PyResult<Vec<f64>> {
        if label >= self.inner.n_classes() {
            return Err(PyValueError::new_err(format!(
                "label {label} outside {} classes",
                self.inner.n_classes()
            )));
        }
        Ok(local_error::one_hot(label, self.inner.n_classes()))
    }
}

#[pyclass(name = "ThetaController", module = "xbar_snn", skip_from_py_object)]
#[derive(Clone)]
struct PyController {
    inner: learning::ThetaController,
}

#[pymethods]
impl PyController {
    #[new]
    #[pyo3(signature = (theta, target_rate, gain, rate_tau = 0.02))]
    fn new(theta: f64, target_rate: f64, gain: f64, rate_tau: f64) -> PyResult<Self> {
        Ok(PyController {
            inner: learning::ThetaController::new(theta, target_rate, gain, rate_tau).map_err(py_err)?,
        })
    }

    #[pyo3(signature = (events, n_neurons, dt_seconds = 1e-3))]
    fn step(&mut self, events: usize, n_neurons: usize, dt_seconds: f64) -> PyResult<f64> {
        if n_neurons == 0 || !(dt_seconds > 0.0) {
            return Err(PyValueError::new_err("need n_neurons > 0 and dt_seconds > 0"));
        }
        self.inner.step(events, n_neurons, dt_seconds);
        Ok(self.inner.theta)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn rate_estimate(&self) -> f64 {
        self.inner.rate_estimate
    }
}

#[pyclass(name = "Dataset", module = "xbar_snn", skip_from_py_object)]
#[derive(Clone)]
struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyDataset {
            inner: data::Dataset::load(&path).map_err(py_err)?,
        })
    }

    /// Writes the manifest and event files; returns the manifest path.
    fn write_to_dir(&self, path: PathBuf) -> PyResult<PathBuf> {
        self.inner.write_to_dir(&path).map_err(py_err)
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes
    }

    #[getter]
    fn n_channels(&self) -> usize {
        self.inner.n_channels
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.inner.n_steps
    }

    #[getter]
    fn n_train(&self) -> usize {
        self.inner.train.len()
    }

    #[getter]
    fn n_test(&self) -> usize {
        self.inner.test.len()
    }

    /// `(events, label)` of one sample, events as `(step, channel)` pairs.
    #[pyo3(signature = (index, split = "train"))]
    fn sample(&self, index: usize, split: &str) -> PyResult<(Vec<(u32, u32)>, usize)> {
        let s = self.split(split)?.get(index).ok_or_else(|| PyIndexError::new_err("sample index out of range"))?;
        Ok((s.stream.events().iter().map(|e| (e.step, e.channel)).collect(), s.label))
    }
}

impl PyDataset {
    fn split(&self, name: &str) -> PyResult<&[LabeledSample]> {
        match name {
            "train" => Ok(&self.inner.train),
            "test" => Ok(&self.inner.test),
            other => Err(PyValueError::new_err(format!("split must be 'train' or 'test', got {other:?}"))),
        }
    }
}

#[pyclass(name = "Network", module = "xbar_snn", skip_from_py_object)]
struct PyNetwork {
    inner: network::Network,
    config: RunConfig,
}

#[pymethods]
impl PyNetwork {
    /// Builds a network sized for `dataset` from TOML text (empty for defaults).
    #[new]
    #[pyo3(signature = (dataset, config_toml = ""))]
    fn new(dataset: &PyDataset, config_toml: &str) -> PyResult<Self> {
        let config = RunConfig::from_toml(config_toml, &[]).map_err(py_err)?;
        let inner = network::Network::new(config.network_spec_for(&dataset.inner)).map_err(py_err)?;
        Ok(PyNetwork { inner, config })
    }

    #[staticmethod]
    fn load_checkpoint(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(py_err)?;
        let mut config = RunConfig::default();
        config.train = ck.train.clone();
        Ok(PyNetwork {
            inner: ck.into_network(),
            config,
        })
    }

    /// Trains for the configured epochs (or `epochs`); returns the run report.
    #[pyo3(signature = (dataset, epochs = None))]
    fn train<'py>(&mut self, py: Python<'py>, dataset: &PyDataset, epochs: Option<usize>) -> PyResult<Bound<'py, PyAny>> {
        let mut cfg = self.config.train.clone();
        if let Some(e) = epochs {
            cfg.epochs = e;
        }
        let report = network::train(&mut self.inner, &dataset.inner, &cfg, 0, &mut NullSink).map_err(py_err)?;
        json_to_py(py, &report)
    }

    #[pyo3(signature = (dataset, split = "test"))]
    fn evaluate(&self, dataset: &PyDataset, split: &str) -> PyResult<f64> {
        self.inner
            .evaluate(dataset.split(split)?, self.config.train.steps_per_sample)
            .map_err(py_err)
    }

    #[pyo3(signature = (path, epochs_completed = 0))]
    fn save_checkpoint(&self, path: PathBuf, epochs_completed: usize) -> PyResult<()> {
        Checkpoint::capture(&self.inner, &self.config.train, epochs_completed)
            .save(&path)
            .map_err(py_err)
    }

    #[getter]
    fn total_writes(&self) -> u64 {
        self.inner.total_writes()
    }

    #[getter]
    fn total_events(&self) -> u64 {
        self.inner.total_events()
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.spec.layer_sizes.clone()
    }

    /// Copy of layer `index`'s crossbar.
    fn crossbar(&self, index: usize) -> PyResult<PyCrossbar> {
        let layer = self.inner.layers.get(index).ok_or_else(|| PyIndexError::new_err("layer index out of range"))?;
        Ok(PyCrossbar {
            inner: layer.crossbar.clone(),
        })
    }

    fn thetas(&self) -> Vec<f64> {
        self.inner.layers.iter().map(|l| l.controller.theta).collect()
    }
}

#[pyfunction]
#[pyo3(signature = (u, u_minus = -0.5, u_plus = 0.5))]
fn surrogate_box(u: Vec<f64>, u_minus: f64, u_plus: f64) -> PyResult<Vec<bool>> {
    Ok(learning::surrogate_box(&u, &window(u_minus, u_plus)?))
}

/// Returns `(E, events)` with events as `(neuron, sign)`.
#[pyfunction]
fn encode_error(err: Vec<f64>, theta: f64) -> PyResult<(Vec<f64>, Vec<(usize, i32)>)> {
    if !(theta > 0.0) {
        return Err(PyValueError::new_err("theta must be positive"));
    }
    let (e, events) = learning::encode_error(&err, theta, 0);
    let events = events
        .into_iter()
        .map(|ev| (ev.neuron, if ev.sign == Sign::Plus { 1 } else { -1 }))
        .collect();
    Ok((e, events))
}

#[pyfunction]
#[pyo3(signature = (events, p, u, theta, u_minus = -0.5, u_plus = 0.5))]
fn error_triggered_update(
    events: Vec<(usize, i32)>,
    p: Vec<f64>,
    u: Vec<f64>,
    theta: f64,
    u_minus: f64,
    u_plus: f64,
) -> PyResult<Vec<(usize, usize, f64)>> {
    let events = to_events(events)?;
    let ups = learning::error_triggered_update(&events, &p, &u, &window(u_minus, u_plus)?, theta).map_err(py_err)?;
    Ok(triples(ups))
}

#[pyfunction]
#[pyo3(signature = (err, p, u, eta, u_minus = -0.5, u_plus = 0.5))]
fn continuous_update(
    err: Vec<f64>,
    p: Vec<f64>,
    u: Vec<f64>,
    eta: f64,
    u_minus: f64,
    u_plus: f64,
) -> PyResult<Vec<(usize, usize, f64)>> {
    let ups = learning::continuous_update(&err, &p, &u, &window(u_minus, u_plus)?, eta).map_err(py_err)?;
    Ok(triples(ups))
}

/// Synthetic dataset; keyword arguments override the generator defaults
/// (`n_classes`, `n_channels`, `n_steps`, `train_per_class`, ...).
#[pyfunction]
#[pyo3(signature = (**kwargs))]
fn make_synthetic_dataset(py: Python<'_>, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<PyDataset> {
    let mut spec = serde_json::to_value(data::SyntheticSpec::default()).expect("spec serializes");
    if let Some(kw) = kwargs {
        let text: String = py.import("json")?.call_method1("dumps", (kw,))?.extract()?;
        let overrides: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let obj = spec.as_object_mut().expect("spec is an object");
        for (k, v) in overrides {
            obj.insert(k, v);
        }
    }
    let spec: data::SyntheticSpec = serde_json::from_value(spec).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyDataset {
        inner: spec.generate().map_err(py_err)?,
    })
}

#[pymodule]
fn xbar_snn(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCrossbar>()?;
    m.add_class::<PyHead>()?;
    m.add_class::<PyController>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyNetwork>()?;
    m.add_function(wrap_pyfunction!(surrogate_box, m)?)?;
    m.add_function(wrap_pyfunction!(encode_error, m)?)?;
    m.add_function(wrap_pyfunction!(error_triggered_update, m)?)?;
    m.add_function(wrap_pyfunction!(continuous_update, m)?)?;
    m.add_function(wrap_pyfunction!(make_synthetic_dataset, m)?)?;
    Ok(())
}
