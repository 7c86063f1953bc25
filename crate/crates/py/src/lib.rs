//! Python bindings. Structured results (reports, traces, configs) come back
//! as plain dicts and lists; configuration goes in as JSON text using the
//! same keys as the `falcon` command's config file.

use std::path::PathBuf;

use falcon_core::config::RunConfig;
use falcon_core::data::{gen_synthetic as gen_dataset, Dataset, Split, SyntheticSpec};
use falcon_core::features::{pixel_to_hsv, ColorBin, FeatureKind};
use falcon_core::image::ImageRgb;
use falcon_core::metrics::training_cost;
use falcon_core::nn::{decode_model, encode_model, init_mlp, train_sgd, ActivationKind, MlpModel, Sample, Topology};
use falcon_core::select::{
    assign_from_confidences, group_classes, select_feature_per_class, train_probe_models, ConfidenceTable,
};
use falcon_core::sim::{self, NeuEConfig, SimSummary};
use falcon_core::tree::{self as ftree, build_tree, evaluate, sweep_delta, train_baseline, FalconTree};
use falcon_core::Error;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn run_config(json: Option<&str>) -> PyResult<RunConfig> {
    let cfg = match json {
        Some(text) => RunConfig::from_json(text, "<config>").map_err(err)?,
        None => RunConfig::default(),
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

fn split(name: &str) -> PyResult<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| PyValueError::new_err(format!("unknown split '{name}'")))
}

fn kind(name: &str) -> PyResult<FeatureKind> {
    name.parse().map_err(err)
}

/// An 8-bit RGB image.
#[pyclass(name = "Image", module = "falcon")]
struct PyImage {
    inner: ImageRgb,
}

#[pymethods]
impl PyImage {
    /// `data` holds `width * height` RGB triples, row-major.
    #[new]
    fn new(width: usize, height: usize, data: &[u8]) -> PyResult<Self> {
        Ok(PyImage { inner: ImageRgb::new(width, height, data.to_vec()).map_err(err)? })
    }

    #[staticmethod]
    fn filled(width: usize, height: usize, rgb: (u8, u8, u8)) -> Self {
        PyImage { inner: ImageRgb::filled(width, height, [rgb.0, rgb.1, rgb.2]) }
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, self.inner.as_bytes())
    }

    /// Feature vector for a kind such as `"red"` or `"tex45"`.
    #[pyo3(signature = (kind_name, config=None))]
    fn feature(&self, kind_name: &str, config: Option<&str>) -> PyResult<Vec<f64>> {
        let cfg = run_config(config)?;
        Ok(cfg.features.extract(&self.inner, kind(kind_name)?).map_err(err)?.values)
    }

    fn __repr__(&self) -> String {
        format!("Image({}x{})", self.inner.width(), self.inner.height())
    }
}

/// A fully connected sigmoid network.
#[pyclass(name = "Mlp", module = "falcon")]
struct PyMlp {
    inner: MlpModel,
}

#[pymethods]
impl PyMlp {
    #[new]
    #[pyo3(signature = (sizes, seed=1))]
    fn new(sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(PyMlp { inner: init_mlp(&Topology::new(sizes).map_err(err)?, seed) })
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(PyMlp { inner: decode_model(data, "<bytes>").map_err(err)? })
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &encode_model(&self.inner))
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.topology().sizes().to_vec()
    }

    fn count_mac(&self) -> u64 {
        self.inner.count_mac()
    }

    fn forward(&self, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&input).map_err(err)
    }

    fn predict(&self, input: Vec<f64>) -> PyResult<usize> {
        self.inner.predict(&input).map_err(err)
    }

    /// Copy using the default piecewise-linear sigmoid.
    fn with_pwl(&self) -> Self {
        PyMlp { inner: self.inner.clone().with_activation(ActivationKind::pwl_default()) }
    }

    /// Trains on `(input, class)` pairs. `train` is a JSON training config
    /// (`learningRate`, `epochs`, `minibatchSize`, `seed`, ...). Returns the
    /// trained copy and its statistics.
    #[pyo3(signature = (inputs, classes, train=None))]
    fn train<'py>(
        &self,
        py: Python<'py>,
        inputs: Vec<Vec<f64>>,
        classes: Vec<usize>,
        train: Option<&str>,
    ) -> PyResult<(Self, Bound<'py, PyAny>)> {
        if inputs.len() != classes.len() {
            return Err(PyValueError::new_err("inputs and classes differ in length"));
        }
        let cfg = match train {
            Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => Default::default(),
        };
        let k = self.inner.output_width();
        let samples: Vec<Sample> = inputs.into_iter().zip(classes).map(|(x, c)| Sample::one_hot(x, c, k)).collect();
        let (model, stats) = train_sgd(&self.inner, &samples, &cfg).map_err(err)?;
        Ok((PyMlp { inner: model }, to_py(py, &stats)?))
    }

    fn __repr__(&self) -> String {
        format!("Mlp({:?})", self.inner.topology().sizes())
    }
}

/// Labelled images with train / validation / test splits.
#[pyclass(name = "Dataset", module = "falcon")]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        Ok(PyDataset { inner: Dataset::load_dir(&dir).map_err(err)? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        self.inner.save_dir(&dir).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names().to_vec()
    }

    /// Item indices of `"train"`, `"validation"` or `"test"`.
    fn split_indices(&self, name: &str) -> PyResult<Vec<usize>> {
        Ok(self.inner.splits().get(split(name)?).to_vec())
    }

    fn image(&self, index: usize) -> PyResult<PyImage> {
        self.inner
            .items()
            .get(index)
            .map(|it| PyImage { inner: it.image.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("no item {index}")))
    }

    fn label(&self, index: usize) -> PyResult<usize> {
        self.inner
            .items()
            .get(index)
            .map(|it| it.class)
            .ok_or_else(|| PyValueError::new_err(format!("no item {index}")))
    }
}

/// A two-level classification tree.
#[pyclass(name = "Tree", module = "falcon")]
struct PyTree {
    inner: FalconTree,
}

#[pymethods]
impl PyTree {
    /// Feature selection over every kind, grouping, a baseline network and
    /// the tree itself. Returns the tree and its training-cost report.
    #[staticmethod]
    #[pyo3(signature = (dataset, config=None))]
    fn build<'py>(py: Python<'py>, dataset: &PyDataset, config: Option<&str>) -> PyResult<(Self, Bound<'py, PyAny>)> {
        let cfg = run_config(config)?;
        let ds = &dataset.inner;
        let tree_cfg = cfg.tree_config();
        let probes = train_probe_models(ds, &FeatureKind::ALL, &cfg.select, &cfg.features).map_err(err)?;
        let assignment = select_feature_per_class(&probes, ds, &cfg.select, &cfg.features).map_err(err)?;
        let grouping = group_classes(&assignment).map_err(err)?;
        let (baseline, base_stats) =
            train_baseline(ds, &cfg.baseline.hidden, &cfg.baseline.train, &tree_cfg.deploy_activation).map_err(err)?;
        let (tree, mut record) = build_tree(ds, &grouping, &tree_cfg, Some(baseline)).map_err(err)?;
        record.probe_update_macs = probes.total_update_macs();
        let cost = training_cost(&record, Some(base_stats.weight_update_macs));
        Ok((PyTree { inner: tree }, to_py(py, &cost)?))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyTree { inner: ftree::load_tree(&path).map_err(err)? })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        ftree::save_tree(&self.inner, &dir).map(|_| ()).map_err(err)
    }

    #[getter]
    fn class_names(&self) -> Vec<String> {
        self.inner.class_names()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.inner.nodes.len()
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[setter]
    fn set_delta(&mut self, delta: f64) -> PyResult<()> {
        if !(delta >= 0.0) {
            return Err(PyValueError::new_err("delta must be >= 0"));
        }
        self.inner.delta = delta;
        Ok(())
    }

    /// Label (None when not found) and the inference trace.
    fn classify<'py>(&self, py: Python<'py>, image: &PyImage) -> PyResult<(Option<String>, Bound<'py, PyAny>)> {
        let (outcome, trace) = self.inner.classify(&image.inner).map_err(err)?;
        Ok((outcome.label().map(String::from), to_py(py, &trace)?))
    }

    #[pyo3(signature = (dataset, split_name="test"))]
    fn evaluate<'py>(&self, py: Python<'py>, dataset: &PyDataset, split_name: &str) -> PyResult<Bound<'py, PyAny>> {
        let ds = &dataset.inner;
        let (report, _) = evaluate(&self.inner, ds.split(split(split_name)?), ds.class_names()).map_err(err)?;
        to_py(py, &report)
    }

    #[pyo3(signature = (dataset, deltas, split_name="test"))]
    fn sweep<'py>(
        &self,
        py: Python<'py>,
        dataset: &PyDataset,
        deltas: Vec<f64>,
        split_name: &str,
    ) -> PyResult<Bound<'py, PyAny>> {
        let rows = sweep_delta(&self.inner, &dataset.inner, split(split_name)?, &deltas).map_err(err)?;
        to_py(py, &rows)
    }

    /// Engine simulation of one classification. `neue` is a JSON engine config.
    #[pyo3(signature = (image, neue=None))]
    fn simulate<'py>(&self, py: Python<'py>, image: &PyImage, neue: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        let cfg = neue_config(neue)?;
        let r = sim::simulate_tree(&cfg, &self.inner, &image.inner, &self.inner.features).map_err(err)?;
        to_py(py, &SimSummary::new(&r, &cfg))
    }
}

fn neue_config(json: Option<&str>) -> PyResult<NeuEConfig> {
    let cfg: NeuEConfig = match json {
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => NeuEConfig::default(),
    };
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// `(h, s, v)` of one pixel, h in degrees.
#[pyfunction]
fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let hsv = pixel_to_hsv([r, g, b]);
    (hsv.h, hsv.s, hsv.v)
}

#[pyfunction]
fn color_bin(r: u8, g: u8, b: u8) -> &'static str {
    ColorBin::of(pixel_to_hsv([r, g, b])).name()
}

#[pyfunction]
fn feature_kinds() -> Vec<String> {
    FeatureKind::ALL.iter().map(|k| k.to_string()).collect()
}

/// Synthetic dataset from a JSON spec (`classes`, `perClassCount`, `seed`, ...).
#[pyfunction]
#[pyo3(signature = (spec=None))]
fn gen_synthetic(spec: Option<&str>) -> PyResult<PyDataset> {
    let spec: SyntheticSpec = match spec {
        Some(t) => serde_json::from_str(t).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => SyntheticSpec::default(),
    };
    Ok(PyDataset { inner: gen_dataset(&spec).map_err(err)? })
}

/// Groups classes from a confidence table (one row per class, one column per kind).
#[pyfunction]
fn group_from_confidences<'py>(
    py: Python<'py>,
    class_names: Vec<String>,
    kinds: Vec<String>,
    values: Vec<Vec<f64>>,
    delta: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let kinds = kinds.iter().map(|k| kind(k)).collect::<PyResult<Vec<_>>>()?;
    let table = ConfidenceTable::new(class_names, kinds, values).map_err(err)?;
    let grouping = group_classes(&assign_from_confidences(&table, delta).map_err(err)?).map_err(err)?;
    to_py(py, &grouping)
}

#[pyfunction]
#[pyo3(signature = (model, input, neue=None))]
fn simulate_inference<'py>(
    py: Python<'py>,
    model: &PyMlp,
    input: Vec<f64>,
    neue: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = neue_config(neue)?;
    let r = sim::simulate_inference(&cfg, &model.inner, &input).map_err(err)?;
    let out = to_py(py, &SimSummary::new(&r, &cfg))?;
    out.set_item("outputs", r.outputs)?;
    Ok(out)
}

/// Engine config whose SRAM costs put the exec share of `inputs` at `target`.
#[pyfunction]
#[pyo3(signature = (model, inputs, target=0.7892, tolerance=0.05, neue=None))]
fn calibrate<'py>(
    py: Python<'py>,
    model: &PyMlp,
    inputs: Vec<Vec<f64>>,
    target: f64,
    tolerance: f64,
    neue: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = neue_config(neue)?;
    let out = sim::calibrate_cost_table(&cfg, &model.inner, &inputs, target, tolerance).map_err(err)?;
    to_py(py, &out)
}

#[pymodule]
fn falcon(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyImage>()?;
    m.add_class::<PyMlp>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyTree>()?;
    m.add_function(wrap_pyfunction!(rgb_to_hsv, m)?)?;
    m.add_function(wrap_pyfunction!(color_bin, m)?)?;
    m.add_function(wrap_pyfunction!(feature_kinds, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(group_from_confidences, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_inference, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    Ok(())
}
