//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::BTreeMap;

use flowsentry::anomaly::{self, ThresholdModel};
use flowsentry::autoencoder::{ModelConfig, ModelWeights};
use flowsentry::eval;
use flowsentry::ingest::{self, FeatureSpec};
use flowsentry::pipeline;
use flowsentry::synth::{self, SynthConfig};
use flowsentry::{Error, Matrix};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyValueError};
use pyo3::prelude::*;

create_exception!(flowsentry_py, FlowsentryError, PyException);
create_exception!(flowsentry_py, DivergenceError, FlowsentryError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Parameter(_) | Error::Shape(_) | Error::Bounds { .. } | Error::Contract(_) => {
            PyValueError::new_err(e.to_string())
        }
        Error::Divergence { .. } | Error::Numeric(_) => DivergenceError::new_err(e.to_string()),
        _ => FlowsentryError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for flowsentry::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

type Rows = Vec<Vec<f64>>;

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("expected at least one row"));
    }
    Matrix::from_rows(&rows).py()
}

fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

fn features(names: Option<Vec<String>>) -> PyResult<FeatureSpec> {
    match names {
        Some(n) => FeatureSpec::new(n, ingest::DEFAULT_LABEL_COLUMN).py(),
        None => Ok(FeatureSpec::default()),
    }
}

/// Per-feature min-max scaler fitted on training rows.
#[pyclass(module = "flowsentry_py", from_py_object)]
#[derive(Clone)]
struct Scaler {
    inner: ingest::Scaler,
}

#[pymethods]
impl Scaler {
    #[staticmethod]
    fn fit(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: ingest::Scaler::fit(&matrix(rows)?).py()?,
        })
    }

    /// Scales into [0, 1], clamping values outside the fitted range.
    fn apply(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.apply(&matrix(rows)?).py()?))
    }

    fn inverse(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        Ok(to_rows(&self.inner.inverse(&matrix(rows)?).py()?))
    }

    #[getter]
    fn min(&self) -> Vec<f64> {
        self.inner.min.clone()
    }

    #[getter]
    fn max(&self) -> Vec<f64> {
        self.inner.max.clone()
    }

    fn to_json(&self, feature_names: Vec<String>) -> PyResult<String> {
        self.inner.to_json(&feature_names).py()
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<(Self, Vec<String>)> {
        let (inner, names) = ingest::Scaler::from_json(text).py()?;
        Ok((Self { inner }, names))
    }

    fn __repr__(&self) -> String {
        format!("Scaler(features={})", self.inner.len())
    }
}

/// Trained LSTM autoencoder weights.
#[pyclass(module = "flowsentry_py", from_py_object)]
#[derive(Clone)]
struct Model {
    inner: ModelWeights,
}

#[pymethods]
impl Model {
    /// Fits a scaler on `rows`, trains a fresh model and returns
    /// `(model, scaler, per-epoch training losses)`.
    #[staticmethod]
    #[pyo3(signature = (rows, timesteps=10, units=16, dropout=0.2, epochs=30, batch_size=64, learning_rate=1e-3, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        py: Python<'_>,
        rows: Vec<Vec<f64>>,
        timesteps: usize,
        units: usize,
        dropout: f64,
        epochs: usize,
        batch_size: usize,
        learning_rate: f64,
        seed: u64,
    ) -> PyResult<(Self, Scaler, Vec<f64>)> {
        let raw = matrix(rows)?;
        let config = ModelConfig {
            timesteps,
            features: raw.cols(),
            units,
            dropout,
            epochs,
            batch_size,
            learning_rate,
            seed,
        };
        let trained = py.detach(|| pipeline::train_model(&raw, &config, None, None)).py()?;
        Ok((
            Self { inner: trained.weights },
            Scaler { inner: trained.scaler },
            trained.report.train_loss,
        ))
    }

    /// Per-sample reconstruction scores of already scaled rows.
    fn score(&self, py: Python<'_>, scaled_rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        let m = matrix(scaled_rows)?;
        let s = py.detach(|| anomaly::score_matrix(&self.inner, &m)).py()?;
        Ok(s.scores)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }

    #[getter]
    fn config(&self) -> BTreeMap<&'static str, f64> {
        let c = &self.inner.config;
        BTreeMap::from([
            ("timesteps", c.timesteps as f64),
            ("features", c.features as f64),
            ("units", c.units as f64),
            ("dropout", c.dropout),
            ("epochs", c.epochs as f64),
            ("batch_size", c.batch_size as f64),
            ("learning_rate", c.learning_rate),
            ("seed", c.seed as f64),
        ])
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).py()
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ModelWeights::load(path).py()?,
        })
    }

    fn __repr__(&self) -> String {
        let c = &self.inner.config;
        format!("Model(timesteps={}, features={}, units={})", c.timesteps, c.features, c.units)
    }
}

/// Threshold, scaler and window settings calibrated for one model.
#[pyclass(module = "flowsentry_py", from_py_object)]
#[derive(Clone)]
struct Detector {
    inner: ThresholdModel,
    weights: ModelWeights,
}

#[pymethods]
impl Detector {
    /// Threshold = largest score of the raw training rows.
    #[staticmethod]
    #[pyo3(signature = (model, scaler, training_rows, feature_names=None))]
    fn calibrate(
        model: &Model,
        scaler: &Scaler,
        training_rows: Vec<Vec<f64>>,
        feature_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let spec = features(feature_names)?;
        let (inner, _) =
            ThresholdModel::calibrate(&model.inner, &scaler.inner, &spec, &matrix(training_rows)?, None).py()?;
        Ok(Self {
            inner,
            weights: model.inner.clone(),
        })
    }

    #[getter]
    fn threshold(&self) -> f64 {
        self.inner.threshold
    }

    /// `(scores, verdicts)` for raw rows.
    fn detect(&self, py: Python<'_>, rows: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<u32>)> {
        let m = matrix(rows)?;
        let (scores, verdicts) = py.detach(|| pipeline::score_raw(&m, &self.inner, &self.weights)).py()?;
        Ok((scores.scores, verdicts.into_iter().map(u32::from).collect()))
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().py()
    }
}

/// Largest training score.
#[pyfunction]
fn calibrate(scores: Vec<f64>) -> PyResult<f64> {
    let s = anomaly::ScoreSeries {
        coverage: vec![1; scores.len()],
        scores,
    };
    anomaly::calibrate(&s).py()
}

/// 1 where score > threshold.
#[pyfunction]
fn classify(scores: Vec<f64>, threshold: f64) -> Vec<u32> {
    scores.into_iter().map(|s| u32::from(s > threshold)).collect()
}

/// Per-sample scores from windows reconstructed elsewhere.
/// `reconstructed` holds one t×m block per stride-1 window of `x`.
#[pyfunction]
fn per_sample_errors(x: Vec<Vec<f64>>, reconstructed: Vec<Vec<Vec<f64>>>) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let src = matrix(x)?;
    let t = reconstructed.first().map_or(0, Vec::len);
    let batch = flowsentry::windowing::make_windows(&src, flowsentry::windowing::WindowConfig::new(t).py()?).py()?;
    let flat: Vec<f64> = reconstructed.into_iter().flatten().flatten().collect();
    let rec = batch.with_data(flat).py()?;
    let s = anomaly::per_sample_errors(&src, &rec, &batch).py()?;
    Ok((s.scores, s.coverage))
}

/// Confusion counts and scalar metrics as a dict.
#[pyfunction]
fn metrics(verdicts: Vec<u8>, labels: Vec<u8>) -> PyResult<BTreeMap<&'static str, f64>> {
    let c = eval::confusion(&verdicts, &labels).py()?;
    let m = eval::metrics(&c).py()?;
    Ok(BTreeMap::from([
        ("tp", c.tp as f64),
        ("tn", c.tn as f64),
        ("fp", c.fp as f64),
        ("fn", c.fn_ as f64),
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("fpr", m.fpr),
        ("f1", m.f1),
    ]))
}

#[pyfunction]
fn auc_roc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    eval::auc_roc(&scores, &labels).py()
}

/// Synthetic `(benign_rows, attack_rows)` in the default feature order.
#[pyfunction]
#[pyo3(signature = (n_benign=2000, n_attack=500, shift=5.0, seed=0, noise_ratio=synth::DEFAULT_NOISE_RATIO))]
fn synthesize(
    n_benign: usize,
    n_attack: usize,
    shift: f64,
    seed: u64,
    noise_ratio: f64,
) -> PyResult<(Rows, Rows)> {
    let cfg = SynthConfig {
        n_benign,
        n_attack,
        shift,
        seed,
        ..SynthConfig::default()
    }
    .with_noise_ratio(noise_ratio);
    let d = synth::gen(&cfg).py()?;
    Ok((to_rows(&d.benign.matrix), to_rows(&d.attack.matrix)))
}

/// Full-model finite-difference check; returns `(max_rel_error, checked, passed)`.
#[pyfunction]
#[pyo3(signature = (seed=0, samples=400, windows=8, tolerance=1e-5))]
fn gradcheck(py: Python<'_>, seed: u64, samples: usize, windows: usize, tolerance: f64) -> PyResult<(f64, usize, bool)> {
    let config = ModelConfig {
        seed,
        ..ModelConfig::default()
    };
    let r = py.detach(|| pipeline::gradcheck(&config, windows, samples, tolerance)).py()?;
    Ok((r.max_rel_error, r.checked, r.passed()))
}

#[pymodule]
fn flowsentry_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FlowsentryError", m.py().get_type::<FlowsentryError>())?;
    m.add("DivergenceError", m.py().get_type::<DivergenceError>())?;
    m.add("DEFAULT_FEATURES", ingest::DEFAULT_FEATURES.to_vec())?;
    m.add_class::<Scaler>()?;
    m.add_class::<Model>()?;
    m.add_class::<Detector>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(per_sample_errors, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(auc_roc, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    Ok(())
}
