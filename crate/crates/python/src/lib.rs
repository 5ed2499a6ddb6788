use std::path::PathBuf;

use mesa_core::dataset::{self, LabelColumn, LabeledDataset, SplitSpec, ToySpec};
use mesa_core::ensemble::{self, constant_action_source, policy_action_source, random_action_source, EnsembleConfig};
use mesa_core::metasampling::{self, SamplerParams};
use mesa_core::sac::{self, SacConfig, Task};
use mesa_core::{LearnerKind, ProbabilisticClassifier};
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: mesa_core::Error) -> PyErr {
    match e.kind() {
        mesa_core::ErrorKind::Numerical => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn learner(name: &str) -> PyResult<LearnerKind> {
    name.parse().map_err(|e: mesa_core::Error| py_err(e))
}

#[pyclass(name = "Dataset", module = "mesa_py", from_py_object)]
#[derive(Clone)]
struct PyDataset(LabeledDataset);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> PyResult<Self> {
        LabeledDataset::from_rows(&rows, labels).map(Self).map_err(py_err)
    }

    /// Reads a CSV whose label column is `label_column` (a name or zero-based index).
    #[staticmethod]
    #[pyo3(signature = (path, label_column = "label"))]
    fn load_csv(path: PathBuf, label_column: &str) -> PyResult<Self> {
        dataset::load_csv(path, &LabelColumn::parse(label_column)).map(Self).map_err(py_err)
    }

    fn save_csv(&self, path: PathBuf) -> PyResult<()> {
        dataset::save_csv(&self.0, path).map_err(py_err)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.0.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.0.n_features()
    }

    #[getter]
    fn n_minority(&self) -> usize {
        self.0.n_minority()
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.0.rows().map(<[f64]>::to_vec).collect()
    }

    fn labels(&self) -> Vec<u8> {
        self.0.labels().to_vec()
    }

    /// Stratified train/valid/test split.
    #[pyo3(signature = (train = 0.6, valid = 0.2, test = 0.2, seed = 0))]
    fn split(&self, train: f64, valid: f64, test: f64, seed: u64) -> PyResult<(Self, Self, Self)> {
        let spec = SplitSpec::new(train, valid, test, seed).map_err(py_err)?;
        let s = dataset::stratified_split(&self.0, &spec).map_err(py_err)?;
        Ok((Self(s.train), Self(s.valid), Self(s.test)))
    }

    fn with_flip_noise(&self, ratio: f64, seed: u64) -> PyResult<Self> {
        dataset::inject_flip_noise(&self.0, ratio, seed).map(Self).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(rows={}, features={}, minority={})",
            self.0.n_rows(),
            self.0.n_features(),
            self.0.n_minority()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (n_majority = 2000, n_minority = 200, overlap = 0.5, seed = 0))]
fn make_toy(n_majority: usize, n_minority: usize, overlap: f64, seed: u64) -> PyResult<PyDataset> {
    let spec = ToySpec {
        n_majority,
        n_minority,
        overlap,
        seed,
    };
    dataset::make_toy(&spec).map(PyDataset).map_err(py_err)
}

#[pyfunction]
fn aucprc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    mesa_core::aucprc(&scores, &labels).map_err(py_err)
}

#[pyfunction]
fn error_histogram(errors: Vec<f64>, bins: usize) -> PyResult<Vec<f64>> {
    metasampling::error_histogram(&errors, bins).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (x, mu, sigma = metasampling::DEFAULT_SIGMA))]
fn gaussian_weight(x: f64, mu: f64, sigma: f64) -> PyResult<f64> {
    let params = SamplerParams::new(mu, sigma).map_err(py_err)?;
    Ok(metasampling::gaussian_weight(x, &params))
}

#[pyclass(name = "MetaSampler", module = "mesa_py", from_py_object)]
#[derive(Clone)]
struct PyMetaSampler(sac::MetaSampler);

#[pymethods]
impl PyMetaSampler {
    /// A freshly initialized (untrained) policy.
    #[new]
    #[pyo3(signature = (bins = metasampling::DEFAULT_BINS, sigma = metasampling::DEFAULT_SIGMA, hidden = 50, seed = 0))]
    fn new(bins: usize, sigma: f64, hidden: usize, seed: u64) -> PyResult<Self> {
        sac::MetaSampler::new(bins, sigma, hidden, seed).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn from_json(document: &str) -> PyResult<Self> {
        sac::load_sampler(document).map(Self).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        sac::serialize_sampler(&self.0).map_err(py_err)
    }

    #[getter]
    fn bins(&self) -> usize {
        self.0.bins()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma()
    }

    /// Deterministic action for the state built from train and valid errors.
    fn action(&self, train_errors: Vec<f64>, valid_errors: Vec<f64>) -> PyResult<f64> {
        let state =
            metasampling::MetaState::from_errors(&train_errors, &valid_errors, self.0.bins()).map_err(py_err)?;
        self.0.deterministic_action(&state).map_err(py_err)
    }
}

#[pyclass(name = "Ensemble", module = "mesa_py")]
struct PyEnsemble {
    model: ensemble::EnsembleModel,
    actions: Vec<f64>,
}

#[pymethods]
impl PyEnsemble {
    fn __len__(&self) -> usize {
        self.model.len()
    }

    /// Actions taken for members 2..k; empty for random under-sampling.
    #[getter]
    fn actions(&self) -> Vec<f64> {
        self.actions.clone()
    }

    fn predict_proba(&self, data: &PyDataset) -> PyResult<Vec<f64>> {
        self.model.predict_all(&data.0).map_err(py_err)
    }

    fn aucprc(&self, data: &PyDataset) -> PyResult<f64> {
        let p = self.model.predict_all(&data.0).map_err(py_err)?;
        mesa_core::aucprc(&p, data.0.labels()).map_err(py_err)
    }
}

/// Trains a k-member ensemble. `mode` is one of `mesa`, `random-policy`,
/// `uniform-action`, `constant` or `random-sampling`.
#[pyfunction]
#[pyo3(signature = (train, valid, mode = "mesa", k = 10, sampler = None, mu = 0.5, learner_name = "tree", seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train_ensemble(
    train: &PyDataset,
    valid: &PyDataset,
    mode: &str,
    k: usize,
    sampler: Option<PyMetaSampler>,
    mu: f64,
    learner_name: &str,
    seed: u64,
) -> PyResult<PyEnsemble> {
    let learner = learner(learner_name)?;
    let mut config = EnsembleConfig {
        k,
        learner,
        ..EnsembleConfig::default()
    };
    if let Some(s) = &sampler {
        config.bins = s.0.bins();
        config.sigma = s.0.sigma();
    }
    let mut source: Box<dyn ensemble::ActionSource> = match mode {
        "mesa" => {
            let s = sampler.ok_or_else(|| PyValueError::new_err("mode 'mesa' needs a sampler"))?;
            Box::new(policy_action_source(s.0))
        }
        "random-policy" => {
            let s = sac::MetaSampler::new(config.bins, config.sigma, SacConfig::default().hidden, seed)
                .map_err(py_err)?;
            Box::new(policy_action_source(s))
        }
        "uniform-action" => Box::new(random_action_source(seed)),
        "constant" => Box::new(constant_action_source(mu).map_err(py_err)?),
        "random-sampling" => {
            let model = ensemble::train_random_ensemble(&train.0, k, learner, seed).map_err(py_err)?;
            return Ok(PyEnsemble {
                model,
                actions: Vec::new(),
            });
        }
        other => return Err(PyValueError::new_err(format!("unknown mode {other:?}"))),
    };
    let (model, trace) =
        ensemble::train_ensemble(&train.0, &valid.0, source.as_mut(), &config, seed).map_err(py_err)?;
    Ok(PyEnsemble {
        model,
        actions: trace.iter().map(|t| t.action).collect(),
    })
}

/// Meta-trains a sampler on (train, valid) task pairs. Returns the sampler and
/// the final validation AUCPRC of every episode.
#[pyfunction]
#[pyo3(signature = (tasks, k = 10, gradient_steps = 1000, random_steps = 500, seed = 0))]
fn meta_train(
    tasks: Vec<(PyDataset, PyDataset)>,
    k: usize,
    gradient_steps: usize,
    random_steps: usize,
    seed: u64,
) -> PyResult<(PyMetaSampler, Vec<f64>)> {
    let config = SacConfig {
        k,
        gradient_steps,
        random_steps,
        ..SacConfig::default()
    };
    let tasks: Vec<Task> = tasks
        .into_iter()
        .map(|(t, v)| Task { train: t.0, valid: v.0 })
        .collect();
    let out = sac::meta_train(&tasks, &config, seed).map_err(py_err)?;
    let curve = out.episodes.iter().map(|e| e.final_valid_aucprc()).collect();
    Ok((PyMetaSampler(out.sampler), curve))
}

#[pymodule]
fn mesa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyMetaSampler>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(make_toy, m)?)?;
    m.add_function(wrap_pyfunction!(aucprc, m)?)?;
    m.add_function(wrap_pyfunction!(error_histogram, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_weight, m)?)?;
    m.add_function(wrap_pyfunction!(train_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(meta_train, m)?)?;
    Ok(())
}
