//! Python bindings: simulate scenarios, read recordings, extract features,
//! fit and cross-validate pipelines, and move model bundles to and from disk.
//!
//! Reports cross the boundary as JSON strings (`json.loads` on the Python
//! side), so their layout matches the CLI's `--json` output exactly.

use std::collections::BTreeMap;
use std::path::PathBuf;

use etongue_core::classifiers::{ModelKind, DEFAULT_K, DEFAULT_N_TREES};
use etongue_core::chemometrics::DEFAULT_VARIANCE_TARGET;
use etongue_core::evaluation::{cross_validate as cv, format_cell, format_results_table, FoldScheme};
use etongue_core::pipeline::derive_seed;
use etongue_core::pipeline_io::{bundle_from_str, bundle_to_string, load_bundle, load_dataset, read_recording, save_bundle};
use etongue_core::scenarios::{self, Scenario};
use etongue_core::{
    extract_features, feature_name as core_feature_name, fit_pipeline, Acquisition, Error, LabeledDataset, Matrix,
    PipelineConfig, TrainedPipeline, TransientRecording, N_CHANNELS, N_FEATURES,
};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

create_exception!(etongue, EtongueError, PyException, "Any failure reported by the etongue library.");
create_exception!(
    etongue,
    IncompatibleBundleError,
    EtongueError,
    "A model bundle written with a different schema version."
);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Incompatible { .. } => IncompatibleBundleError::new_err(e.to_string()),
        _ => EtongueError::new_err(e.to_string()),
    }
}

fn model_kind(name: &str, k: usize, n_trees: usize) -> PyResult<ModelKind> {
    Ok(match name.parse::<ModelKind>().map_err(py_err)? {
        ModelKind::Knn { .. } => ModelKind::Knn { k },
        ModelKind::BaggedTrees { .. } => ModelKind::BaggedTrees { n_trees },
        other => other,
    })
}

fn fold_scheme(name: &str, seed: u64) -> PyResult<FoldScheme> {
    match name {
        "loo" | "lolo" | "leave_one_liquid_out" => Ok(FoldScheme::LeaveOneLiquidOut),
        _ => name
            .strip_prefix("random")
            .and_then(|k| k.parse().ok())
            .map(|k| FoldScheme::RandomKFold { k, seed })
            .ok_or_else(|| EtongueError::new_err(format!("unknown fold scheme '{name}' (use random<k> or loo)"))),
    }
}

/// One 15-channel transient recording.
#[pyclass(module = "etongue", frozen)]
struct Recording {
    inner: TransientRecording,
}

#[pymethods]
impl Recording {
    /// Reads a recording CSV and its JSON sidecar.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Recording { inner: read_recording(&path).map_err(py_err)? })
    }

    /// Builds a recording from `[n_samples][15]` voltages in mV.
    #[new]
    #[pyo3(signature = (voltages_mv, sample_rate_hz, transition_index, reference_liquid_id=String::new(), test_liquid_id=String::new()))]
    fn new(
        voltages_mv: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        transition_index: usize,
        reference_liquid_id: String,
        test_liquid_id: String,
    ) -> PyResult<Self> {
        let inner = TransientRecording {
            sample_rate_hz,
            transition_index,
            voltages_mv: Matrix::from_rows(&voltages_mv).map_err(py_err)?,
            reference_liquid_id,
            test_liquid_id,
        };
        Ok(Recording { inner })
    }

    #[getter]
    fn sample_rate_hz(&self) -> f64 {
        self.inner.sample_rate_hz
    }

    #[getter]
    fn transition_index(&self) -> usize {
        self.inner.transition_index
    }

    #[getter]
    fn test_liquid_id(&self) -> &str {
        &self.inner.test_liquid_id
    }

    #[getter]
    fn reference_liquid_id(&self) -> &str {
        &self.inner.reference_liquid_id
    }

    #[getter]
    fn n_samples(&self) -> usize {
        self.inner.voltages_mv.nrows()
    }

    fn voltages(&self) -> Vec<Vec<f64>> {
        self.inner.voltages_mv.rows().map(<[f64]>::to_vec).collect()
    }

    /// The 75 features, channel-major (`ch01.f0` .. `ch01.f4`, then `ch02.f0`, ...).
    fn features(&self) -> PyResult<Vec<f64>> {
        Ok(extract_features(&self.inner).map_err(py_err)?.values)
    }
}

/// Feature matrix and task labels loaded from a manifest.
#[pyclass(module = "etongue", frozen)]
struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    fn load(manifest: PathBuf) -> PyResult<Self> {
        Ok(Dataset { inner: load_dataset(&manifest).map_err(py_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn task_names(&self) -> Vec<String> {
        self.inner.task_names().into_iter().map(str::to_owned).collect()
    }

    #[getter]
    fn sample_ids(&self) -> Vec<String> {
        self.inner.sample_ids.clone()
    }

    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.features.rows().map(<[f64]>::to_vec).collect()
    }

    /// sample_id → label for one task.
    fn labels(&self, task: &str) -> PyResult<BTreeMap<String, String>> {
        let t = self.inner.task(task).map_err(py_err)?;
        Ok(t.sample_ids.into_iter().zip(t.labels.iter().map(|l| t.label_names[*l].clone())).collect())
    }
}

/// A trained standardizer → PCA → classifier pipeline.
#[pyclass(module = "etongue", frozen)]
struct Pipeline {
    inner: TrainedPipeline,
}

#[pymethods]
impl Pipeline {
    #[staticmethod]
    #[pyo3(signature = (dataset, task, model="lda", seed=0, variance_target=DEFAULT_VARIANCE_TARGET, k=DEFAULT_K, n_trees=DEFAULT_N_TREES, timestamp=""))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        dataset: &Dataset,
        task: &str,
        model: &str,
        seed: u64,
        variance_target: f64,
        k: usize,
        n_trees: usize,
        timestamp: &str,
    ) -> PyResult<Self> {
        let kind = model_kind(model, k, n_trees)?;
        let data = dataset.inner.task(task).map_err(py_err)?;
        let config = PipelineConfig { variance_target, seed };
        let inner = py
            .allow_threads(|| fit_pipeline(&data, kind, &config))
            .map_err(py_err)?
            .stamped(timestamp);
        Ok(Pipeline { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Pipeline { inner: bundle_from_str(text).map_err(py_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Pipeline { inner: load_bundle(&path).map_err(py_err)? })
    }

    /// The bundle document.
    fn to_json(&self) -> PyResult<String> {
        bundle_to_string(&self.inner).map_err(py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_bundle(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn task_name(&self) -> &str {
        &self.inner.task_name
    }

    #[getter]
    fn model_kind(&self) -> &'static str {
        self.inner.model_kind.name()
    }

    #[getter]
    fn label_map(&self) -> Vec<String> {
        self.inner.label_map.clone()
    }

    #[getter]
    fn n_components(&self) -> usize {
        self.inner.pca.n_selected
    }

    /// `(label, {label: score})` for one 75-value feature vector.
    fn predict_features(&self, features: Vec<f64>) -> PyResult<(String, BTreeMap<String, f64>)> {
        let p = self.inner.predict_features(&features).map_err(py_err)?;
        Ok((p.label, p.scores))
    }

    fn predict(&self, recording: &Recording) -> PyResult<(String, BTreeMap<String, f64>)> {
        let p = self.inner.predict_recording(&recording.inner).map_err(py_err)?;
        Ok((p.label, p.scores))
    }

    /// PCA scores of one feature vector.
    fn project(&self, features: Vec<f64>) -> PyResult<Vec<f64>> {
        if features.len() != N_FEATURES {
            return Err(EtongueError::new_err(format!("expected {N_FEATURES} features, got {}", features.len())));
        }
        Ok(self.inner.project(&features)[..self.inner.pca.n_selected].to_vec())
    }
}

/// Name of feature `index`, e.g. `ch01.f0`.
#[pyfunction]
fn feature_name(index: usize) -> PyResult<String> {
    core_feature_name(index).map_err(py_err)
}

/// Simulates a scenario into `out_dir` and returns the manifest path.
/// Scenarios: acids, juices, wines, aging, separable.
#[pyfunction]
#[pyo3(signature = (scenario, out_dir, seed, repeats=5, noise=0.3, classes=9, separation=5.0))]
fn simulate(
    py: Python<'_>,
    scenario: &str,
    out_dir: PathBuf,
    seed: u64,
    repeats: usize,
    noise: f64,
    classes: usize,
    separation: f64,
) -> PyResult<PathBuf> {
    let sc: Scenario = match scenario {
        "acids" => scenarios::acids(noise, seed),
        "juices" => scenarios::juices(noise, seed),
        "wines" => scenarios::wines(noise, seed),
        "aging" => scenarios::aging(noise, seed),
        "separable" => scenarios::separable_task(classes, separation, noise, seed).map_err(py_err)?,
        other => return Err(EtongueError::new_err(format!("unknown scenario '{other}'"))),
    };
    // same seed split as `etongue simulate`, so both produce identical files
    py.allow_threads(|| sc.write_to(&out_dir, repeats, &Acquisition::default(), derive_seed(seed, 1)))
        .map_err(py_err)?;
    Ok(out_dir.join("manifest.json"))
}

/// Cross-validates one model on one task and returns the report as JSON.
#[pyfunction]
#[pyo3(signature = (dataset, task, model="lda", scheme="random10", seed=0, variance_target=DEFAULT_VARIANCE_TARGET, k=DEFAULT_K, n_trees=DEFAULT_N_TREES))]
#[allow(clippy::too_many_arguments)]
fn cross_validate(
    py: Python<'_>,
    dataset: &Dataset,
    task: &str,
    model: &str,
    scheme: &str,
    seed: u64,
    variance_target: f64,
    k: usize,
    n_trees: usize,
) -> PyResult<String> {
    let kind = model_kind(model, k, n_trees)?;
    let scheme = fold_scheme(scheme, seed)?;
    let data = dataset.inner.task(task).map_err(py_err)?;
    let config = PipelineConfig { variance_target, seed };
    let report = py.allow_threads(|| cv(&data, &scheme, kind, &config)).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| EtongueError::new_err(e.to_string()))
}

/// Markdown accuracy table for a JSON list of reports.
#[pyfunction]
fn results_table(reports_json: &str) -> PyResult<String> {
    let reports: Vec<_> = serde_json::from_str(reports_json).map_err(|e| EtongueError::new_err(e.to_string()))?;
    Ok(format_results_table(&reports).map_err(py_err)?.to_markdown())
}

/// `mean±SE` as a percentage cell, e.g. `97.3±1.9%`.
#[pyfunction]
#[pyo3(name = "format_cell")]
fn py_format_cell(mean: f64, standard_error: f64) -> String {
    format_cell(mean, standard_error)
}

#[pymodule]
fn etongue(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("N_CHANNELS", N_CHANNELS)?;
    m.add("N_FEATURES", N_FEATURES)?;
    m.add("EtongueError", m.py().get_type::<EtongueError>())?;
    m.add("IncompatibleBundleError", m.py().get_type::<IncompatibleBundleError>())?;
    m.add_class::<Recording>()?;
    m.add_class::<Dataset>()?;
    m.add_class::<Pipeline>()?;
    m.add_function(wrap_pyfunction!(feature_name, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(results_table, m)?)?;
    m.add_function(wrap_pyfunction!(py_format_cell, m)?)?;
    Ok(())
}
