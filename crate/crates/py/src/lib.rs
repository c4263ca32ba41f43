//! Python bindings. Matrices cross the boundary as lists of row lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use surrogate_core::dataset::{self, generate_synthetic, split_holdout, SyntheticSpec};
use surrogate_core::featsel::{self, PcaTransform};
use surrogate_core::forest::{fit_forest, ForestModel, ForestParams, MaxFeatures};
use surrogate_core::harness::{self, Experiment, FinalReport};
use surrogate_core::mlp::{fit_mlp, Activation, MlpModel, MlpParams};
use surrogate_core::model::{FeatureMode, ModelKind};
use surrogate_core::{tuning, Error, Matrix};

fn py_err(e: Error) -> PyErr {
    if e.is_io() {
        PyIOError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(py_err)
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(py_err)
}

#[pyclass(name = "Dataset", module = "surrogate")]
struct PyDataset(dataset::Dataset);

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (n_records=2000, seed=0, dead_features=vec![7, 8], noise_sigma=0.05))]
    fn synthetic(n_records: usize, seed: u64, dead_features: Vec<usize>, noise_sigma: f64) -> PyResult<Self> {
        let spec = SyntheticSpec {
            n_records,
            seed,
            dead_features,
            noise_sigma,
            ..SyntheticSpec::default()
        };
        generate_synthetic(&spec).map(PyDataset).map_err(py_err)
    }

    #[staticmethod]
    fn load(dir: &str) -> PyResult<Self> {
        dataset::load_dir(dir).map(PyDataset).map_err(py_err)
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        dataset::save_dir(&self.0, dir).map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.0.manifest.feature_names()
    }

    #[getter]
    fn folds(&self) -> Vec<i8> {
        self.0.folds.clone()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.0.x.to_rows()
    }

    fn target(&self, group: &str) -> PyResult<Vec<Vec<f64>>> {
        self.0.target(group).map(Matrix::to_rows).map_err(py_err)
    }

    fn split_holdout(&self) -> PyResult<(PyDataset, PyDataset)> {
        let (train, test) = split_holdout(&self.0).map_err(py_err)?;
        Ok((PyDataset(train), PyDataset(test)))
    }

    fn digest(&self) -> String {
        self.0.digest()
    }
}

#[pyfunction]
fn mse(y: Vec<Vec<f64>>, yhat: Vec<Vec<f64>>) -> PyResult<f64> {
    tuning::mse(&matrix(y)?, &matrix(yhat)?).map_err(py_err)
}

/// Pearson correlation matrix, features by targets.
#[pyfunction]
fn correlation_map(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let (x, y) = (matrix(x)?, matrix(y)?);
    let f = (0..x.cols()).map(|i| format!("x{i}")).collect();
    let t = (0..y.cols()).map(|i| format!("y{i}")).collect();
    let c = featsel::correlation_map(&x, &y, f, t).map_err(py_err)?;
    Ok(c.r.to_rows())
}

/// `(kept, dropped)` feature indices for one target group of the training rows.
#[pyfunction]
#[pyo3(signature = (data, group, threshold=featsel::DEFAULT_THRESHOLD))]
fn select_features(data: &PyDataset, group: &str, threshold: f64) -> PyResult<(Vec<usize>, Vec<usize>)> {
    let c = harness::group_correlations(&data.0, group).map_err(py_err)?;
    let s = featsel::select_features(&c, threshold).map_err(py_err)?;
    Ok((s.kept, s.dropped))
}

#[pyclass(name = "Pca", module = "surrogate")]
struct PyPca(PcaTransform);

#[pymethods]
impl PyPca {
    #[new]
    fn fit(x: Vec<Vec<f64>>, k: usize) -> PyResult<Self> {
        featsel::fit_pca(&matrix(x)?, k).map(PyPca).map_err(py_err)
    }

    fn transform(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.0.transform(&matrix(x)?).map(|m| m.to_rows()).map_err(py_err)
    }

    fn inverse_transform(&self, z: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.0.inverse_transform(&matrix(z)?).map(|m| m.to_rows()).map_err(py_err)
    }

    #[getter]
    fn components(&self) -> Vec<Vec<f64>> {
        self.0.components.to_rows()
    }

    #[getter]
    fn explained_variance(&self) -> Vec<f64> {
        self.0.explained_variance.clone()
    }
}

#[pyclass(name = "Forest", module = "surrogate")]
struct PyForest(ForestModel);

#[pymethods]
impl PyForest {
    /// `max_features` is "all", "sqrt" or a fraction in (0, 1].
    #[new]
    #[pyo3(signature = (x, y, n_estimators=100, max_depth=None, min_samples_leaf=1, max_features="all", bootstrap=true, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        n_estimators: usize,
        max_depth: Option<usize>,
        min_samples_leaf: usize,
        max_features: &str,
        bootstrap: bool,
        seed: u64,
    ) -> PyResult<Self> {
        let max_features = match max_features {
            "all" => MaxFeatures::All,
            "sqrt" => MaxFeatures::Sqrt,
            f => MaxFeatures::Fraction(
                f.parse()
                    .map_err(|_| PyValueError::new_err(format!("bad max_features `{f}`")))?,
            ),
        };
        let params = ForestParams {
            n_estimators,
            max_depth,
            min_samples_leaf,
            max_features,
            bootstrap,
            seed,
            ..ForestParams::default()
        };
        fit_forest(&matrix(x)?, &matrix(y)?, &params).map(PyForest).map_err(py_err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.0.predict(&matrix(x)?).map(|m| m.to_rows()).map_err(py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }
}

#[pyclass(name = "Mlp", module = "surrogate")]
struct PyMlp(MlpModel);

#[pymethods]
impl PyMlp {
    #[new]
    #[pyo3(signature = (x, y, hidden_layers=vec![64], activation="relu", learning_rate=0.01, l2_alpha=1e-4, batch_size=32, max_epochs=200, early_stop_patience=Some(10), seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
        hidden_layers: Vec<usize>,
        activation: &str,
        learning_rate: f64,
        l2_alpha: f64,
        batch_size: usize,
        max_epochs: usize,
        early_stop_patience: Option<usize>,
        seed: u64,
    ) -> PyResult<Self> {
        let activation = match activation {
            "relu" => Activation::Relu,
            "tanh" => Activation::Tanh,
            a => return Err(PyValueError::new_err(format!("unknown activation `{a}`"))),
        };
        let params = MlpParams {
            hidden_layers,
            activation,
            learning_rate,
            l2_alpha,
            batch_size,
            max_epochs,
            early_stop_patience,
            seed,
            ..MlpParams::default()
        };
        fit_mlp(&matrix(x)?, &matrix(y)?, &params).map(PyMlp).map_err(py_err)
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        self.0.predict(&matrix(x)?).map(|m| m.to_rows()).map_err(py_err)
    }

    /// `(epoch, train_loss, val_loss)` per epoch, starting at the initial network.
    #[getter]
    fn training_curve(&self) -> Vec<(usize, f64, Option<f64>)> {
        self.0.training_curve.iter().map(|e| (e.epoch, e.train_loss, e.val_loss)).collect()
    }
}

#[pyclass(name = "FinalReport", module = "surrogate")]
struct PyFinalReport(FinalReport);

#[pymethods]
impl PyFinalReport {
    #[getter]
    fn holdout_mse(&self) -> f64 {
        self.0.holdout_mse
    }

    #[getter]
    fn baseline_mse(&self) -> f64 {
        self.0.baseline_mse
    }

    #[getter]
    fn cv_mean_mse(&self) -> f64 {
        self.0.cv_mean_mse
    }

    #[getter]
    fn cv_std_mse(&self) -> f64 {
        self.0.cv_std_mse
    }

    #[getter]
    fn per_record_mse(&self) -> Vec<f64> {
        self.0.per_record_mse.clone()
    }

    /// `(good, average, poor)` hold-out record indices.
    #[getter]
    fn cases(&self) -> (usize, usize, usize) {
        let c = &self.0.cases;
        (c.good.index, c.average.index, c.poor.index)
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.0)
    }
}

/// Tune by nested CV, train the winner on the training rows, evaluate on the hold-out rows.
#[pyfunction]
#[pyo3(signature = (data, model, group, features="all", n_iter=10, seed=0))]
fn run_experiment(
    data: &PyDataset,
    model: &str,
    group: &str,
    features: &str,
    n_iter: usize,
    seed: u64,
) -> PyResult<PyFinalReport> {
    let e = Experiment::new(parse::<ModelKind>(model)?, group, parse::<FeatureMode>(features)?, n_iter, seed);
    let out = harness::run_experiment(&data.0, &e).map_err(py_err)?;
    Ok(PyFinalReport(out.report))
}

/// Writes summary, timing and case-profile tables; returns the written paths.
#[pyfunction]
fn make_report(reports: Vec<PyRef<'_, PyFinalReport>>, out_dir: &str) -> PyResult<Vec<String>> {
    let reports: Vec<FinalReport> = reports.iter().map(|r| r.0.clone()).collect();
    let paths = harness::make_report(&reports, out_dir).map_err(py_err)?;
    Ok(paths.into_iter().map(|p| p.display().to_string()).collect())
}

#[pymodule]
fn surrogate(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyPca>()?;
    m.add_class::<PyForest>()?;
    m.add_class::<PyMlp>()?;
    m.add_class::<PyFinalReport>()?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_map, m)?)?;
    m.add_function(wrap_pyfunction!(select_features, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(make_report, m)?)?;
    Ok(())
}
