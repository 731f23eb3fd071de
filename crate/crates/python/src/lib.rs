//! Python bindings: `import irtkit`.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use irtkit::dataio::{self, Dataset, LabelConfig, SourceFormat, SyntheticConfig};
use irtkit::dkt::{DktHyperparams, DktLabels};
use irtkit::eval::{self, ModelFamily, ModelSpec, SweepGrid};
use irtkit::irt::{self, FitOptions, FitReport};

fn to_py(e: irtkit::Error) -> PyErr {
    if e.is_numerical() {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// A preprocessed interaction dataset.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: Dataset,
}

#[pymethods]
impl PyDataset {
    /// Loads a file; `format` is assistments, kdd or canonical.
    #[staticmethod]
    #[pyo3(signature = (path, format = "canonical", item_field = None, group_field = None, keep_duplicates = false))]
    fn load(
        path: &str,
        format: &str,
        item_field: Option<&str>,
        group_field: Option<&str>,
        keep_duplicates: bool,
    ) -> PyResult<Self> {
        let format: SourceFormat = format.parse().map_err(to_py)?;
        let mut labels = match format {
            SourceFormat::Kdd => LabelConfig::kdd_default(),
            _ => LabelConfig::assistments_default(),
        };
        if let Some(f) = item_field {
            labels.item_field = f.to_owned();
        }
        if let Some(g) = group_field {
            labels.group_field = (!g.is_empty()).then(|| g.to_owned());
        }
        let inner = dataio::load(path, format, &labels, keep_duplicates).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Parses canonical `student_id,item_id,group_id,correct` text.
    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Self { inner: dataio::parse_canonical(text.as_bytes()).map_err(to_py)? })
    }

    /// Simulated probit responses; returns the dataset alone.
    #[staticmethod]
    #[pyo3(signature = (n_students, n_items, responses_per_student, seed, n_groups = 0, drift_gamma2 = 0.0))]
    fn synthetic(
        n_students: usize,
        n_items: usize,
        responses_per_student: usize,
        seed: u64,
        n_groups: usize,
        drift_gamma2: f64,
    ) -> PyResult<Self> {
        let cfg = SyntheticConfig {
            n_groups,
            drift_gamma2,
            ..SyntheticConfig::new(n_students, n_items, responses_per_student, seed)
        };
        let (inner, _) = dataio::generate_synthetic(&cfg).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_students(&self) -> usize {
        self.inner.n_students()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.inner.n_items()
    }

    #[getter]
    fn n_groups(&self) -> usize {
        self.inner.n_groups()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(interactions={}, students={}, items={}, groups={})",
            self.inner.len(),
            self.inner.n_students(),
            self.inner.n_items(),
            self.inner.n_groups()
        )
    }

    /// `(student_id, item_id, time_index, correct)` in canonical order.
    fn records(&self) -> Vec<(String, String, u32, bool)> {
        let d = &self.inner;
        d.records()
            .iter()
            .map(|r| (d.students().name(r.student).to_owned(), d.items().name(r.item).to_owned(), r.time_index, r.correct))
            .collect()
    }

    fn student_ids(&self) -> Vec<String> {
        self.inner.students().iter().map(str::to_owned).collect()
    }

    fn item_ids(&self) -> Vec<String> {
        self.inner.items().iter().map(str::to_owned).collect()
    }

    fn to_csv(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        self.inner.write_canonical(&mut buf).map_err(to_py)?;
        Ok(String::from_utf8(buf).expect("canonical output is UTF-8"))
    }

    fn content_hash(&self) -> String {
        self.inner.content_hash()
    }
}

/// Result of a MAP fit; `mu` is empty for plain IRT.
#[pyclass(name = "Fit", frozen, get_all)]
struct PyFit {
    theta: Vec<f64>,
    beta: Vec<f64>,
    mu: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
}

impl PyFit {
    fn new(theta: Vec<f64>, beta: Vec<f64>, mu: Vec<f64>, r: &FitReport) -> Self {
        Self { theta, beta, mu, objective: r.objective, iterations: r.iterations, converged: r.converged }
    }
}

#[pymethods]
impl PyFit {
    /// Probability of a correct response by student `s` to item `i`.
    fn predict(&self, s: usize, i: usize) -> PyResult<f64> {
        if s >= self.theta.len() || i >= self.beta.len() {
            return Err(PyValueError::new_err("student or item index out of range"));
        }
        Ok(irtkit::link::probit(self.theta[s] - self.beta[i]))
    }

    fn __repr__(&self) -> String {
        format!("Fit(objective={:.6}, iterations={}, converged={})", self.objective, self.iterations, self.converged)
    }
}

fn fit_options(max_iterations: Option<usize>, gradient_tolerance: Option<f64>) -> FitOptions {
    let mut o = FitOptions::default();
    if let Some(n) = max_iterations {
        o.max_iterations = n;
    }
    if let Some(t) = gradient_tolerance {
        o.gradient_tolerance = t;
    }
    o
}

#[pyfunction]
fn probit(x: f64) -> f64 {
    irtkit::link::probit(x)
}

#[pyfunction]
#[pyo3(signature = (dataset, max_iterations = None, gradient_tolerance = None))]
fn fit_irt(
    py: Python<'_>,
    dataset: &PyDataset,
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
) -> PyResult<PyFit> {
    let opts = fit_options(max_iterations, gradient_tolerance);
    let fit = py.detach(|| irt::fit_irt(&dataset.inner, &opts)).map_err(to_py)?;
    Ok(PyFit::new(fit.params.theta, fit.params.beta, Vec::new(), &fit.report))
}

#[pyfunction]
#[pyo3(signature = (dataset, sigma2, tau2, max_iterations = None, gradient_tolerance = None))]
fn fit_hirt(
    py: Python<'_>,
    dataset: &PyDataset,
    sigma2: f64,
    tau2: f64,
    max_iterations: Option<usize>,
    gradient_tolerance: Option<f64>,
) -> PyResult<PyFit> {
    let opts = fit_options(max_iterations, gradient_tolerance);
    let fit = py.detach(|| irt::fit_hirt(&dataset.inner, sigma2, tau2, &opts)).map_err(to_py)?;
    Ok(PyFit::new(fit.params.theta, fit.params.beta, fit.params.mu, &fit.report))
}

/// Fraction of `p > 0.5` predictions matching the outcome.
#[pyfunction]
fn accuracy(probabilities: Vec<f64>, correct: Vec<bool>) -> PyResult<f64> {
    let log = pairs_log(&probabilities, &correct)?;
    eval::accuracy(&log).map_err(to_py)
}

/// Area under the ROC curve with ties counted as one half.
#[pyfunction]
fn auc(probabilities: Vec<f64>, correct: Vec<bool>) -> PyResult<f64> {
    let log = pairs_log(&probabilities, &correct)?;
    eval::auc(&log).map_err(to_py)
}

fn pairs_log(p: &[f64], c: &[bool]) -> PyResult<eval::PredictionLog> {
    if p.len() != c.len() {
        return Err(PyValueError::new_err("probabilities and outcomes differ in length"));
    }
    let entries = p
        .iter()
        .zip(c)
        .map(|(&probability, &correct)| eval::PredictionEntry {
            student: 0,
            item: 0,
            time_index: 0,
            probability,
            correct,
            unseen: false,
        })
        .collect();
    Ok(eval::PredictionLog { entries })
}

/// Returns `(holdout, folds)` as lists of student indices.
#[pyfunction]
fn make_split(n_students: usize, seed: u64) -> PyResult<(Vec<u32>, Vec<Vec<u32>>)> {
    let plan = eval::make_split(n_students, seed).map_err(to_py)?;
    Ok((plan.holdout, plan.folds))
}

fn spec_from(family: &str, kw: Option<&Bound<'_, PyDict>>) -> PyResult<ModelSpec> {
    let family: ModelFamily = family.parse().map_err(to_py)?;
    let get_f = |k: &str| -> PyResult<Option<f64>> {
        kw.map(|d| d.get_item(k)).transpose()?.flatten().map(|v| v.extract()).transpose()
    };
    let get_u = |k: &str| -> PyResult<Option<usize>> {
        kw.map(|d| d.get_item(k)).transpose()?.flatten().map(|v| v.extract()).transpose()
    };
    let need = |v: Option<f64>, k: &str| v.ok_or_else(|| PyValueError::new_err(format!("{family} needs `{k}`")));
    let allowed: &[&str] = match family {
        ModelFamily::Irt | ModelFamily::Constant => &[],
        ModelFamily::Hirt => &["sigma2", "tau2"],
        ModelFamily::Tirt => &["gamma2"],
        ModelFamily::Window => &["w"],
        ModelFamily::Dkt => &[
            "compressed_dim",
            "hidden_dim",
            "dropout_p",
            "step_size",
            "minibatch_students",
            "epochs",
            "seed",
            "max_unroll",
            "labels",
        ],
    };
    if let Some(d) = kw {
        for k in d.keys() {
            let k: String = k.extract()?;
            if !allowed.contains(&k.as_str()) {
                return Err(PyValueError::new_err(format!("`{k}` is not a hyperparameter of {family}")));
            }
        }
    }
    Ok(match family {
        ModelFamily::Irt => ModelSpec::Irt,
        ModelFamily::Constant => ModelSpec::Constant,
        ModelFamily::Hirt => ModelSpec::Hirt { sigma2: need(get_f("sigma2")?, "sigma2")?, tau2: need(get_f("tau2")?, "tau2")? },
        ModelFamily::Tirt => ModelSpec::Tirt { gamma2: need(get_f("gamma2")?, "gamma2")? },
        ModelFamily::Window => {
            ModelSpec::Window { w: get_u("w")?.ok_or_else(|| PyValueError::new_err("window needs `w`"))? }
        }
        ModelFamily::Dkt => {
            let mut hp = DktHyperparams::default();
            set(&mut hp.compressed_dim, get_u("compressed_dim")?);
            set(&mut hp.hidden_dim, get_u("hidden_dim")?);
            set(&mut hp.dropout_p, get_f("dropout_p")?);
            set(&mut hp.step_size, get_f("step_size")?);
            set(&mut hp.minibatch_students, get_u("minibatch_students")?);
            set(&mut hp.epochs, get_u("epochs")?);
            set(&mut hp.max_unroll, get_u("max_unroll")?);
            if let Some(d) = kw {
                if let Some(v) = d.get_item("seed")? {
                    hp.seed = v.extract()?;
                }
                if let Some(v) = d.get_item("labels")? {
                    hp.labels = match v.extract::<String>()?.as_str() {
                        "item" => DktLabels::Item,
                        "group" => DktLabels::Group,
                        other => return Err(PyValueError::new_err(format!("unknown labels `{other}`"))),
                    };
                }
            }
            ModelSpec::Dkt(hp)
        }
    })
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

/// Five-fold online prediction. Hyperparameters go in keyword arguments,
/// e.g. `cross_validate(d, "tirt", gamma2=0.1)`.
///
/// Returns a dict with `model`, `accuracy` and `auc` as `(mean, stderr)` or
/// None, per-fold `folds` rows and the `predictions` of every fold as
/// `(fold, student_id, item_id, time_index, probability, correct)`.
#[pyfunction]
#[pyo3(signature = (dataset, model, seed = 0, **hyper))]
fn cross_validate<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    model: &str,
    seed: u64,
    hyper: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = spec_from(model, hyper)?;
    let d = &dataset.inner;
    let cv = py
        .detach(|| {
            let plan = eval::make_split(d.n_students(), seed)?;
            eval::cross_validate(&spec, d, &plan, &FitOptions::default())
        })
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("model", &cv.report.model)?;
    out.set_item("accuracy", cv.report.accuracy())?;
    out.set_item("auc", cv.report.auc())?;
    let folds: Vec<(usize, f64, Option<f64>)> = cv.report.folds.iter().map(|f| (f.fold, f.accuracy, f.auc)).collect();
    out.set_item("folds", folds)?;
    let mut preds = Vec::new();
    for (k, log) in cv.logs.iter().enumerate() {
        for e in &log.entries {
            preds.push((
                k,
                d.students().name(e.student).to_owned(),
                d.items().name(e.item).to_owned(),
                e.time_index,
                e.probability,
                e.correct,
            ));
        }
    }
    out.set_item("predictions", preds)?;
    Ok(out)
}

/// Scores a family's built-in grid on the selection holdout; returns
/// `(rows, best)` where rows are `(label, accuracy, auc)`.
#[pyfunction]
#[pyo3(signature = (dataset, model, seed = 0))]
fn sweep(
    py: Python<'_>,
    dataset: &PyDataset,
    model: &str,
    seed: u64,
) -> PyResult<(Vec<(String, f64, Option<f64>)>, String)> {
    let family: ModelFamily = model.parse().map_err(to_py)?;
    let d = &dataset.inner;
    let res = py
        .detach(|| {
            let grid = SweepGrid::default_for(family, &DktHyperparams::default());
            let plan = eval::make_split(d.n_students(), seed)?;
            eval::sweep(&grid, d, &plan, &FitOptions::default())
        })
        .map_err(to_py)?;
    let rows = res.rows.iter().map(|r| (r.spec.label(), r.accuracy, r.auc)).collect();
    Ok((rows, res.best.label()))
}

#[pymodule]
#[pyo3(name = "irtkit")]
pub fn irtkit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(probit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_irt, m)?)?;
    m.add_function(wrap_pyfunction!(fit_hirt, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(make_split, m)?)?;
    m.add_function(wrap_pyfunction!(cross_validate, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    Ok(())
}
