//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cmseq::characterize::{self, DEFAULT_REL_TOL};
use cmseq::decompose;
use cmseq::linalg::{self, Matrix, DEFAULT_PINV_TOL};
use cmseq::model::DEFAULT_SINGULARITY_TOL;
use cmseq::{io, Direction, Error, FitOptions};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Precondition(_) | Error::Characterization(_) | Error::ScaleGuard { .. } => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn direction(s: &str) -> PyResult<Direction> {
    s.parse().map_err(|e: Error| to_py(e))
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix rows"));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[pyclass(name = "ClassificationReport", frozen, get_all)]
struct PyReport {
    property: String,
    passed: bool,
    worst_residual: f64,
    worst_indices: Vec<usize>,
    rel_tol: f64,
    threshold: f64,
    checks: usize,
}

#[pymethods]
impl PyReport {
    fn __bool__(&self) -> bool {
        self.passed
    }

    fn __repr__(&self) -> String {
        format!(
            "ClassificationReport(property={:?}, passed={}, worst_residual={:e}, worst_indices={:?})",
            self.property, self.passed, self.worst_residual, self.worst_indices
        )
    }
}

impl From<characterize::ClassificationReport> for PyReport {
    fn from(r: characterize::ClassificationReport) -> Self {
        PyReport {
            property: r.property,
            passed: r.passed,
            worst_residual: r.worst_residual,
            worst_indices: r.worst_indices,
            rel_tol: r.rel_tol,
            threshold: r.threshold,
            checks: r.checks,
        }
    }
}

#[pyclass(name = "BlockCovariance", frozen)]
struct PyCovariance(cmseq::BlockCovariance);

#[pymethods]
impl PyCovariance {
    #[new]
    fn new(n: usize, d: usize, data: Vec<Vec<f64>>) -> PyResult<Self> {
        cmseq::BlockCovariance::new(n, d, matrix(data)?)
            .map(PyCovariance)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::parse_covariance(text).map(PyCovariance).map_err(to_py)
    }

    fn to_json(&self) -> String {
        io::covariance_to_json(&self.0)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.horizon()
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.dim()
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        rows(self.0.matrix())
    }

    fn block(&self, i: usize, j: usize) -> PyResult<Vec<Vec<f64>>> {
        if i > self.0.horizon() || j > self.0.horizon() {
            return Err(PyValueError::new_err(format!("block ({i}, {j}) outside horizon {}", self.0.horizon())));
        }
        Ok(rows(&self.0.block(i, j)))
    }
}

#[pyclass(name = "CmModel")]
struct PyModel(cmseq::CmModel);

#[pymethods]
impl PyModel {
    /// Zero gains and zero noise.
    #[new]
    fn new(n: usize, d: usize, direction: &str) -> PyResult<Self> {
        cmseq::CmModel::zeros(n, d, self::direction(direction)?)
            .map(PyModel)
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        io::parse_model(text).map(PyModel).map_err(to_py)
    }

    fn to_json(&self) -> String {
        io::model_to_json(&self.0)
    }

    fn hash(&self) -> String {
        io::model_hash(&self.0)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.horizon()
    }

    #[getter]
    fn d(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn direction(&self) -> &'static str {
        self.0.direction().as_str()
    }

    fn transition(&self, k: usize) -> Option<Vec<Vec<f64>>> {
        self.0.transition(k).map(rows)
    }

    fn coupling(&self, k: usize) -> Option<Vec<Vec<f64>>> {
        self.0.coupling(k).map(rows)
    }

    fn noise_cov(&self, k: usize) -> Option<Vec<Vec<f64>>> {
        self.0.noise_cov(k).map(rows)
    }

    fn set_transition(&mut self, k: usize, g: Vec<Vec<f64>>) -> PyResult<()> {
        self.0.set_transition(k, &matrix(g)?).map_err(to_py)
    }

    fn set_coupling(&mut self, k: usize, g: Vec<Vec<f64>>) -> PyResult<()> {
        self.0.set_coupling(k, &matrix(g)?).map_err(to_py)
    }

    fn set_noise_cov(&mut self, k: usize, q: Vec<Vec<f64>>) -> PyResult<()> {
        self.0.set_noise_cov(k, &matrix(q)?).map_err(to_py)
    }

    fn covariance(&self) -> PyCovariance {
        PyCovariance(self.0.covariance_of())
    }

    /// `count` paths, each a list of `N + 1` states of length `d`.
    fn sample(&self, py: Python<'_>, count: usize, seed: u64) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let paths = py.detach(|| self.0.sample(count, seed)).map_err(to_py)?;
        Ok((0..paths.count())
            .map(|p| (0..=paths.horizon).map(|k| paths.state(p, k).to_vec()).collect())
            .collect())
    }

    #[pyo3(signature = (rel_tol = DEFAULT_REL_TOL))]
    fn is_reciprocal_model(&self, rel_tol: f64) -> PyReport {
        self.0.is_reciprocal_model(rel_tol).into()
    }

    /// `(time, noise_degenerate, state_as_zero)` for each interior time.
    #[pyo3(signature = (tol = DEFAULT_SINGULARITY_TOL))]
    fn singularity_report(&self, tol: f64) -> PyResult<Vec<(usize, bool, bool)>> {
        let r = self.0.singularity_report(tol).map_err(to_py)?;
        Ok(r.entries
            .iter()
            .map(|e| (e.time, e.noise_degenerate, e.state_as_zero))
            .collect())
    }
}

#[pyfunction]
#[pyo3(signature = (a, rel_tol = DEFAULT_PINV_TOL))]
fn mp_inverse(a: Vec<Vec<f64>>, rel_tol: f64) -> PyResult<Vec<Vec<f64>>> {
    let m = matrix(a)?;
    linalg::ensure_finite(&m, "matrix").map_err(to_py)?;
    Ok(rows(&linalg::mp_inverse(&m, rel_tol)))
}

#[pyfunction]
#[pyo3(signature = (c, rel_tol = DEFAULT_REL_TOL))]
fn is_markov(c: &PyCovariance, rel_tol: f64) -> PyReport {
    characterize::is_markov(&c.0, rel_tol).into()
}

#[pyfunction]
#[pyo3(signature = (c, direction, rel_tol = DEFAULT_REL_TOL))]
fn is_cm(c: &PyCovariance, direction: &str, rel_tol: f64) -> PyResult<PyReport> {
    Ok(characterize::is_cm(&c.0, self::direction(direction)?, rel_tol).into())
}

#[pyfunction]
#[pyo3(signature = (c, k1, k2, direction, rel_tol = DEFAULT_REL_TOL))]
fn is_interval_cm(c: &PyCovariance, k1: usize, k2: usize, direction: &str, rel_tol: f64) -> PyResult<PyReport> {
    characterize::is_interval_cm(&c.0, k1, k2, self::direction(direction)?, rel_tol)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (c, rel_tol = DEFAULT_REL_TOL))]
fn is_reciprocal(c: &PyCovariance, rel_tol: f64) -> PyReport {
    characterize::is_reciprocal(&c.0, rel_tol).into()
}

#[pyfunction]
#[pyo3(signature = (c, direction, rel_tol = DEFAULT_REL_TOL))]
fn is_cm_via_markov(c: &PyCovariance, direction: &str, rel_tol: f64) -> PyResult<PyReport> {
    Ok(characterize::is_cm_via_markov(&c.0, self::direction(direction)?, rel_tol).into())
}

#[pyfunction]
#[pyo3(signature = (c, rel_tol = DEFAULT_REL_TOL))]
fn is_reciprocal_via_markov(c: &PyCovariance, rel_tol: f64) -> PyReport {
    characterize::is_reciprocal_via_markov(&c.0, rel_tol).into()
}

#[pyfunction]
#[pyo3(signature = (c, direction, rel_tol = DEFAULT_REL_TOL))]
fn cm_oracle(c: &PyCovariance, direction: &str, rel_tol: f64) -> PyResult<PyReport> {
    characterize::cm_oracle(&c.0, self::direction(direction)?, rel_tol)
        .map(Into::into)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (c, direction, enforce = true, rel_tol = DEFAULT_REL_TOL))]
fn fit_cm(c: &PyCovariance, direction: &str, enforce: bool, rel_tol: f64) -> PyResult<PyModel> {
    let opts = FitOptions { enforce, rel_tol };
    cmseq::fit_cm_with(&c.0, self::direction(direction)?, &opts)
        .map(PyModel)
        .map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (c, rel_tol = DEFAULT_REL_TOL))]
fn fit_reciprocal(c: &PyCovariance, rel_tol: f64) -> PyResult<PyModel> {
    cmseq::fit_reciprocal(&c.0, rel_tol).map(PyModel).map_err(to_py)
}

#[pyfunction]
fn build_cm_covariance(
    b1: &PyCovariance,
    s: Vec<Vec<f64>>,
    d: Vec<Vec<f64>>,
    direction: &str,
) -> PyResult<PyCovariance> {
    decompose::build_cm_covariance(&b1.0, &matrix(s)?, &matrix(d)?, self::direction(direction)?)
        .map(PyCovariance)
        .map_err(to_py)
}

#[pyfunction]
fn canonical_gamma(c: &PyCovariance, direction: &str) -> PyResult<Vec<Vec<Vec<f64>>>> {
    Ok(decompose::canonical_gamma(&c.0, self::direction(direction)?)
        .iter()
        .map(rows)
        .collect())
}

#[pyfunction]
#[pyo3(signature = (c, gamma, direction, rel_tol = DEFAULT_REL_TOL))]
fn markov_part_check(c: &PyCovariance, gamma: Vec<Vec<Vec<f64>>>, direction: &str, rel_tol: f64) -> PyResult<bool> {
    let gamma: Vec<Matrix> = gamma.into_iter().map(matrix).collect::<PyResult<_>>()?;
    decompose::markov_part_check(&c.0, &gamma, self::direction(direction)?, rel_tol).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "cmseq")]
fn cmseq_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyReport>()?;
    m.add_class::<PyCovariance>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(mp_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(is_markov, m)?)?;
    m.add_function(wrap_pyfunction!(is_cm, m)?)?;
    m.add_function(wrap_pyfunction!(is_interval_cm, m)?)?;
    m.add_function(wrap_pyfunction!(is_reciprocal, m)?)?;
    m.add_function(wrap_pyfunction!(is_cm_via_markov, m)?)?;
    m.add_function(wrap_pyfunction!(is_reciprocal_via_markov, m)?)?;
    m.add_function(wrap_pyfunction!(cm_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_reciprocal, m)?)?;
    m.add_function(wrap_pyfunction!(build_cm_covariance, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(markov_part_check, m)?)?;
    Ok(())
}
