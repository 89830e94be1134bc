//! Python bindings: pointwise comass, its sampling oracle and the scenario runner.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use calibra::comass::{comass_point, oracle_comass as oracle, OptimizerBudget};
use calibra::exterior;

fn err(e: calibra::Error) -> PyErr {
    match e {
        calibra::Error::Config(_) | calibra::Error::DimensionMismatch(_) | calibra::Error::InvalidMetric(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A constant m-covector on R^n, coefficients in lexicographic order of increasing index sets.
#[pyclass(name = "MultiCovector", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMultiCovector(exterior::MultiCovector);

#[pymethods]
impl PyMultiCovector {
    #[new]
    fn new(dim: usize, degree: usize, coeffs: Vec<f64>) -> PyResult<Self> {
        exterior::MultiCovector::new(dim, degree, coeffs).map(Self).map_err(err)
    }

    /// The basis covector dx^{i1} ^ ... ^ dx^{im} (zero-based indices).
    #[staticmethod]
    fn basis(dim: usize, indices: Vec<usize>) -> PyResult<Self> {
        exterior::MultiCovector::basis(dim, &indices).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.0.degree()
    }

    #[getter]
    fn coeffs(&self) -> Vec<f64> {
        self.0.coeffs().to_vec()
    }

    fn __repr__(&self) -> String {
        format!("MultiCovector(dim={}, degree={}, coeffs={:?})", self.0.dim(), self.0.degree(), self.0.coeffs())
    }
}

/// A positive definite inner product on R^n given by its Gram matrix.
#[pyclass(name = "PointMetric", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyPointMetric(exterior::PointMetric);

#[pymethods]
impl PyPointMetric {
    #[new]
    fn new(gram: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = gram.len();
        if gram.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("gram matrix must be square"));
        }
        let m = DMatrix::from_fn(n, n, |i, j| gram[i][j]);
        exterior::PointMetric::new(m).map(Self).map_err(err)
    }

    #[staticmethod]
    fn euclidean(dim: usize) -> PyResult<Self> {
        exterior::PointMetric::new(DMatrix::identity(dim, dim)).map(Self).map_err(err)
    }

    #[getter]
    fn gram(&self) -> Vec<Vec<f64>> {
        let g = self.0.gram();
        (0..g.nrows()).map(|i| (0..g.ncols()).map(|j| g[(i, j)]).collect()).collect()
    }
}

fn budget(seed: Option<u64>) -> OptimizerBudget {
    let mut b = OptimizerBudget::default();
    if let Some(s) = seed {
        b.seed = s;
    }
    b
}

/// Comass of phi under g by Stiefel ascent: (value, flagged).
#[pyfunction]
#[pyo3(signature = (phi, g, seed=None))]
fn comass(phi: &PyMultiCovector, g: &PyPointMetric, seed: Option<u64>) -> PyResult<(f64, bool)> {
    let r = comass_point(&phi.0, &g.0, &budget(seed)).map_err(err)?;
    Ok((r.value, r.flag.is_some()))
}

/// Best value of |phi| over `samples` random g-orthonormal frames, a lower bound on the comass.
#[pyfunction]
#[pyo3(signature = (phi, g, samples=100_000, seed=0))]
fn oracle_comass(phi: &PyMultiCovector, g: &PyPointMetric, samples: usize, seed: u64) -> PyResult<f64> {
    Ok(oracle(&phi.0, &g.0, samples, seed).map_err(err)?.value)
}

/// Resolved plan of a scenario file.
#[pyfunction]
fn describe_scenario(path: std::path::PathBuf) -> PyResult<String> {
    calibra::cli::describe_path(&path).map_err(err)
}

/// Runs a scenario file: (passed, failed criterion names, report JSON text).
#[pyfunction]
#[pyo3(signature = (path, out, seed=None, tol_scale=1.0))]
fn run_scenario(
    py: Python<'_>,
    path: std::path::PathBuf,
    out: std::path::PathBuf,
    seed: Option<u64>,
    tol_scale: f64,
) -> PyResult<(bool, Vec<String>, String)> {
    let opts = calibra::cli::RunOptions { out, seed, tol_scale };
    let s = py.detach(|| calibra::cli::run_path(&path, &opts)).map_err(err)?;
    let text = serde_json::to_string(&s.report).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((s.passed, s.failures, text))
}

#[pymodule]
fn pycalibra(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMultiCovector>()?;
    m.add_class::<PyPointMetric>()?;
    m.add_function(wrap_pyfunction!(comass, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_comass, m)?)?;
    m.add_function(wrap_pyfunction!(describe_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
