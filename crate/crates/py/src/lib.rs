//! Python bindings. Structured results come back as plain dicts and lists.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use sepkern::scenario::{self, Overrides};
use sepkern::solver::ParamOperator;
use sepkern::{Error, FunctionAtom, Interval, PairingConfig, Polynomial, Scenario, SeparableOperator};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_object<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(json_err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn polynomial(coeffs: Vec<f64>) -> PyResult<Polynomial> {
    Polynomial::new(coeffs).map_err(to_py)
}

/// Finite-rank operator with kernel `Σ C_ij l_i(t) r_j(s)` on `domain`, zero outside `left_support` in `t`.
#[pyclass(name = "Operator", module = "sepkern_py", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyOperator {
    inner: SeparableOperator,
}

#[pymethods]
impl PyOperator {
    /// Build from the scenario-file operator object, given as a JSON string.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(json_err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn rank(&self) -> (usize, usize) {
        (self.inner.rank_left(), self.inner.rank_right())
    }

    #[getter]
    fn coeff(&self) -> Vec<Vec<f64>> {
        self.inner.coeff.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    #[getter]
    fn domain(&self) -> (f64, f64) {
        (self.inner.domain.lo, self.inner.domain.hi)
    }

    fn kernel(&self, t: f64, s: f64) -> PyResult<f64> {
        self.inner.kernel(t, s).map_err(to_py)
    }

    fn compose(&self, other: &PyOperator) -> PyResult<PyOperator> {
        Ok(Self { inner: sepkern::compose(&self.inner, &other.inner).map_err(to_py)? })
    }

    fn power(&self, m: u32) -> PyResult<PyOperator> {
        Ok(Self { inner: sepkern::power(&self.inner, m).map_err(to_py)? })
    }

    fn scaled(&self, factor: f64) -> PyOperator {
        Self { inner: self.inner.scaled(factor) }
    }

    /// Covariance report for `A B = B F(A)` with `F` given by ascending coefficients.
    #[pyo3(signature = (b, coeffs, tol = sepkern::covariance::DEFAULT_TOL))]
    fn check_covariance(&self, py: Python<'_>, b: &PyOperator, coeffs: Vec<f64>, tol: f64) -> PyResult<Py<PyAny>> {
        let report = sepkern::check_covariance(&self.inner, &b.inner, &polynomial(coeffs)?, tol).map_err(to_py)?;
        to_object(py, &report)
    }

    #[pyo3(signature = (b, coeffs, tol = sepkern::covariance::DEFAULT_TOL))]
    fn check_rank_one(&self, py: Python<'_>, b: &PyOperator, coeffs: Vec<f64>, tol: f64) -> PyResult<Py<PyAny>> {
        let report = sepkern::check_rank_one(&self.inner, &b.inner, &polynomial(coeffs)?, tol).map_err(to_py)?;
        to_object(py, &report)
    }

    #[pyo3(signature = (b, tol = sepkern::covariance::DEFAULT_TOL))]
    fn commutes_with(&self, b: &PyOperator, tol: f64) -> PyResult<bool> {
        Ok(sepkern::covariance::check_commutativity(&self.inner, &b.inner, tol).map_err(to_py)?.holds)
    }

    /// Nullspace of the linear system for `B` over a diagonal template on this operator's atoms.
    #[pyo3(signature = (coeffs, rank_tol = sepkern::solver::DEFAULT_RANK_TOL, tol = sepkern::covariance::DEFAULT_TOL))]
    fn solve_for_b(&self, py: Python<'_>, coeffs: Vec<f64>, rank_tol: f64, tol: f64) -> PyResult<Py<PyAny>> {
        let template = ParamOperator::diagonal(&self.inner).map_err(to_py)?;
        let res = sepkern::solve_for_b(&self.inner, &polynomial(coeffs)?, &template, rank_tol, tol).map_err(to_py)?;
        to_object(py, &res)
    }

    fn __repr__(&self) -> String {
        let (r, c) = self.rank();
        format!("Operator(rank={r}x{c}, domain=[{}, {}])", self.inner.domain.lo, self.inner.domain.hi)
    }
}

/// Four-term trigonometric operator with parameters `theta` (sin-cos, cos-cos, sin-sin, cos-sin order).
#[pyfunction]
#[pyo3(signature = (omega, theta, domain, support = None))]
fn four_term(omega: f64, theta: [f64; 4], domain: (f64, f64), support: Option<(f64, f64)>) -> PyResult<PyOperator> {
    let g = Interval::new(domain.0, domain.1).map_err(to_py)?;
    let x = match support {
        Some((lo, hi)) => Interval::new(lo, hi).map_err(to_py)?,
        None => g,
    };
    Ok(PyOperator { inner: sepkern::trig::four_term_operator(omega, theta, g, x).map_err(to_py)? })
}

/// Pairing `∫_G u v` of two atoms given as scenario-file atom JSON.
#[pyfunction]
fn pair(u: &str, v: &str, lo: f64, hi: f64) -> PyResult<f64> {
    let u: FunctionAtom = serde_json::from_str(u).map_err(json_err)?;
    let v: FunctionAtom = serde_json::from_str(v).map_err(json_err)?;
    let g = Interval::new(lo, hi).map_err(to_py)?;
    sepkern::pair(&u, &v, g, &PairingConfig::default()).map_err(to_py)
}

#[pyfunction]
fn sigma1(omega: f64, lo: f64, hi: f64) -> f64 {
    sepkern::sigma1(omega, lo, hi)
}

#[pyfunction]
fn sigma2(omega: f64, lo: f64, hi: f64) -> f64 {
    sepkern::sigma2(omega, lo, hi)
}

#[pyfunction]
fn detv(theta: [f64; 4], delta: f64, s1: f64, s2: f64) -> f64 {
    sepkern::detv_trig(&theta, delta, s1, s2)
}

#[pyfunction]
fn list_families() -> Vec<(String, String)> {
    sepkern::list_families()
}

#[pyfunction]
#[pyo3(signature = (id, params = None, tol = sepkern::covariance::DEFAULT_TOL))]
fn verify_family(py: Python<'_>, id: &str, params: Option<BTreeMap<String, f64>>, tol: f64) -> PyResult<Py<PyAny>> {
    let out = sepkern::verify_family(id, &params.unwrap_or_default(), tol).map_err(to_py)?;
    to_object(py, &out)
}

/// Runs a scenario given as JSON text and returns the report dict.
#[pyfunction]
#[pyo3(signature = (text, tol = None, seed = None))]
fn run_scenario(py: Python<'_>, text: &str, tol: Option<f64>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let sc = Scenario::from_json(text).map_err(to_py)?;
    let ov = Overrides { tol, seed, ..Overrides::default() };
    let report = scenario::run(&sc, None, &ov).map_err(to_py)?;
    Ok(py.import("json")?.call_method1("loads", (report.to_json(),))?.unbind())
}

#[pyfunction]
#[pyo3(signature = (id, draws = None, seed = None))]
fn reproduce(py: Python<'_>, id: &str, draws: Option<usize>, seed: Option<u64>) -> PyResult<Py<PyAny>> {
    let ov = Overrides { seed, draws, ..Overrides::default() };
    let report = scenario::reproduce(id, &ov).map_err(to_py)?;
    Ok(py.import("json")?.call_method1("loads", (report.to_json(),))?.unbind())
}

#[pymodule]
fn sepkern_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyOperator>()?;
    m.add_function(wrap_pyfunction!(four_term, m)?)?;
    m.add_function(wrap_pyfunction!(pair, m)?)?;
    m.add_function(wrap_pyfunction!(sigma1, m)?)?;
    m.add_function(wrap_pyfunction!(sigma2, m)?)?;
    m.add_function(wrap_pyfunction!(detv, m)?)?;
    m.add_function(wrap_pyfunction!(list_families, m)?)?;
    m.add_function(wrap_pyfunction!(verify_family, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    Ok(())
}
