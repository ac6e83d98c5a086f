//! Python module `aronsson`: systems, candidates and the verification and
//! minimum-time operations of `aronsson-core`. Structured reports come back
//! as plain dicts; option objects are passed as dicts with the same keys as
//! the JSON config.

use aronsson_core::aronsson as ar;
use aronsson_core::dynamics::{self, Direction, IntegrateOptions};
use aronsson_core::mintime::{self, GridSpec, LineSpec, MinTimeGrid};
use aronsson_core::{BoxDomain, Candidate as CoreCandidate, Hamiltonian as CoreHam, HamiltonianMode, SystemCatalogEntry};
use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(aronsson, AronssonError, PyException);

fn err(e: aronsson_core::Error) -> PyErr {
    AronssonError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    let Some(obj) = obj else {
        return Ok(T::default());
    };
    if obj.is_none() {
        return Ok(T::default());
    }
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn parse_box(lo: Vec<f64>, hi: Vec<f64>) -> PyResult<BoxDomain> {
    BoxDomain::new(lo, hi).map_err(err)
}

fn direction(name: &str) -> PyResult<Direction> {
    match name {
        "forward" => Ok(Direction::Forward),
        "backward" => Ok(Direction::Backward),
        other => Err(PyValueError::new_err(format!("direction must be 'forward' or 'backward', got '{other}'"))),
    }
}

/// A symmetric control system `x' = sigma(x) a`.
#[pyclass(module = "aronsson", frozen)]
struct System {
    inner: SystemCatalogEntry,
}

#[pymethods]
impl System {
    #[staticmethod]
    fn isotropic(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: SystemCatalogEntry::isotropic(n).map_err(err)?,
        })
    }

    /// Heisenberg-type system; `b` defaults to the standard symplectic matrix.
    #[staticmethod]
    #[pyo3(signature = (m, b=None))]
    fn hormander(m: usize, b: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let b = b.unwrap_or_else(|| SystemCatalogEntry::standard_symplectic(m));
        Ok(Self {
            inner: SystemCatalogEntry::hormander(m, b).map_err(err)?,
        })
    }

    #[staticmethod]
    fn grushin(m: usize) -> PyResult<Self> {
        Ok(Self {
            inner: SystemCatalogEntry::grushin(m).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.field().n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.field().m()
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    #[getter]
    fn lipschitz_bound(&self) -> f64 {
        self.inner.field().lipschitz_bound()
    }

    /// `sigma(x)` as a list of rows.
    fn sigma(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let s = self.inner.field().sigma(&x).map_err(err)?;
        Ok(s.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn apply(&self, x: Vec<f64>, a: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.field().apply(&x, &a).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("System.{}(n={}, m={})", self.inner.name(), self.n(), self.m())
    }
}

/// `H(x, p) = sqrt(scale) |p sigma(x)|`, or its square in squared mode.
#[pyclass(module = "aronsson", frozen)]
struct Hamiltonian {
    inner: CoreHam,
}

#[pymethods]
impl Hamiltonian {
    #[new]
    #[pyo3(signature = (mode="degree1", scale=1.0))]
    fn new(mode: &str, scale: f64) -> PyResult<Self> {
        let base = match mode {
            "degree1" => CoreHam::degree1(),
            "squared" => CoreHam::squared(),
            other => return Err(PyValueError::new_err(format!("mode must be 'degree1' or 'squared', got '{other}'"))),
        };
        if scale.is_nan() || scale <= 0.0 {
            return Err(PyValueError::new_err("scale must be positive"));
        }
        Ok(Self {
            inner: base.with_scale(scale),
        })
    }

    #[getter]
    fn mode(&self) -> &'static str {
        match self.inner.mode {
            HamiltonianMode::Degree1 => "degree1",
            HamiltonianMode::Squared => "squared",
        }
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.inner.scale
    }

    fn value(&self, system: &System, x: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
        self.inner.value(system.inner.field(), &x, &p).map_err(err)
    }

    fn gradient_p(&self, system: &System, x: Vec<f64>, p: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.gradient_p(system.inner.field(), &x, &p).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Hamiltonian(mode='{}', scale={})", self.mode(), self.inner.scale)
    }
}

/// A closed-form candidate `U`.
#[pyclass(module = "aronsson", frozen)]
struct Candidate {
    inner: CoreCandidate,
}

#[pymethods]
impl Candidate {
    #[staticmethod]
    fn gauge(m: usize) -> PyResult<Self> {
        Ok(Self {
            inner: CoreCandidate::gauge(m).map_err(err)?,
        })
    }

    #[staticmethod]
    fn abspower(exponents: Vec<f64>, signs: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: CoreCandidate::abspower(exponents, signs).map_err(err)?,
        })
    }

    #[staticmethod]
    fn infinity_laplace_counterexample() -> Self {
        Self {
            inner: CoreCandidate::infinity_laplace_counterexample(),
        }
    }

    /// `x^T Q x / 2` for a symmetric `q` given as rows.
    #[staticmethod]
    fn quadratic(q: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = q.len();
        if q.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("q must be square"));
        }
        let flat: Vec<f64> = q.into_iter().flatten().collect();
        Ok(Self {
            inner: CoreCandidate::quadratic(DMatrix::from_row_slice(n, n, &flat)).map_err(err)?,
        })
    }

    fn negated(&self) -> Self {
        Self {
            inner: self.inner.clone().negated(),
        }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&x).map_err(err)
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(self.inner.value_grad(&x).map_err(err)?.1)
    }

    fn hessian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let h = self.inner.hessian(&x).map_err(err)?;
        Ok(h.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// `V(x) = H(x, grad U(x))` (degree-one magnitude).
    fn v(&self, system: &System, ham: &Hamiltonian, x: Vec<f64>) -> PyResult<f64> {
        Ok(self.inner.value_v(system.inner.field(), &ham.inner, &x).map_err(err)?.h)
    }

    fn __repr__(&self) -> String {
        format!("Candidate({})", self.inner.name())
    }
}

/// Kružkov value-iteration solution of the minimum time problem.
#[pyclass(module = "aronsson", frozen)]
struct Grid {
    inner: MinTimeGrid,
}

#[pymethods]
impl Grid {
    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape.clone()
    }

    #[getter]
    fn spacing(&self) -> Vec<f64> {
        self.inner.h.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn sup_change(&self) -> f64 {
        self.inner.sup_change
    }

    /// Node times `T`, first axis slowest.
    fn times(&self) -> Vec<f64> {
        (0..self.inner.len()).map(|i| self.inner.node_time(i)).collect()
    }

    /// Interpolated minimum time at `x`.
    fn time_at(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.time_at(&x).map_err(err)
    }

    fn metadata<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.metadata())
    }
}

#[pyfunction]
fn smatrix<'py>(
    py: Python<'py>,
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    x: Vec<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let r = ar::smatrix(&candidate.inner, system.inner.field(), &ham.inner, &x).map_err(err)?;
    let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    };
    let d = PyDict::new(py);
    d.set_item("residual", r.residual)?;
    d.set_item("degree1_residual", r.degree1_residual(ham.inner.tol_h))?;
    d.set_item("h", r.h)?;
    d.set_item("w", r.w.clone())?;
    d.set_item("s", rows(&r.s))?;
    d.set_item("s_star", rows(&r.s_star))?;
    d.set_item("eig_s_star", r.eig_s_star.clone())?;
    d.set_item("sigma_concave", r.sigma_concave(1e-9))?;
    Ok(d)
}

#[pyfunction]
fn residual_fd(candidate: &Candidate, system: &System, ham: &Hamiltonian, x: Vec<f64>, h: f64) -> PyResult<f64> {
    ar::residual_fd(&candidate.inner, system.inner.field(), &ham.inner, &x, h).map_err(err)
}

/// Closed-loop trajectory; returns `{event, event_time, t, x, v}`.
#[pyfunction]
#[pyo3(signature = (candidate, system, ham, x0, direction="forward", options=None))]
fn integrate<'py>(
    py: Python<'py>,
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    x0: Vec<f64>,
    direction: &str,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyDict>> {
    let opts: IntegrateOptions = from_py(options)?;
    let dir = self::direction(direction)?;
    let tr = dynamics::integrate(&candidate.inner, system.inner.field(), &ham.inner, &x0, dir, &opts).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("event", tr.event.label())?;
    d.set_item("event_time", tr.event.time())?;
    d.set_item("t", tr.samples.iter().map(|s| s.t).collect::<Vec<_>>())?;
    d.set_item("x", tr.samples.iter().map(|s| s.x.clone()).collect::<Vec<_>>())?;
    d.set_item("u", tr.samples.iter().map(|s| s.u).collect::<Vec<_>>())?;
    d.set_item("v", tr.samples.iter().map(|s| s.v).collect::<Vec<_>>())?;
    d.set_item("hit_time", dynamics::hit_time(&tr))?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (candidate, system, ham, x0, options=None))]
fn monotonicity_certificate<'py>(
    py: Python<'py>,
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    x0: Vec<f64>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts: ar::CertificateOptions = from_py(options)?;
    let c = ar::monotonicity_certificate(&candidate.inner, system.inner.field(), &ham.inner, &x0, &opts).map_err(err)?;
    to_py(py, &c)
}

#[pyfunction]
#[pyo3(signature = (candidate, system, ham, lo, hi, options=None))]
fn amf_necessary_test<'py>(
    py: Python<'py>,
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    lo: Vec<f64>,
    hi: Vec<f64>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts: ar::AmfOptions = from_py(options)?;
    let bx = parse_box(lo, hi)?;
    let r = ar::amf_necessary_test(&candidate.inner, system.inner.field(), &ham.inner, &bx, &opts).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (candidate, system, ham, lo, hi, x0, options=None))]
#[allow(clippy::too_many_arguments)]
fn representation_check<'py>(
    py: Python<'py>,
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x0: Vec<f64>,
    options: Option<&Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let opts: IntegrateOptions = from_py(options)?;
    let bx = parse_box(lo, hi)?;
    let r = ar::representation_check(&candidate.inner, system.inner.field(), &ham.inner, &bx, &x0, &opts).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn analytic_bound(candidate: &Candidate, system: &System, ham: &Hamiltonian, x: Vec<f64>) -> PyResult<f64> {
    mintime::analytic_bound(&candidate.inner, system.inner.field(), &ham.inner, &x).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (candidate, system, ham, x, rho, options=None))]
fn feedback_reach_time(
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    x: Vec<f64>,
    rho: f64,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Option<f64>> {
    let opts: IntegrateOptions = from_py(options)?;
    Ok(mintime::feedback_reach_time(&candidate.inner, system.inner.field(), &ham.inner, &x, rho, &opts))
}

/// Solves the grid problem; `spec` uses the config keys (`box`, `shape`,
/// `rho`, `dt`, ...) and defaults to the 151x151 planar grid.
#[pyfunction]
#[pyo3(signature = (system, spec=None))]
fn solve_grid(py: Python<'_>, system: &System, spec: Option<&Bound<'_, PyAny>>) -> PyResult<Grid> {
    let spec: GridSpec = from_py(spec)?;
    let field = system.inner.field().clone();
    let g = py.detach(move || mintime::solve_grid(&field, &spec)).map_err(err)?;
    Ok(Grid { inner: g })
}

#[pyfunction]
#[pyo3(signature = (grid, candidate, system, ham, eps_grid=0.15))]
fn bound_compare<'py>(
    py: Python<'py>,
    grid: &Grid,
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    eps_grid: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let r = mintime::bound_compare(&grid.inner, &candidate.inner, system.inner.field(), &ham.inner, eps_grid);
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (grid, base, direction, s0, s1, count=10))]
fn modulus_estimate<'py>(
    py: Python<'py>,
    grid: &Grid,
    base: Vec<f64>,
    direction: Vec<f64>,
    s0: f64,
    s1: f64,
    count: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let line = LineSpec::geometric(base, direction, s0, s1, count);
    let r = mintime::modulus_estimate(&grid.inner, &line).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (candidate, system, ham, eps=0.5, delta=0.5, samples=2000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn excond_scan<'py>(
    py: Python<'py>,
    candidate: &Candidate,
    system: &System,
    ham: &Hamiltonian,
    eps: f64,
    delta: f64,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let pts = mintime::ball_samples(system.inner.field().n(), delta, samples, seed);
    let r = mintime::excond_scan(&candidate.inner, system.inner.field(), &ham.inner, eps, delta, &pts).map_err(err)?;
    to_py(py, &r)
}

/// Runs the command line with the given arguments and returns its exit code.
#[pyfunction]
fn cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("aronsson".to_string()).chain(args).collect();
    py.detach(move || aronsson_core::cli::main_with_args(argv))
}

#[pymodule]
fn aronsson(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AronssonError", m.py().get_type::<AronssonError>())?;
    m.add_class::<System>()?;
    m.add_class::<Hamiltonian>()?;
    m.add_class::<Candidate>()?;
    m.add_class::<Grid>()?;
    m.add_function(wrap_pyfunction!(smatrix, m)?)?;
    m.add_function(wrap_pyfunction!(residual_fd, m)?)?;
    m.add_function(wrap_pyfunction!(integrate, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity_certificate, m)?)?;
    m.add_function(wrap_pyfunction!(amf_necessary_test, m)?)?;
    m.add_function(wrap_pyfunction!(representation_check, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_bound, m)?)?;
    m.add_function(wrap_pyfunction!(feedback_reach_time, m)?)?;
    m.add_function(wrap_pyfunction!(solve_grid, m)?)?;
    m.add_function(wrap_pyfunction!(bound_compare, m)?)?;
    m.add_function(wrap_pyfunction!(modulus_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(excond_scan, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
