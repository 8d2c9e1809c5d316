//! Python bindings: scenarios, suite runs, sample paths and solutions.
//!
//! Structured results cross the boundary as JSON and come back as plain
//! dicts and lists.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use anticipating_levy::cli;
use anticipating_levy::error::Error;
use anticipating_levy::mc::{self, PathSource};
use anticipating_levy::scenario::{self, Suite, TEMPLATES};
use anticipating_levy::solution::{eps_convergence_table, Solver};
use anticipating_levy::verify::duality_residual;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Csv(_) => PyOSError::new_err(e.to_string()),
        Error::Config(_) | Error::UnknownTemplate(_) | Error::InvalidInput(_) | Error::InvalidGrid(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_dict<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A complete experiment configuration.
#[pyclass(module = "alevy", skip_from_py_object)]
#[derive(Clone)]
struct Scenario {
    inner: scenario::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn template(name: &str) -> PyResult<Self> {
        scenario::template(name).map(|inner| Self { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        scenario::Scenario::from_toml(text).map(|inner| Self { inner }).map_err(to_py)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml().map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.grid.steps
    }

    /// Also drops refinement levels that no longer divide the grid.
    #[setter]
    fn set_steps(&mut self, m: usize) {
        self.inner.grid.steps = m;
        self.inner.verify.refinement_levels.retain(|&l| l > 0 && m % l == 0);
    }

    #[getter]
    fn paths(&self) -> usize {
        self.inner.mc.paths
    }

    #[setter]
    fn set_paths(&mut self, n: usize) {
        self.inner.mc.paths = n;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.mc.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.mc.seed = seed;
    }

    #[getter]
    fn functionals(&self) -> Vec<String> {
        self.inner.verify.functionals.iter().map(|f| f.name.clone()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, steps={}, paths={}, seed={})", self.inner.name, self.inner.grid.steps, self.inner.mc.paths, self.inner.mc.seed)
    }
}

#[pyfunction]
fn templates() -> Vec<&'static str> {
    TEMPLATES.to_vec()
}

/// Run suites and return the summary; artifacts are written only when `out` is given.
#[pyfunction]
#[pyo3(signature = (scenario, suites=None, out=None))]
fn run(py: Python<'_>, scenario: &Scenario, suites: Option<Vec<String>>, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    let s = &scenario.inner;
    s.validate().map_err(to_py)?;
    let selected: Vec<Suite> = match suites {
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>().map_err(to_py)?,
        None => s.suites.clone(),
    };
    let summary = py.detach(|| cli::run(s, &selected, out.as_deref())).map_err(to_py)?;
    to_dict(py, &summary)
}

#[derive(Serialize)]
struct PathView {
    times: Vec<f64>,
    wiener: Vec<f64>,
    jump_times: Vec<f64>,
    jump_sizes: Vec<f64>,
    jump_layers: Vec<usize>,
}

fn source(s: &scenario::Scenario, suite: u64) -> PyResult<(scenario::Built, PathSource)> {
    let b = s.build().map_err(to_py)?;
    let src = PathSource::with_jumps(b.grid.clone(), b.model.clone(), s.eps_cut(), s.mc.seed, suite);
    Ok((b, src))
}

/// Sampled Wiener values at the grid nodes and the jumps of path `index`.
/// `stream` names the suite whose random stream is used, so `"solution"`
/// gives the paths behind [`solution`].
#[pyfunction]
#[pyo3(signature = (scenario, index=0, stream="sample"))]
fn sample_path(py: Python<'_>, scenario: &Scenario, index: u64, stream: &str) -> PyResult<Py<PyAny>> {
    let suite = match stream.parse::<Suite>().map_err(to_py)? {
        Suite::Sample => mc::suite::SAMPLE,
        Suite::Transform => mc::suite::TRANSFORM,
        Suite::Girsanov => mc::suite::GIRSANOV,
        Suite::Solution => mc::suite::SOLUTION,
        Suite::Verify => mc::suite::VERIFY,
    };
    let (b, src) = source(&scenario.inner, suite)?;
    let p = src.path(index);
    let jumps = p.jumps.jumps();
    let view = PathView {
        times: b.grid.nodes().to_vec(),
        wiener: p.wiener.values().to_vec(),
        jump_times: jumps.iter().map(|j| j.time).collect(),
        jump_sizes: jumps.iter().map(|j| j.size).collect(),
        jump_layers: jumps.iter().map(|j| j.layer).collect(),
    };
    to_dict(py, &view)
}

/// The full solution and its factors on path `index` at grid node `node` (default: the horizon).
#[pyfunction]
#[pyo3(signature = (scenario, index=0, node=None))]
fn solution(py: Python<'_>, scenario: &Scenario, index: u64, node: Option<usize>) -> PyResult<Py<PyAny>> {
    let s = &scenario.inner;
    let (b, src) = source(s, mc::suite::SOLUTION)?;
    let solver = Solver::new(&b.coeffs, Some(&b.model), s.mc.solver).map_err(to_py)?;
    let n = node.unwrap_or(s.grid.steps);
    if n > s.grid.steps {
        return Err(PyValueError::new_err(format!("node {n} is past the last grid node {}", s.grid.steps)));
    }
    let full = solver.full_solution(&src.path(index), n).map_err(to_py)?;
    to_dict(py, &full)
}

/// Monte Carlo duality residual for each test functional at the horizon.
#[pyfunction]
#[pyo3(signature = (scenario, eps=None, paths=None))]
fn duality(py: Python<'_>, scenario: &Scenario, eps: Option<f64>, paths: Option<usize>) -> PyResult<Py<PyAny>> {
    let s = &scenario.inner;
    let (b, src) = source(s, mc::suite::VERIFY)?;
    let eps = eps.unwrap_or_else(|| s.verify.duality_eps.first().copied().unwrap_or(0.0));
    let n = paths.unwrap_or(s.mc.paths);
    let reports = py
        .detach(|| {
            let solver = Solver::new(&b.coeffs, Some(&b.model), s.mc.solver)?;
            duality_residual(&solver, &src, &b.functionals, s.grid.steps, eps, n)
        })
        .map_err(to_py)?;
    to_dict(py, &reports)
}

/// `E|X^ε_T − X_T|` for each ε on common paths.
#[pyfunction]
#[pyo3(signature = (scenario, eps, paths=None))]
fn eps_convergence(py: Python<'_>, scenario: &Scenario, eps: Vec<f64>, paths: Option<usize>) -> PyResult<Py<PyAny>> {
    let s = &scenario.inner;
    let (b, src) = source(s, mc::suite::SOLUTION)?;
    let n = paths.unwrap_or(s.mc.paths);
    let rows = py
        .detach(|| {
            let solver = Solver::new(&b.coeffs, Some(&b.model), s.mc.solver)?;
            eps_convergence_table(&solver, &src, s.grid.steps, &eps, n)
        })
        .map_err(to_py)?;
    to_dict(py, &rows)
}

#[pymodule]
fn alevy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_function(wrap_pyfunction!(templates, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sample_path, m)?)?;
    m.add_function(wrap_pyfunction!(solution, m)?)?;
    m.add_function(wrap_pyfunction!(duality, m)?)?;
    m.add_function(wrap_pyfunction!(eps_convergence, m)?)?;
    Ok(())
}
