use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nullpulse::error::Error;
use nullpulse::geometry::Background;
use nullpulse::harness::{self, RunConfig};
use nullpulse::verify;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Resolution(_) | Error::Horizon { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Round-trips through Python's json module so callers get plain dicts.
fn to_object<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn config(toml: Option<&str>) -> PyResult<RunConfig> {
    match toml {
        Some(t) => RunConfig::from_toml(t).map_err(to_py),
        None => Ok(RunConfig::default()),
    }
}

fn background(m: f64) -> PyResult<Background> {
    if m == 0.0 {
        Ok(Background::minkowski())
    } else {
        Background::schwarzschild(m).map_err(to_py)
    }
}

/// r* of an area radius r > 2m.
#[pyfunction]
#[pyo3(signature = (r, m = 1.0))]
fn tortoise(r: f64, m: f64) -> PyResult<f64> {
    background(m)?.tortoise(r).map_err(to_py)
}

/// Area radius of a tortoise coordinate.
#[pyfunction]
#[pyo3(signature = (rstar, m = 1.0))]
fn radius_from_tortoise(rstar: f64, m: f64) -> PyResult<f64> {
    Ok(background(m)?.radius_from_tortoise(rstar).map_err(to_py)?.r)
}

/// The default run configuration as TOML.
#[pyfunction]
fn default_config() -> PyResult<String> {
    RunConfig::default().to_toml().map_err(to_py)
}

/// Evolves a TOML configuration (the default when omitted) and returns the outcome.
#[pyfunction]
#[pyo3(signature = (toml = None))]
fn run(py: Python<'_>, toml: Option<&str>) -> PyResult<Py<PyAny>> {
    let c = config(toml)?;
    let out = py.detach(|| harness::run(&c)).map_err(to_py)?;
    to_object(py, &out)
}

#[pyfunction]
#[pyo3(signature = (deltas, toml = None))]
fn sweep(py: Python<'_>, deltas: Vec<f64>, toml: Option<&str>) -> PyResult<Py<PyAny>> {
    let c = config(toml)?;
    let res = py.detach(|| harness::sweep(&c, &deltas)).map_err(to_py)?;
    to_object(py, &res)
}

/// (slope, intercept, stderr) of log y against log x.
#[pyfunction]
fn fit_powerlaw(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(PyValueError::new_err("xs and ys differ in length"));
    }
    let pts: Vec<(f64, f64)> = xs.into_iter().zip(ys).collect();
    let f = harness::fit_powerlaw(&pts).map_err(to_py)?;
    Ok((f.slope, f.intercept, f.stderr))
}

#[pyfunction]
#[pyo3(signature = (h0 = 0.1, samples = 20, seed = 10))]
fn verify_suite(py: Python<'_>, h0: f64, samples: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let rep = py.detach(|| verify::standard_suite(h0, samples, seed)).map_err(to_py)?;
    to_object(py, &rep)
}

#[pymodule]
pub fn nullpulse_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tortoise, m)?)?;
    m.add_function(wrap_pyfunction!(radius_from_tortoise, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(fit_powerlaw, m)?)?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    Ok(())
}
