//! Python bindings. Results cross the boundary as JSON strings so the Python
//! side only needs the standard library.

use kinetic_manifold::chapman::{classify, CLASSIFY_TOL};
use kinetic_manifold::linear::build_decomposition;
use kinetic_manifold::manifold::{normal_form, taylor_expand};
use kinetic_manifold::model::{verify_hypotheses, HYPOTHESIS_TOL};
use kinetic_manifold::profiles::burgers_exact as burgers;
use kinetic_manifold::registry::{resolve_model, REGISTRY};
use kinetic_manifold::KmError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: KmError) -> PyErr {
    if e.is_usage() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

pub fn registry_names() -> Vec<String> {
    REGISTRY.iter().map(|e| e.name.to_string()).collect()
}

pub fn verify_json(model: &str) -> Result<String, KmError> {
    let m = resolve_model(model, None)?;
    Ok(serde_json::to_string(&verify_hypotheses(&m, HYPOTHESIS_TOL))?)
}

pub fn classify_json(model: &str) -> Result<String, KmError> {
    let m = resolve_model(model, None)?;
    let dec = build_decomposition(&m)?;
    Ok(classify(&m, &dec, CLASSIFY_TOL)?.to_json_value().to_string())
}

/// (kappa, chi, Lambda, relative deviation of kappa chi from Lambda / 2).
pub fn normal_form_tuple(model: &str, order: usize) -> Result<(f64, f64, f64, Option<f64>), KmError> {
    let m = resolve_model(model, None)?;
    let dec = build_decomposition(&m)?;
    let cls = classify(&m, &dec, CLASSIFY_TOL)?;
    let nf = normal_form(&taylor_expand(&dec, &m, order)?, &cls)?;
    Ok((nf.kappa, nf.chi, nf.lambda, nf.deviation))
}

/// Runs the command line in-process and returns (exit code, stdout).
pub fn run_cli(args: &[String]) -> (i32, String) {
    let mut argv = vec!["km".to_string()];
    argv.extend_from_slice(args);
    let mut buf = Vec::new();
    let code = kinetic_manifold::cli::run(&argv, &mut buf);
    (code, String::from_utf8_lossy(&buf).into_owned())
}

#[pyfunction]
fn models() -> Vec<String> {
    registry_names()
}

#[pyfunction]
fn verify(model: &str) -> PyResult<String> {
    verify_json(model).map_err(to_py)
}

#[pyfunction(name = "classify")]
fn classify_py(model: &str) -> PyResult<String> {
    classify_json(model).map_err(to_py)
}

#[pyfunction(name = "normal_form", signature = (model, order = 3))]
fn normal_form_py(model: &str, order: usize) -> PyResult<(f64, f64, f64, Option<f64>)> {
    normal_form_tuple(model, order).map_err(to_py)
}

#[pyfunction]
fn burgers_exact(eps: f64, lam: f64, kappa: f64, x: f64) -> f64 {
    burgers(eps, lam, kappa, x)
}

#[pyfunction]
fn run(args: Vec<String>) -> (i32, String) {
    run_cli(&args)
}

#[pymodule]
fn kinetic_manifold_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(models, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(classify_py, m)?)?;
    m.add_function(wrap_pyfunction!(normal_form_py, m)?)?;
    m.add_function(wrap_pyfunction!(burgers_exact, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
