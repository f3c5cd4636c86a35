//! Python bindings: thin wrappers over the subdiff library returning plain
//! Python data (lists, dicts, CSV strings). Build with
//! `cargo build -p subdiff-py`, then import the produced cdylib as
//! `subdiff_py` (see `python/smoke_test.py`).

use std::collections::HashMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use subdiff::cq::certify_symbol_bounds;
use subdiff::harness::{run_convergence_study, run_time_decay_study, DecaySpec, StudySpec};
use subdiff::oracles::catalog;
use subdiff::stepper::{advance_final, SchemeConfig, Variant};

fn parse_variant(name: &str) -> PyResult<Variant> {
    match name {
        "uncorrected" => Ok(Variant::Uncorrected),
        "corrected2" => Ok(Variant::Corrected2),
        "corrected3" => Ok(Variant::Corrected3),
        other => Err(PyValueError::new_err(format!(
            "unknown variant {other:?}, expected uncorrected, corrected2 or corrected3"
        ))),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Backward-Euler convolution quadrature weights b_0..b_n_max.
#[pyfunction]
fn cq_weights(alpha: f64, n_max: usize) -> PyResult<Vec<f64>> {
    Ok(subdiff::cq::be_cq_weights(alpha, n_max)
        .map_err(value_err)?
        .weights)
}

/// E_alpha(z) for alpha in (0, 1] and z <= 5.
#[pyfunction]
fn mittag_leffler(alpha: f64, z: f64) -> PyResult<f64> {
    subdiff::oracles::mittag_leffler(alpha, z).map_err(value_err)
}

/// Solution value of D^alpha u = t^beta, u(0) = 0, at time t.
#[pyfunction]
fn ode_power_solution(alpha: f64, beta: f64, t: f64) -> PyResult<f64> {
    subdiff::oracles::ode_power_solution(alpha, beta, t).map_err(value_err)
}

/// Scalar fractional Crank-Nicolson run for D^alpha u + lam u = 0,
/// u(0) = u0; returns u at steps 0..n_steps.
#[pyfunction]
#[pyo3(signature = (alpha, lam, u0, tau, n_steps, variant = "corrected2"))]
fn advance_scalar(
    alpha: f64,
    lam: f64,
    u0: f64,
    tau: f64,
    n_steps: usize,
    variant: &str,
) -> PyResult<Vec<f64>> {
    subdiff::stepper::advance_scalar(alpha, lam, u0, tau, n_steps, parse_variant(variant)?)
        .map_err(value_err)
}

/// Solves a catalogued problem to t_final and returns the interior nodal
/// coefficients together with their discrete L2 norm.
#[pyfunction]
#[pyo3(signature = (problem, alpha, t_final, n_steps, variant = "corrected2", m = 64, beta = None))]
fn solve_final(
    problem: &str,
    alpha: f64,
    t_final: f64,
    n_steps: usize,
    variant: &str,
    m: usize,
    beta: Option<f64>,
) -> PyResult<(Vec<f64>, f64)> {
    let spec = catalog(problem, alpha, beta).map_err(value_err)?;
    let space = spec.build_space(m).map_err(value_err)?;
    let initial = spec.initial_data(&space).map_err(value_err)?;
    let sampler = spec.sampler(&space);
    let cfg = SchemeConfig {
        alpha,
        tau: t_final / n_steps as f64,
        n_steps,
        variant: parse_variant(variant)?,
    };
    let state = advance_final(&initial, sampler.as_ref(), &cfg).map_err(value_err)?;
    let norm = state.l2_norm();
    Ok((state.coeffs.iter().copied().collect(), norm))
}

/// Convergence study over a ladder of step counts; returns the CSV text
/// the command line tool would print.
#[pyfunction]
#[pyo3(signature = (problem, alpha, n_values, variant = "corrected2", m = 64,
                    t_final = 1.0, refinement = 1000, beta = None))]
#[allow(clippy::too_many_arguments)]
fn run_convergence(
    problem: &str,
    alpha: f64,
    n_values: Vec<usize>,
    variant: &str,
    m: usize,
    t_final: f64,
    refinement: usize,
    beta: Option<f64>,
) -> PyResult<String> {
    let spec = StudySpec {
        problem: problem.to_string(),
        alpha,
        beta,
        variant: parse_variant(variant)?,
        m,
        t_final,
        n_values,
        refinement,
    };
    let table = run_convergence_study(&spec).map_err(value_err)?;
    table.to_csv_string().map_err(value_err)
}

/// Error decay study toward t -> 0 at fixed step count; returns CSV text.
#[pyfunction]
#[pyo3(signature = (problem, alpha, t_values, variant = "corrected2", m = 64,
                    n_steps = 10, refinement = 1000, beta = None))]
#[allow(clippy::too_many_arguments)]
fn run_time_decay(
    problem: &str,
    alpha: f64,
    t_values: Vec<f64>,
    variant: &str,
    m: usize,
    n_steps: usize,
    refinement: usize,
    beta: Option<f64>,
) -> PyResult<String> {
    let spec = DecaySpec {
        problem: problem.to_string(),
        alpha,
        beta,
        variant: parse_variant(variant)?,
        m,
        n_steps,
        t_values,
        refinement,
    };
    let table = run_time_decay_study(&spec).map_err(value_err)?;
    table.to_csv_string().map_err(value_err)
}

/// Sweeps the quadrature contour and returns the certified symbol ratios
/// and bounds as a dict.
#[pyfunction]
#[pyo3(signature = (alpha, tau, theta, delta = 0.05, n_samples = 400))]
fn certify_symbols(
    alpha: f64,
    tau: f64,
    theta: f64,
    delta: f64,
    n_samples: usize,
) -> PyResult<HashMap<String, f64>> {
    let r = certify_symbol_bounds(alpha, tau, theta, delta, n_samples).map_err(value_err)?;
    Ok(HashMap::from([
        ("g_abs_min".to_string(), r.g_abs_min),
        ("g_abs_max".to_string(), r.g_abs_max),
        ("g_linear_ratio".to_string(), r.g_linear_ratio),
        ("g_power_ratio".to_string(), r.g_power_ratio),
        ("mu_ratio".to_string(), r.mu_ratio),
        ("mu0_ratio".to_string(), r.mu0_ratio),
        ("beta_diff_ratio".to_string(), r.beta_diff_ratio),
        ("beta_pow_ratio".to_string(), r.beta_pow_ratio),
        ("beta_abs_min".to_string(), r.beta_abs_min),
        ("beta_abs_max".to_string(), r.beta_abs_max),
    ]))
}

#[pymodule]
fn subdiff_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(cq_weights, m)?)?;
    m.add_function(wrap_pyfunction!(mittag_leffler, m)?)?;
    m.add_function(wrap_pyfunction!(ode_power_solution, m)?)?;
    m.add_function(wrap_pyfunction!(advance_scalar, m)?)?;
    m.add_function(wrap_pyfunction!(solve_final, m)?)?;
    m.add_function(wrap_pyfunction!(run_convergence, m)?)?;
    m.add_function(wrap_pyfunction!(run_time_decay, m)?)?;
    m.add_function(wrap_pyfunction!(certify_symbols, m)?)?;
    Ok(())
}
