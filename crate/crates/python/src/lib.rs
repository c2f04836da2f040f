//! Python module `minmax_fem_py`: single solves, paired rungs, config
//! driven runs and the extrapolation helpers.

use minmax_fem::analysis::{self, Study};
use minmax_fem::cli;
use minmax_fem::geometry::{transform_coefficients as coefficients, Branch, Mode, PhysicalSystem};
use minmax_fem::solver::{minmax_solve, schroedinger_solve, SolverConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: minmax_fem::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    match mode {
        "relativistic" => Ok(Mode::Relativistic),
        "nonrelativistic" => Ok(Mode::Nonrelativistic),
        _ => Err(PyValueError::new_err("mode must be relativistic or nonrelativistic")),
    }
}

fn study(z1: f64, z2: f64, r: f64, nu: u32, d_max: f64, p: usize, n_i: usize, k_max: usize) -> PyResult<Study> {
    let sys = PhysicalSystem::new(z1, z2, r, Mode::Relativistic).map_err(py_err)?;
    let mut s = Study::new(sys, nu, d_max);
    s.p = p;
    s.solver = SolverConfig { n_i, k_max, ..SolverConfig::default() };
    s.solver.validate().map_err(py_err)?;
    Ok(s)
}

/// Ground-state energy on grid `m` in the given mode.
#[pyfunction]
#[pyo3(signature = (z1, z2, r, nu, d_max, m, p = 10, mode = "relativistic", n_i = 25, k_max = 9))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    z1: f64,
    z2: f64,
    r: f64,
    nu: u32,
    d_max: f64,
    m: usize,
    p: usize,
    mode: &str,
    n_i: usize,
    k_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = parse_mode(mode)?;
    let st = study(z1, z2, r, nu, d_max, p, n_i, k_max)?;
    let spec = st.transform().map_err(py_err)?;
    let mesh = st.mesh(m).map_err(py_err)?;
    let sys = st.system.with_mode(mode);
    let res = py
        .detach(|| match mode {
            Mode::Relativistic => minmax_solve(&mesh, &sys, &spec, &st.solver),
            Mode::Nonrelativistic => schroedinger_solve(&mesh, &sys, &spec, &st.solver),
        })
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("energy", res.energy)?;
    d.set_item("outer_iters", res.outer_iters)?;
    d.set_item("inner_iters", res.inner_iters)?;
    d.set_item("residual", res.residual_norm)?;
    d.set_item("Ne", mesh.ne())?;
    d.set_item("N", mesh.n_nodes())?;
    Ok(d)
}

/// Paired relativistic and nonrelativistic solves on grid `m`.
#[pyfunction]
#[pyo3(signature = (z1, z2, r, nu, d_max, m, p = 10, n_i = 25, k_max = 9))]
#[allow(clippy::too_many_arguments)]
fn rung<'py>(
    py: Python<'py>,
    z1: f64,
    z2: f64,
    r: f64,
    nu: u32,
    d_max: f64,
    m: usize,
    p: usize,
    n_i: usize,
    k_max: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let st = study(z1, z2, r, nu, d_max, p, n_i, k_max)?;
    let s = py.detach(|| analysis::solve_rung(&st, m, None)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("m", s.rung.m)?;
    d.set_item("Ne", s.rung.ne)?;
    d.set_item("N", s.rung.n)?;
    d.set_item("E_rel", s.rung.e_rel)?;
    d.set_item("E_nrel", s.rung.e_nrel)?;
    d.set_item("shift", s.rung.shift)?;
    d.set_item("outer_iters", s.rung.outer_iters)?;
    Ok(d)
}

/// Validates a flat config and returns it with every default written out.
#[pyfunction]
fn normalize_config(text: &str) -> PyResult<String> {
    cli::parse_config(text).map(|c| cli::serialize_config(&c)).map_err(py_err)
}

/// Runs a flat config and returns the report text.
#[pyfunction]
fn run_config(py: Python<'_>, text: &str) -> PyResult<String> {
    let cfg = cli::parse_config(text).map_err(py_err)?;
    py.detach(|| cli::run(&cfg)).map(|r| r.text).map_err(py_err)
}

/// `(E∞, uncertainty, q)` from the last three `(N, E)` rungs.
#[pyfunction]
#[pyo3(signature = (n, e, q = None))]
fn extrapolate(n: Vec<f64>, e: Vec<f64>, q: Option<f64>) -> PyResult<(f64, f64, f64)> {
    if n.len() != e.len() {
        return Err(PyValueError::new_err("n and e differ in length"));
    }
    let pts: Vec<(f64, f64)> = n.into_iter().zip(e).collect();
    let ex = analysis::extrapolate(&pts, q).map_err(py_err)?;
    Ok((ex.value, ex.uncertainty, ex.q))
}

/// Order `q` of `|E − E_ref| ∼ N^(−q)`.
#[pyfunction]
#[pyo3(signature = (n, e, e_ref, noise_floor = None))]
fn fit_order(n: Vec<f64>, e: Vec<f64>, e_ref: f64, noise_floor: Option<f64>) -> PyResult<f64> {
    if n.len() != e.len() {
        return Err(PyValueError::new_err("n and e differ in length"));
    }
    let pts: Vec<(f64, f64)> = n.into_iter().zip(e).collect();
    analysis::fit_convergence_order(&pts, e_ref, noise_floor)
        .map(|f| f.q)
        .map_err(py_err)
}

/// Integer coefficients of the order-`nu` transformation.
#[pyfunction]
fn transform_coefficients(nu: u32, branch: &str) -> PyResult<Vec<i64>> {
    let b = match branch {
        "sinh" => Branch::Sinh,
        "sin" => Branch::Sin,
        _ => return Err(PyValueError::new_err("branch must be sinh or sin")),
    };
    coefficients(nu, b).map_err(py_err)
}

#[pymodule]
fn minmax_fem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(rung, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(extrapolate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_order, m)?)?;
    m.add_function(wrap_pyfunction!(transform_coefficients, m)?)?;
    Ok(())
}
