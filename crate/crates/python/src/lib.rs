//! Python bindings for the toy-model, vector-field and collision checks.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use kinlab::collision::{self, CollisionQuadrature, KernelSpec, VelField};
use kinlab::gevrey::{self, SharpnessSetup};
use kinlab::spectral::ModeGrid;
use kinlab::toy::{self, ToySpec};
use kinlab::vecfield;

fn py_err(e: kinlab::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// ψ(t, m, η) = ∫₀ᵗ |η + ρm|^{2s} dρ, closed form where one exists.
#[pyfunction]
#[pyo3(signature = (t, m, eta, s, tol = 1e-12))]
fn psi(t: f64, m: Vec<f64>, eta: Vec<f64>, s: f64, tol: f64) -> f64 {
    toy::psi(t, &m, &eta, s, tol)
}

#[pyfunction]
#[pyo3(signature = (t, a, b, c, s, tol = 1e-12))]
fn psi_quadrature(t: f64, a: f64, b: f64, c: f64, s: f64, tol: f64) -> f64 {
    toy::psi_quadrature(t, a, b, c, s, tol)
}

#[pyfunction]
#[pyo3(signature = (s, t, m_max = 8, n_v = 256, v_max = 8.0 * std::f64::consts::PI))]
fn equiv_scan<'py>(py: Python<'py>, s: f64, t: f64, m_max: usize, n_v: usize, v_max: f64) -> PyResult<Bound<'py, PyDict>> {
    let g = ModeGrid::new(1, m_max, 1, n_v, v_max).map_err(py_err)?;
    let e = toy::equiv_scan(&g, s, t, 1e-10);
    let d = PyDict::new(py);
    d.set_item("min_ratio", e.min_ratio)?;
    d.set_item("max_ratio", e.max_ratio)?;
    d.set_item("c", e.c)?;
    Ok(d)
}

/// Fitted Gevrey index σ of the exact toy solution at time `t` from data
/// `(1 + |m| + |η|)^{-p}`.
#[pyfunction]
#[pyo3(signature = (s, t = 1.0, n_v = 8192, v_max = std::f64::consts::PI, m_max = 8, p = 4.0, shell_min = 20.0, shell_max = 4000.0))]
#[allow(clippy::too_many_arguments)]
fn fit_gevrey_index(
    s: f64,
    t: f64,
    n_v: usize,
    v_max: f64,
    m_max: usize,
    p: f64,
    shell_min: f64,
    shell_max: f64,
) -> PyResult<f64> {
    let g = ModeGrid::new(1, m_max, 1, n_v, v_max).map_err(py_err)?;
    let spec = ToySpec::new(s, 0.0, t, 1e-10).map_err(py_err)?;
    let f = toy::exact_evolve(&gevrey::polynomial_data(&g, p), t, &spec).map_err(py_err)?;
    Ok(gevrey::fit_decay(&f, shell_min, shell_max).map_err(py_err)?.sigma)
}

/// "convergent", "divergent" or "inconclusive".
#[pyfunction]
#[pyo3(signature = (s, r, c, t = 1.0))]
fn sharpness_verdict(s: f64, r: f64, c: f64, t: f64) -> PyResult<String> {
    let rep = gevrey::sharpness_witness(s, r, t, c, &SharpnessSetup::default()).map_err(py_err)?;
    Ok(serde_verdict(rep.verdict))
}

fn serde_verdict(v: gevrey::Verdict) -> String {
    match v {
        gevrey::Verdict::Convergent => "convergent",
        gevrey::Verdict::Divergent => "divergent",
        gevrey::Verdict::Inconclusive => "inconclusive",
    }
    .into()
}

/// `(rel_x, rel_v)` residuals of the generation identity at one point.
#[pyfunction]
fn generation_residual(lambda: f64, s: f64, t: f64, m: Vec<f64>, eta: Vec<f64>) -> PyResult<(f64, f64)> {
    let pair = vecfield::delta_pair(lambda, s).map_err(py_err)?;
    let r = vecfield::generation_check(&pair, t, &m, &eta);
    Ok((r.rel_x, r.rel_v))
}

/// `Q(f, f)` at the grid points for real samples in row-major `(v1, v2, v3)`
/// order, plus the five relative moment residuals.
#[pyfunction]
#[pyo3(signature = (samples, n_v, v_max, n_theta = 4, n_phi = 4, s = 0.5, theta_min = 1e-3))]
#[allow(clippy::too_many_arguments)]
fn collide(
    samples: Vec<f64>,
    n_v: usize,
    v_max: f64,
    n_theta: usize,
    n_phi: usize,
    s: f64,
    theta_min: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let q = CollisionQuadrature::new(n_v, v_max, n_theta, n_phi).map_err(py_err)?;
    let k = KernelSpec::new(0.0, s, 1.0, theta_min).map_err(py_err)?;
    let f = VelField::from_real(&q, &samples).map_err(py_err)?;
    let out = collision::q_apply(&f, &f, &k, &q).map_err(py_err)?;
    let res = collision::moment_residuals(out.values(), &q).to_vec();
    Ok((out.real(), res))
}

/// Velocity grid points of a collision quadrature, row-major.
#[pyfunction]
fn velocity_points(n_v: usize, v_max: f64) -> PyResult<Vec<[f64; 3]>> {
    let q = CollisionQuadrature::new(n_v, v_max, 1, 2).map_err(py_err)?;
    Ok((0..q.n_points()).map(|i| q.point(i)).collect())
}

/// Runs a CLI subcommand on a config file and returns the exit code.
#[pyfunction]
#[pyo3(signature = (subcommand, config, out = None))]
fn run(subcommand: &str, config: std::path::PathBuf, out: Option<std::path::PathBuf>) -> PyResult<i32> {
    let cmd = kinlab::cli::Subcommand::from_name(subcommand)
        .ok_or_else(|| PyValueError::new_err(format!("unknown subcommand {subcommand:?}")))?;
    Ok(kinlab::cli::execute(cmd, &config, out, None))
}

#[pymodule]
fn kinlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(psi, m)?)?;
    m.add_function(wrap_pyfunction!(psi_quadrature, m)?)?;
    m.add_function(wrap_pyfunction!(equiv_scan, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gevrey_index, m)?)?;
    m.add_function(wrap_pyfunction!(sharpness_verdict, m)?)?;
    m.add_function(wrap_pyfunction!(generation_residual, m)?)?;
    m.add_function(wrap_pyfunction!(collide, m)?)?;
    m.add_function(wrap_pyfunction!(velocity_points, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
