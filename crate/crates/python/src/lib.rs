//! Python bindings for the Brownian pillow boundary non-crossing library.
//!
//! Exposes the grid types, the RKHS calculus, projections and majorants,
//! path simulation, the Monte Carlo estimators and the analytic bounds.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use brownian_pillow as bp;
use brownian_pillow::estimator::McOptions;

fn err(e: bp::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// 1D grid function on the nodes i/n.
#[pyclass(name = "Grid1D", skip_from_py_object)]
#[derive(Clone)]
struct Grid1D {
    inner: bp::GridFn1D,
}

#[pymethods]
impl Grid1D {
    #[new]
    fn new(values: Vec<f64>) -> PyResult<Self> {
        Ok(Grid1D { inner: bp::GridFn1D::new(values).map_err(err)? })
    }

    #[staticmethod]
    fn builtin(name: &str, n: usize) -> PyResult<Self> {
        Ok(Grid1D { inner: bp::trends::builtin_trend_1d(name, n).map_err(err)? })
    }

    #[staticmethod]
    fn constant(n: usize, c: f64) -> PyResult<Self> {
        Ok(Grid1D { inner: bp::GridFn1D::from_fn(n, |_| c).map_err(err)? })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Grid1D { inner: bp::GridFn1D::from_csv(text).map_err(err)? })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn values(&self) -> Vec<f64> {
        self.inner.values().to_vec()
    }

    fn scaled(&self, a: f64) -> Self {
        Grid1D { inner: self.inner.scaled(a) }
    }

    fn __repr__(&self) -> String {
        format!("Grid1D(n={})", self.inner.n())
    }
}

/// 2D grid function on the nodes (i/n, j/n).
#[pyclass(name = "Grid2D", from_py_object)]
#[derive(Clone)]
struct Grid2D {
    inner: bp::GridFn2D,
}

#[pymethods]
impl Grid2D {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let n = rows.len().saturating_sub(1);
        let mut values = Vec::with_capacity(rows.len() * rows.len());
        for row in &rows {
            if row.len() != rows.len() {
                return Err(PyValueError::new_err("rows must form a square matrix"));
            }
            values.extend_from_slice(row);
        }
        Ok(Grid2D { inner: bp::GridFn2D::new(n, values).map_err(err)? })
    }

    #[staticmethod]
    fn builtin(name: &str, n: usize) -> PyResult<Self> {
        Ok(Grid2D { inner: bp::trends::builtin_trend_2d(name, n).map_err(err)? })
    }

    #[staticmethod]
    fn constant(n: usize, c: f64) -> PyResult<Self> {
        Ok(Grid2D { inner: bp::GridFn2D::constant(n, c).map_err(err)? })
    }

    #[staticmethod]
    fn outer(g1: &Grid1D, g2: &Grid1D) -> PyResult<Self> {
        Ok(Grid2D { inner: bp::GridFn2D::outer(&g1.inner, &g2.inner).map_err(err)? })
    }

    #[staticmethod]
    fn from_csv(text: &str) -> PyResult<Self> {
        Ok(Grid2D { inner: bp::GridFn2D::from_csv(text).map_err(err)? })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.inner.at(i, j)
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.inner.n();
        (0..=n)
            .map(|i| (0..=n).map(|j| self.inner.at(i, j)).collect())
            .collect()
    }

    fn scaled(&self, a: f64) -> Self {
        Grid2D { inner: self.inner.scaled(a) }
    }

    fn add(&self, other: &Grid2D) -> PyResult<Self> {
        Ok(Grid2D { inner: self.inner.add(&other.inner).map_err(err)? })
    }

    fn sub(&self, other: &Grid2D) -> PyResult<Self> {
        Ok(Grid2D { inner: self.inner.sub(&other.inner).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Grid2D(n={})", self.inner.n())
    }
}

/// Result of a cone projection.
#[pyclass(name = "Projection")]
struct Projection {
    inner: bp::ProjectionResult,
}

#[pymethods]
impl Projection {
    #[getter]
    fn h_bar(&self) -> Grid2D {
        Grid2D { inner: self.inner.h_bar.clone() }
    }

    #[getter]
    fn v_part(&self) -> Grid2D {
        Grid2D { inner: self.inner.v_part.clone() }
    }

    #[getter]
    fn norm(&self) -> f64 {
        self.inner.norm
    }

    #[getter]
    fn contact_set(&self) -> Vec<(usize, usize)> {
        self.inner.contact_set.clone()
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residuals.max()
    }

    fn __repr__(&self) -> String {
        format!(
            "Projection(norm={:.6}, contact={}, iterations={})",
            self.inner.norm,
            self.inner.contact_set.len(),
            self.inner.iterations
        )
    }
}

/// Monte Carlo estimate.
#[pyclass(name = "Estimate")]
struct Estimate {
    inner: bp::estimator::McEstimate,
}

#[pymethods]
impl Estimate {
    #[getter]
    fn p(&self) -> f64 {
        self.inner.p()
    }

    #[getter]
    fn log_p(&self) -> f64 {
        self.inner.log_p()
    }

    #[getter]
    fn std_err(&self) -> f64 {
        self.inner.std_err
    }

    #[getter]
    fn log_std_err(&self) -> Option<f64> {
        self.inner.log_std_err
    }

    #[getter]
    fn ci95(&self) -> (f64, f64) {
        self.inner.ci95
    }

    #[getter]
    fn n_paths(&self) -> usize {
        self.inner.n_paths
    }

    #[getter]
    fn flags(&self) -> Vec<String> {
        self.inner.flags.clone()
    }

    fn __repr__(&self) -> String {
        format!("Estimate(p={:.6}, std_err={:.2e})", self.inner.p(), self.inner.std_err)
    }
}

/// One gamma sweep row.
#[pyclass(name = "SweepRow", skip_from_py_object)]
#[derive(Clone)]
struct SweepRow {
    #[pyo3(get)]
    gamma: f64,
    #[pyo3(get)]
    log_psi: f64,
    #[pyo3(get)]
    rate: f64,
    #[pyo3(get)]
    remainder: f64,
    #[pyo3(get)]
    std_err: f64,
}

/// Gamma sweep outcome.
#[pyclass(name = "Sweep")]
struct Sweep {
    #[pyo3(get)]
    rows: Vec<SweepRow>,
    #[pyo3(get)]
    norm_sq: f64,
    #[pyo3(get)]
    stieltjes_i: f64,
    #[pyo3(get)]
    contact_log_prob: f64,
}

#[pyfunction]
fn rkhs_norm_1d(g: &Grid1D) -> PyResult<f64> {
    bp::rkhs_norm_1d(&g.inner).map_err(err)
}

#[pyfunction]
fn rkhs_norm_2d(g: &Grid2D) -> PyResult<f64> {
    bp::rkhs_norm_2d(&g.inner).map_err(err)
}

#[pyfunction]
fn rkhs_inner(a: &Grid2D, b: &Grid2D) -> PyResult<f64> {
    bp::rkhs_inner(&a.inner, &b.inner).map_err(err)
}

#[pyfunction]
fn mixed_second_diff(g: &Grid2D) -> PyResult<Vec<Vec<f64>>> {
    let cells = bp::mixed_second_diff(&g.inner).map_err(err)?;
    let n = cells.n();
    Ok((0..n).map(|i| (0..n).map(|j| cells.at(i, j)).collect()).collect())
}

/// Integral of `g` against the measure generated by `h''`.
#[pyfunction]
fn stieltjes_integral_2d(g: &Grid2D, h: &Grid2D) -> PyResult<f64> {
    let cells = bp::mixed_second_diff(&h.inner).map_err(err)?;
    bp::stieltjes_integral_2d(&g.inner, &cells).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (g, h_tilde, tol = 1e-9))]
fn stieltjes_integral_1d(g: &Grid1D, h_tilde: &Grid1D, tol: f64) -> PyResult<f64> {
    bp::stieltjes_integral_1d(&g.inner, &h_tilde.inner, tol).map_err(err)
}

/// Returns `(h_tilde, norm, knots)`.
#[pyfunction]
fn least_concave_majorant(g: &Grid1D) -> PyResult<(Grid1D, f64, Vec<usize>)> {
    let m = bp::least_concave_majorant(&g.inner).map_err(err)?;
    Ok((Grid1D { inner: m.h_tilde }, m.norm, m.knots))
}

#[pyfunction]
#[pyo3(signature = (h, tol = 1e-8, max_iter = 400))]
fn project_polar_cone(h: &Grid2D, tol: f64, max_iter: usize) -> PyResult<Projection> {
    Ok(Projection { inner: bp::project_polar_cone(&h.inner, tol, max_iter).map_err(err)? })
}

#[pyfunction]
#[pyo3(signature = (h, tol = 1e-8, max_iter = 400))]
fn project_w(h: &Grid2D, tol: f64, max_iter: usize) -> PyResult<Projection> {
    Ok(Projection { inner: bp::project_w(&h.inner, tol, max_iter).map_err(err)? })
}

#[pyfunction]
fn product_majorant(h1: &Grid1D, h2: &Grid1D) -> PyResult<Grid2D> {
    Ok(Grid2D { inner: bp::product_majorant(&h1.inner, &h2.inner).map_err(err)? })
}

/// Returns `(pass, [(check, pass, residual), ...])`.
#[pyfunction]
#[pyo3(signature = (h, pr, tol = 1e-8))]
fn verify_projection(
    h: &Grid2D,
    pr: &Projection,
    tol: f64,
) -> PyResult<(bool, Vec<(String, bool, f64)>)> {
    let report = bp::verify_projection(&h.inner, &pr.inner, tol).map_err(err)?;
    let checks = report
        .checks
        .iter()
        .map(|c| (c.name.to_string(), c.pass, c.residual))
        .collect();
    Ok((report.pass, checks))
}

#[pyfunction]
fn pillow_cov(s: f64, t: f64, s2: f64, t2: f64) -> PyResult<f64> {
    bp::pillow_cov(s, t, s2, t2).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (n, count, seed, stream = 0))]
fn sample_pillow_paths(n: usize, count: usize, seed: u64, stream: u64) -> PyResult<Vec<Grid2D>> {
    let batch = bp::sample_pillow_batch(n, count, seed, stream).map_err(err)?;
    Ok(batch.paths.into_iter().map(|inner| Grid2D { inner }).collect())
}

fn opts(paths: usize, seed: u64, stream: u64, block: usize) -> McOptions {
    McOptions::new(paths, seed).with_stream(stream).with_block_size(block)
}

#[pyfunction]
#[pyo3(signature = (u, h, paths, seed, stream = 0, block = 4096))]
fn estimate_direct(
    u: &Grid2D,
    h: &Grid2D,
    paths: usize,
    seed: u64,
    stream: u64,
    block: usize,
) -> PyResult<Estimate> {
    let est = bp::estimator::estimate_direct(&u.inner, &h.inner, opts(paths, seed, stream, block))
        .map_err(err)?;
    Ok(Estimate { inner: est })
}

#[pyfunction]
#[pyo3(signature = (u, h, shift, paths, seed, stream = 0, block = 4096))]
fn estimate_cm(
    u: &Grid2D,
    h: &Grid2D,
    shift: &Grid2D,
    paths: usize,
    seed: u64,
    stream: u64,
    block: usize,
) -> PyResult<Estimate> {
    let est = bp::estimator::estimate_cm(
        &u.inner,
        &h.inner,
        &shift.inner,
        opts(paths, seed, stream, block),
    )
    .map_err(err)?;
    Ok(Estimate { inner: est })
}

#[pyfunction]
#[pyo3(signature = (l, u, paths, seed, stream = 0, block = 4096))]
fn estimate_band(
    l: &Grid2D,
    u: &Grid2D,
    paths: usize,
    seed: u64,
    stream: u64,
    block: usize,
) -> PyResult<Estimate> {
    let est = bp::estimator::estimate_band(&l.inner, &u.inner, opts(paths, seed, stream, block))
        .map_err(err)?;
    Ok(Estimate { inner: est })
}

#[pyfunction]
#[pyo3(signature = (eps, n, paths, seed, stream = 0, block = 4096))]
fn estimate_small_ball(
    eps: f64,
    n: usize,
    paths: usize,
    seed: u64,
    stream: u64,
    block: usize,
) -> PyResult<Estimate> {
    let est = bp::estimator::estimate_small_ball(eps, n, opts(paths, seed, stream, block))
        .map_err(err)?;
    Ok(Estimate { inner: est })
}

#[pyfunction]
#[pyo3(signature = (u, h, gammas, paths, seed, block = 4096))]
fn gamma_sweep(
    u: &Grid2D,
    h: &Grid2D,
    gammas: Vec<f64>,
    paths: usize,
    seed: u64,
    block: usize,
) -> PyResult<Sweep> {
    let sweep =
        bp::estimator::gamma_sweep(&u.inner, &h.inner, &gammas, opts(paths, seed, 0, block))
            .map_err(err)?;
    Ok(Sweep {
        rows: sweep
            .rows
            .into_iter()
            .map(|r| SweepRow {
                gamma: r.gamma,
                log_psi: r.log_psi_hat,
                rate: r.rate_hat,
                remainder: r.remainder_hat,
                std_err: r.std_err,
            })
            .collect(),
        norm_sq: sweep.norm_sq,
        stieltjes_i: sweep.stieltjes_i,
        contact_log_prob: sweep.contact_log_prob,
    })
}

#[pyfunction]
fn normal_cdf(x: f64) -> f64 {
    bp::bounds::normal_cdf(x)
}

#[pyfunction]
fn normal_quantile(p: f64) -> PyResult<f64> {
    bp::bounds::normal_quantile(p).map_err(err)
}

#[pyfunction]
fn shift_bounds(psi0: f64, norm_low: f64, norm_up: f64) -> PyResult<(f64, f64)> {
    bp::bounds::shift_bounds(psi0, norm_low, norm_up).map_err(err)
}

#[pyfunction]
fn diff_bounds(norm_low: f64, norm_up: f64) -> PyResult<(f64, f64)> {
    bp::bounds::diff_bounds(norm_low, norm_up).map_err(err)
}

#[pyfunction]
fn exp_upper_bound(u: &Grid2D, h: &Grid2D, pr: &Projection, psi_residual: f64) -> PyResult<f64> {
    bp::bounds::exp_upper_bound(&u.inner, &h.inner, &pr.inner, psi_residual).map_err(err)
}

#[pyfunction]
fn exp_lower_bound(l: &Grid2D, u: &Grid2D, pr: &Projection, band: f64) -> PyResult<f64> {
    bp::bounds::exp_lower_bound(&l.inner, &u.inner, &pr.inner, band).map_err(err)
}

#[pyfunction]
fn constant_boundary_upper(c: f64, pr: &Projection, psi_residual: f64) -> PyResult<f64> {
    bp::bounds::constant_boundary_upper(c, &pr.inner, psi_residual).map_err(err)
}

/// Returns `(value, argmin_label)`.
#[pyfunction]
#[pyo3(signature = (u, candidates = Vec::new(), include_builtin = true))]
fn psi0_upper_bound(
    u: &Grid2D,
    candidates: Vec<Grid2D>,
    include_builtin: bool,
) -> PyResult<(f64, String)> {
    let labeled: Vec<(String, bp::GridFn2D)> = candidates
        .into_iter()
        .enumerate()
        .map(|(k, g)| (format!("candidate-{k}"), g.inner))
        .collect();
    let bound = bp::bounds::psi0_upper_bound(&u.inner, &labeled, include_builtin).map_err(err)?;
    Ok((bound.value, bound.argmin))
}

#[pyfunction]
fn product_asymptote(
    u1: &Grid1D,
    u2: &Grid1D,
    h1: &Grid1D,
    h2: &Grid1D,
    gamma: f64,
) -> PyResult<f64> {
    bp::bounds::product_asymptote(&u1.inner, &u2.inner, &h1.inner, &h2.inner, gamma).map_err(err)
}

#[pymodule]
fn brownian_pillow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Grid1D>()?;
    m.add_class::<Grid2D>()?;
    m.add_class::<Projection>()?;
    m.add_class::<Estimate>()?;
    m.add_class::<SweepRow>()?;
    m.add_class::<Sweep>()?;
    m.add_function(wrap_pyfunction!(rkhs_norm_1d, m)?)?;
    m.add_function(wrap_pyfunction!(rkhs_norm_2d, m)?)?;
    m.add_function(wrap_pyfunction!(rkhs_inner, m)?)?;
    m.add_function(wrap_pyfunction!(mixed_second_diff, m)?)?;
    m.add_function(wrap_pyfunction!(stieltjes_integral_2d, m)?)?;
    m.add_function(wrap_pyfunction!(stieltjes_integral_1d, m)?)?;
    m.add_function(wrap_pyfunction!(least_concave_majorant, m)?)?;
    m.add_function(wrap_pyfunction!(project_polar_cone, m)?)?;
    m.add_function(wrap_pyfunction!(project_w, m)?)?;
    m.add_function(wrap_pyfunction!(product_majorant, m)?)?;
    m.add_function(wrap_pyfunction!(verify_projection, m)?)?;
    m.add_function(wrap_pyfunction!(pillow_cov, m)?)?;
    m.add_function(wrap_pyfunction!(sample_pillow_paths, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_direct, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_cm, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_band, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_small_ball, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(normal_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(normal_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(shift_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(diff_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(exp_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(exp_lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(constant_boundary_upper, m)?)?;
    m.add_function(wrap_pyfunction!(psi0_upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(product_asymptote, m)?)?;
    Ok(())
}
