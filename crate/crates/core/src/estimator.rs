//! Monte Carlo estimators of the boundary non-crossing probability
//! `psi(u; h) = P(B0 + h <= u everywhere)`: the direct fraction, a
//! Cameron-Martin importance-sampled variant, band and small-ball
//! probabilities, and rate sweeps along `gamma -> psi(u; gamma h)`.
//!
//! The Cameron-Martin estimator rewrites the event through the change of
//! measure at a shift `g` in H2_0:
//!
//! `psi(u; h) = E[ exp(int g'' dB - ||g||^2 / 2) 1(B + h - g <= u) ]`,
//!
//! which reduces to the direct estimator at `g = 0` and to the classical
//! identity at `g = h`.  The stochastic integral is the cell sum
//! `sum g'' dB` over mixed path increments; on the grid it has variance
//! exactly `||g||^2`, so the weights have unit mean.
//!
//! Weights accumulate in log space in fixed-size blocks; results are a pure
//! function of `(inputs, seed, stream, block size)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{
    mixed_second_diff, rkhs_inner, stieltjes_integral_2d, CellField2D, GridFn2D,
    DEFAULT_SOLVER_TOL,
};
use crate::majorant::{project_polar_cone, DEFAULT_MAX_ITER};
use crate::sim::{path_rng, sample_pillow};

/// Default reduction block size (see `McOptions::block_size`).
pub const DEFAULT_BLOCK_SIZE: usize = 4096;

/// Sampling options shared by all estimators.
#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Independent estimates from one seed use distinct stream ids.
    pub stream_id: u64,
    /// Paths are reduced block by block in index order; fixing the block
    /// size fixes the floating-point reduction tree.
    pub block_size: usize,
}

impl McOptions {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        McOptions { n_paths, seed, stream_id: 0, block_size: DEFAULT_BLOCK_SIZE }
    }

    pub fn with_stream(mut self, stream_id: u64) -> Self {
        self.stream_id = stream_id;
        self
    }

    pub fn with_block_size(mut self, block_size: usize) -> Self {
        self.block_size = block_size.max(1);
        self
    }
}

/// A Monte Carlo probability estimate.
#[derive(Debug, Clone, Serialize)]
pub struct McEstimate {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_p_hat: Option<f64>,
    /// Standard error on the probability scale: sample std / sqrt(n_paths).
    pub std_err: f64,
    /// Standard error of `log_p_hat` (delta method).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_std_err: Option<f64>,
    pub ci95: (f64, f64),
    pub n_paths: usize,
    pub n_grid: usize,
    pub seed: u64,
    pub flags: Vec<String>,
}

impl McEstimate {
    /// Probability on the linear scale.
    pub fn p(&self) -> f64 {
        self.p_hat.unwrap_or_else(|| self.log_p_hat.map_or(0.0, f64::exp))
    }

    /// Log probability; negative infinity for an exact zero.
    pub fn log_p(&self) -> f64 {
        self.log_p_hat.unwrap_or_else(|| self.p().ln())
    }

    fn deterministic_zero(n_grid: usize, opts: &McOptions) -> Self {
        McEstimate {
            p_hat: Some(0.0),
            log_p_hat: None,
            std_err: 0.0,
            log_std_err: None,
            ci95: (0.0, 0.0),
            n_paths: 0,
            n_grid,
            seed: opts.seed,
            flags: vec!["deterministic_zero".into()],
        }
    }
}

/// Running log-sum-exp: stores `sum exp(l)` as `s * exp(m)`.
#[derive(Clone, Copy)]
struct LogSum {
    m: f64,
    s: f64,
}

impl LogSum {
    fn empty() -> Self {
        LogSum { m: f64::NEG_INFINITY, s: 0.0 }
    }

    fn push(&mut self, l: f64) {
        if self.s == 0.0 {
            self.m = l;
            self.s = 1.0;
        } else if l > self.m {
            self.s = self.s * (self.m - l).exp() + 1.0;
            self.m = l;
        } else {
            self.s += (l - self.m).exp();
        }
    }

    fn merge(&mut self, other: LogSum) {
        if other.s == 0.0 {
            return;
        }
        if self.s == 0.0 {
            *self = other;
        } else if other.m > self.m {
            self.s = self.s * (self.m - other.m).exp() + other.s;
            self.m = other.m;
        } else {
            self.s += other.s * (other.m - self.m).exp();
        }
    }
}

struct Moments {
    mean: f64,
    log_mean: f64,
    std_err: f64,
    log_std_err: f64,
    ess: f64,
}

/// Runs `n_paths` pillow paths and reduces `value = exp(l)` per path
/// (None meaning zero) into mean, standard error and effective sample size.
fn run_mc<F>(n: usize, opts: &McOptions, mut eval: F) -> Moments
where
    F: FnMut(u64, &GridFn2D) -> Option<f64>,
{
    let mut total1 = LogSum::empty();
    let mut total2 = LogSum::empty();
    let mut block1 = LogSum::empty();
    let mut block2 = LogSum::empty();
    let mut in_block = 0usize;
    for p in 0..opts.n_paths {
        let mut rng = path_rng(opts.seed, opts.stream_id, p as u64);
        let b = sample_pillow(n, &mut rng);
        if let Some(l) = eval(p as u64, &b) {
            block1.push(l);
            block2.push(2.0 * l);
        }
        in_block += 1;
        if in_block == opts.block_size {
            total1.merge(block1);
            total2.merge(block2);
            block1 = LogSum::empty();
            block2 = LogSum::empty();
            in_block = 0;
        }
    }
    total1.merge(block1);
    total2.merge(block2);

    let n_paths = opts.n_paths as f64;
    if total1.s == 0.0 {
        return Moments {
            mean: 0.0,
            log_mean: f64::NEG_INFINITY,
            std_err: 0.0,
            log_std_err: f64::NAN,
            ess: 0.0,
        };
    }
    // mean = exp(m) * s / N keeps the integer-count path exact when m = 0
    let mean = total1.m.exp() * (total1.s / n_paths);
    let log_mean = total1.m + (total1.s / n_paths).ln();
    // ratio = E[v^2] / E[v]^2, stable in log space
    let log_ratio = total2.m + total2.s.ln() - 2.0 * (total1.m + total1.s.ln()) + n_paths.ln();
    let rel_var = (log_ratio.exp() - 1.0).max(0.0);
    let log_std_err = (rel_var / n_paths).sqrt();
    let std_err = mean * log_std_err;
    let ess = (2.0 * (total1.m + total1.s.ln()) - (total2.m + total2.s.ln())).exp();
    Moments { mean, log_mean, std_err, log_std_err, ess }
}

fn clip01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn finish(n_grid: usize, opts: &McOptions, m: Moments, log_scale: bool, flags: Vec<String>) -> McEstimate {
    let ci = (clip01(m.mean - 1.96 * m.std_err), clip01(m.mean + 1.96 * m.std_err));
    McEstimate {
        p_hat: Some(m.mean),
        log_p_hat: if log_scale { Some(m.log_mean) } else { None },
        std_err: m.std_err,
        log_std_err: if log_scale && m.log_std_err.is_finite() {
            Some(m.log_std_err)
        } else {
            None
        },
        ci95: ci,
        n_paths: opts.n_paths,
        n_grid,
        seed: opts.seed,
        flags,
    }
}

fn check_paths(opts: &McOptions) -> Result<()> {
    if opts.n_paths < 100 {
        return Err(Error::domain(format!(
            "n_paths must be at least 100, got {}",
            opts.n_paths
        )));
    }
    Ok(())
}

/// True when `B = 0` on the pinned boundary already violates `B + h <= u`.
fn boundary_zero_infeasible(u: &GridFn2D, h: &GridFn2D) -> bool {
    let n = u.n();
    for k in 0..=n {
        for (i, j) in [(0, k), (n, k), (k, 0), (k, n)] {
            if h.at(i, j) > u.at(i, j) {
                return true;
            }
        }
    }
    false
}

/// Discrete Wiener integral `sum_cells g'' * (mixed increment of the path)`.
/// For H2_0 integrands it coincides with the Riemann-Stieltjes value
/// `int path d(g'')` by discrete integration by parts.
pub fn wiener_integral(cells: &CellField2D, path: &GridFn2D) -> Result<f64> {
    if cells.n() != path.n() {
        return Err(Error::dimension(format!(
            "grid sizes differ: {} vs {}",
            cells.n(),
            path.n()
        )));
    }
    let n = cells.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let inc =
                path.at(i + 1, j + 1) - path.at(i + 1, j) - path.at(i, j + 1) + path.at(i, j);
            total += cells.at(i, j) * inc;
        }
    }
    Ok(total)
}

/// Direct estimator: the fraction of pillow paths with `B + h <= u` at every
/// node.  Returns an exact zero when the pinned boundary already crosses.
pub fn estimate_direct(u: &GridFn2D, h: &GridFn2D, opts: McOptions) -> Result<McEstimate> {
    u.same_grid(h)?;
    check_paths(&opts)?;
    let n = u.n();
    if boundary_zero_infeasible(u, h) {
        return Ok(McEstimate::deterministic_zero(n, &opts));
    }
    let m = run_mc(n, &opts, |_, b| {
        let ok = (0..=n).all(|i| (0..=n).all(|j| b.at(i, j) + h.at(i, j) <= u.at(i, j)));
        if ok {
            Some(0.0)
        } else {
            None
        }
    });
    Ok(finish(n, &opts, m, false, Vec::new()))
}

/// Cameron-Martin estimator of `psi(u; h)` recentered at `shift` in H2_0:
/// weights `exp(int shift'' dB - ||shift||^2 / 2)` against the indicator of
/// `B + (h - shift) <= u`.  At `shift = 0` this is the direct estimator path
/// for path; at `shift = h` it is the classical change-of-measure identity.
pub fn estimate_cm(
    u: &GridFn2D,
    h: &GridFn2D,
    shift: &GridFn2D,
    opts: McOptions,
) -> Result<McEstimate> {
    u.same_grid(h)?;
    u.same_grid(shift)?;
    shift.require_h20()?;
    check_paths(&opts)?;
    let n = u.n();
    if boundary_zero_infeasible(u, h) {
        return Ok(McEstimate::deterministic_zero(n, &opts));
    }
    let cells = mixed_second_diff(shift)?;
    let norm_sq = rkhs_inner(shift, shift)?;
    let residual = h.sub(shift)?;
    let m = run_mc(n, &opts, |p, b| {
        let ok = (0..=n).all(|i| {
            (0..=n).all(|j| b.at(i, j) + residual.at(i, j) <= u.at(i, j))
        });
        if !ok {
            return None;
        }
        let ito = wiener_integral(&cells, b).expect("same grid");
        if cfg!(debug_assertions) && p < 8 {
            let parts = stieltjes_integral_2d(b, &cells).expect("same grid");
            debug_assert!(
                (ito - parts).abs() <= 1e-10 * (1.0 + ito.abs()),
                "Ito sum {ito} disagrees with integration by parts {parts}"
            );
        }
        Some(ito - 0.5 * norm_sq)
    });
    let mut flags = Vec::new();
    if m.ess < 50.0 {
        flags.push("low_ess".into());
    }
    Ok(finish(n, &opts, m, true, flags))
}

/// Band probability `P(l <= B0 <= u at every node)`.
pub fn estimate_band(l: &GridFn2D, u: &GridFn2D, opts: McOptions) -> Result<McEstimate> {
    l.same_grid(u)?;
    check_paths(&opts)?;
    let n = u.n();
    for i in 0..=n {
        for j in 0..=n {
            if l.at(i, j) > u.at(i, j) {
                return Err(Error::domain(format!(
                    "lower boundary exceeds upper boundary at node ({i}, {j})"
                )));
            }
        }
    }
    let zero = GridFn2D::zeros(n)?;
    if boundary_zero_infeasible(u, &zero) || boundary_zero_infeasible(&l.scaled(-1.0), &zero) {
        return Ok(McEstimate::deterministic_zero(n, &opts));
    }
    let m = run_mc(n, &opts, |_, b| {
        let ok = (0..=n)
            .all(|i| (0..=n).all(|j| l.at(i, j) <= b.at(i, j) && b.at(i, j) <= u.at(i, j)));
        if ok {
            Some(0.0)
        } else {
            None
        }
    });
    Ok(finish(n, &opts, m, false, Vec::new()))
}

/// Small-ball probability `P(max |B0| < eps)` at the grid nodes.
pub fn estimate_small_ball(eps: f64, n: usize, opts: McOptions) -> Result<McEstimate> {
    if eps <= 0.0 {
        return Err(Error::domain(format!("eps must be positive, got {eps}")));
    }
    if n < 2 {
        return Err(Error::domain(format!("grid needs n >= 2 cells, got {n}")));
    }
    check_paths(&opts)?;
    let m = run_mc(n, &opts, |_, b| {
        let ok = b.values().iter().all(|v| v.abs() < eps);
        if ok {
            Some(0.0)
        } else {
            None
        }
    });
    Ok(finish(n, &opts, m, false, Vec::new()))
}

/// One row of a rate sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub log_psi_hat: f64,
    /// `-2 gamma^-2 log psi_hat`, the raw large-deviation rate estimate.
    pub rate_hat: f64,
    /// `log psi_hat + gamma^2 ||h_under||^2 / 2 - gamma I`: the part of the
    /// log probability not explained by the norm and boundary terms.
    pub remainder_hat: f64,
    /// Standard error of `log_psi_hat`.
    pub std_err: f64,
}

/// Sweep output: per-gamma rows plus the gamma-independent context.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// `||h_under||^2` for the projection of the unscaled trend.
    pub norm_sq: f64,
    /// `I = int u d(h_under'')` for the unscaled trend.
    pub stieltjes_i: f64,
    /// Log of the estimated probability of `B0 <= u` on the contact set,
    /// the upper bracket for the remainder.
    pub contact_log_prob: f64,
    pub contact_log_std_err: f64,
    pub contact_count: usize,
}

/// Estimates `psi(u; gamma h)` for each `gamma`, importance-sampled with the
/// shift `gamma * h_under` where `h_under` is the projection of `h` onto the
/// polar cone.  Row `k` uses stream `stream_id + k`; rows are independent.
pub fn gamma_sweep(
    u: &GridFn2D,
    h: &GridFn2D,
    gammas: &[f64],
    opts: McOptions,
) -> Result<SweepResult> {
    u.same_grid(h)?;
    h.require_h20()?;
    if gammas.is_empty() {
        return Err(Error::domain("gamma list is empty"));
    }
    for w in gammas.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::domain(format!(
                "gammas must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    if gammas[0] <= 0.0 {
        return Err(Error::domain(format!("gammas must be positive, got {}", gammas[0])));
    }

    let pr = project_polar_cone(h, DEFAULT_SOLVER_TOL, DEFAULT_MAX_ITER)?;
    let cells = mixed_second_diff(&pr.h_bar)?;
    let big_i = stieltjes_integral_2d(u, &cells)?;
    let norm_sq = pr.norm * pr.norm;

    let mut rows = Vec::with_capacity(gammas.len());
    for (k, &gamma) in gammas.iter().enumerate() {
        let trend = h.scaled(gamma);
        let shift = pr.h_bar.scaled(gamma);
        let est = estimate_cm(
            u,
            &trend,
            &shift,
            opts.with_stream(opts.stream_id + k as u64),
        )?;
        let log_psi = est.log_p();
        if !log_psi.is_finite() {
            return Err(Error::domain(format!(
                "no path satisfied the recentered event at gamma = {gamma}; \
                 increase n_paths"
            )));
        }
        rows.push(SweepRow {
            gamma,
            log_psi_hat: log_psi,
            rate_hat: -2.0 / (gamma * gamma) * log_psi,
            remainder_hat: log_psi + 0.5 * gamma * gamma * norm_sq - gamma * big_i,
            std_err: est.log_std_err.unwrap_or(f64::NAN),
        });
    }

    // Upper bracket for the remainder: P(B0 <= u on the contact set).
    let u_contact = boundary_on_nodes(u, &pr.contact_set)?;
    let zero = GridFn2D::zeros(u.n())?;
    let contact = estimate_direct(
        &u_contact,
        &zero,
        opts.with_stream(opts.stream_id + gammas.len() as u64),
    )?;
    Ok(SweepResult {
        rows,
        norm_sq,
        stieltjes_i: big_i,
        contact_log_prob: contact.p().ln(),
        contact_log_std_err: contact.std_err / contact.p(),
        contact_count: pr.contact_set.len(),
    })
}

/// Boundary equal to `u` on the given nodes and +inf elsewhere, so that the
/// non-crossing event only constrains those nodes.
pub fn boundary_on_nodes(u: &GridFn2D, nodes: &[(usize, usize)]) -> Result<GridFn2D> {
    let n = u.n();
    let mut out = GridFn2D::constant(n, f64::INFINITY)?;
    for &(i, j) in nodes {
        if i > n || j > n {
            return Err(Error::dimension(format!("node ({i}, {j}) outside grid n = {n}")));
        }
        out.set(i, j, u.at(i, j));
    }
    Ok(out)
}
