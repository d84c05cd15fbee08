//! Active-set solver for the structured lower-bounded QP behind the cone
//! projection: minimize the squared RKHS norm of `g` over grid functions with
//! zero boundary subject to `g >= h` at interior nodes.
//!
//! The normal operator is `Q = n^2 (T x T)` with `T` the Dirichlet second
//! difference matrix, applied as a 9-point stencil.  Equality-constrained
//! subproblems are solved by conjugate gradients on the free nodes; the dual
//! of the bound constraint at a node is twice the node's discrete measure
//! atom, so the working set is driven directly by measure negativity.  A
//! projected Gauss-Seidel restart breaks working-set cycles.

use crate::error::{Error, Result};
use crate::grid::GridFn2D;
use crate::majorant::upper_hull_values;

pub(crate) struct QpOutcome {
    /// Full node grid of the minimizer (boundary zeros included).
    pub g: Vec<f64>,
    pub iterations: usize,
}

/// `out = n^2 (T x T) g` on interior nodes, zero on the boundary frame.
/// The interior values are exactly the node atoms of the measure generated
/// by the mixed second difference of `g`.
pub(crate) fn apply_q(n: usize, g: &[f64], out: &mut [f64]) {
    let s = n + 1;
    let n2 = (n * n) as f64;
    out.fill(0.0);
    for i in 1..n {
        for j in 1..n {
            let c = 4.0 * g[i * s + j]
                - 2.0 * (g[(i - 1) * s + j]
                    + g[(i + 1) * s + j]
                    + g[i * s + j - 1]
                    + g[i * s + j + 1])
                + g[(i - 1) * s + j - 1]
                + g[(i - 1) * s + j + 1]
                + g[(i + 1) * s + j - 1]
                + g[(i + 1) * s + j + 1];
            out[i * s + j] = n2 * c;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Feasible warm start: the per-row then per-column least concave majorant of
/// `max(h, 0)`.  Each pass only raises values, so the result dominates `h`,
/// keeps the zero boundary, and is exact for products of nonnegative trends.
fn feasible_start(n: usize, h: &[f64]) -> Vec<f64> {
    let s = n + 1;
    let mut g: Vec<f64> = h.iter().map(|v| v.max(0.0)).collect();
    let mut row = vec![0.0; s];
    for i in 1..n {
        row.copy_from_slice(&g[i * s..(i + 1) * s]);
        let hull = upper_hull_values(&row);
        g[i * s..(i + 1) * s].copy_from_slice(&hull);
    }
    let mut col = vec![0.0; s];
    for j in 1..n {
        for i in 0..s {
            col[i] = g[i * s + j];
        }
        let hull = upper_hull_values(&col);
        for i in 0..s {
            g[i * s + j] = hull[i];
        }
    }
    for (gi, hi) in g.iter_mut().zip(h) {
        if *gi < *hi {
            *gi = *hi;
        }
    }
    g
}

/// Solves the equality-constrained subproblem `g = h` on the working set,
/// unconstrained elsewhere, by CG on the free nodes.  Returns the assembled
/// full grid, the final residual infinity norm and the CG iteration count.
fn solve_eqp(
    n: usize,
    h: &[f64],
    active: &[bool],
    warm: &[f64],
    cg_tol: f64,
    max_cg: usize,
) -> (Vec<f64>, f64) {
    let s = n + 1;
    let len = s * s;
    let interior = |idx: usize| {
        let (i, j) = (idx / s, idx % s);
        i >= 1 && i < n && j >= 1 && j < n
    };

    let mut pin = vec![0.0; len];
    let mut any_free = false;
    for idx in 0..len {
        if interior(idx) {
            if active[idx] {
                pin[idx] = h[idx];
            } else {
                any_free = true;
            }
        }
    }
    if !any_free {
        return (pin, 0.0);
    }

    let mut x = vec![0.0; len];
    for idx in 0..len {
        if interior(idx) && !active[idx] {
            x[idx] = warm[idx];
        }
    }

    let mut buf = vec![0.0; len];
    apply_q(n, &pin, &mut buf);
    let mut r = vec![0.0; len];
    for idx in 0..len {
        if interior(idx) && !active[idx] {
            r[idx] = -buf[idx];
        }
    }
    apply_q(n, &x, &mut buf);
    for idx in 0..len {
        if interior(idx) && !active[idx] {
            r[idx] -= buf[idx];
        }
    }

    let mut p = r.clone();
    let mut rs_old = dot(&r, &r);
    let mut res = inf_norm(&r);
    for _ in 0..max_cg {
        if res <= cg_tol {
            break;
        }
        apply_q(n, &p, &mut buf);
        for idx in 0..len {
            if !interior(idx) || active[idx] {
                buf[idx] = 0.0;
            }
        }
        let denom = dot(&p, &buf);
        if denom <= 0.0 {
            break;
        }
        let alpha = rs_old / denom;
        for idx in 0..len {
            x[idx] += alpha * p[idx];
            r[idx] -= alpha * buf[idx];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs_old;
        for idx in 0..len {
            p[idx] = r[idx] + beta * p[idx];
        }
        rs_old = rs_new;
        res = inf_norm(&r);
    }

    for idx in 0..len {
        if interior(idx) && active[idx] {
            x[idx] = h[idx];
        }
    }
    (x, res)
}

/// Projected Gauss-Seidel sweeps, the unconditionally convergent fallback.
fn projected_gauss_seidel(n: usize, h: &[f64], g: &mut [f64], sweeps: usize) {
    let s = n + 1;
    let n2 = (n * n) as f64;
    let diag = 4.0 * n2;
    for _ in 0..sweeps {
        for i in 1..n {
            for j in 1..n {
                let q = n2
                    * (4.0 * g[i * s + j]
                        - 2.0 * (g[(i - 1) * s + j]
                            + g[(i + 1) * s + j]
                            + g[i * s + j - 1]
                            + g[i * s + j + 1])
                        + g[(i - 1) * s + j - 1]
                        + g[(i - 1) * s + j + 1]
                        + g[(i + 1) * s + j - 1]
                        + g[(i + 1) * s + j + 1]);
                let t = g[i * s + j] - q / diag;
                g[i * s + j] = t.max(h[i * s + j]);
            }
        }
    }
}

pub(crate) fn solve_lower_bounded(h: &GridFn2D, tol: f64, max_iter: usize) -> Result<QpOutcome> {
    h.require_h20()?;
    let n = h.n();
    let s = n + 1;
    let len = s * s;
    let hv = h.values();

    if hv.iter().all(|&v| v <= 0.0) {
        // Zero is feasible and has zero norm; it is the projection.
        return Ok(QpOutcome { g: vec![0.0; len], iterations: 0 });
    }

    let scale = hv.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let act_eps = 1e-12 * scale;
    let feas_eps = 1e-12 * scale;
    let dual_eps = 0.1 * tol * scale;
    let cg_tol = 0.05 * tol * scale;
    let max_cg = 2000.max(8 * n * n);

    let interior = |idx: usize| {
        let (i, j) = (idx / s, idx % s);
        i >= 1 && i < n && j >= 1 && j < n
    };

    let mut g = feasible_start(n, hv);
    let mut active = vec![false; len];
    for idx in 0..len {
        active[idx] = interior(idx) && g[idx] - hv[idx] <= act_eps;
    }

    let mut atoms = vec![0.0; len];
    let mut last_res = f64::INFINITY;
    let mut releases = 0usize;
    let mut restarts = 0usize;

    for iter in 1..=max_iter {
        let (x, cg_res) = solve_eqp(n, hv, &active, &g, cg_tol, max_cg);
        last_res = cg_res;

        let mut worst = 0.0f64;
        for idx in 0..len {
            if interior(idx) && !active[idx] {
                worst = worst.max(hv[idx] - x[idx]);
            }
        }

        if worst <= feas_eps {
            g = x;
            apply_q(n, &g, &mut atoms);
            let mut any_released = false;
            for idx in 0..len {
                if active[idx] && atoms[idx] < -dual_eps {
                    active[idx] = false;
                    any_released = true;
                }
            }
            if !any_released {
                return Ok(QpOutcome { g, iterations: iter });
            }
            releases += 1;
            if releases > 30 {
                if restarts >= 2 {
                    return Err(Error::Solver { iterations: iter, residual: last_res });
                }
                projected_gauss_seidel(n, hv, &mut g, 200);
                for idx in 0..len {
                    active[idx] = interior(idx) && g[idx] - hv[idx] <= act_eps;
                }
                releases = 0;
                restarts += 1;
            }
        } else {
            // Step as far toward the subproblem solution as feasibility allows
            // and add every blocking node to the working set.
            let mut alpha = 1.0f64;
            for idx in 0..len {
                if interior(idx) && !active[idx] && x[idx] < hv[idx] {
                    let gap = g[idx] - hv[idx];
                    let drop = g[idx] - x[idx];
                    if drop > 0.0 {
                        alpha = alpha.min((gap / drop).max(0.0));
                    }
                }
            }
            for idx in 0..len {
                if interior(idx) && !active[idx] {
                    g[idx] += alpha * (x[idx] - g[idx]);
                    if g[idx] - hv[idx] <= act_eps {
                        g[idx] = hv[idx];
                        active[idx] = true;
                    }
                }
            }
        }
    }

    Err(Error::Solver { iterations: max_iter, residual: last_res })
}
