//! Minimal-norm majorants: the 1D least concave majorant, the 2D projection
//! onto the polar cone of the nonpositive functions, its mirror for the
//! nonnegative cone, and the product shortcut for separable trends.
//!
//! The 2D projection solves `min ||g||` over `g >= h` in the discrete H2_0
//! space.  At the optimum the discrete measure generated by `g''` is
//! nonnegative and supported on the contact set `{g = h}`, which is exactly
//! the KKT system of the QP; [`verify_projection`] re-derives those
//! certificates from scratch.

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::grid::{
    measure_atoms, mixed_second_diff, rkhs_inner, rkhs_norm_1d, rkhs_norm_2d, GridFn1D,
    GridFn2D,
};
use crate::solver;

/// Default iteration budget for the projection solver.
pub const DEFAULT_MAX_ITER: usize = 200;

/// Least concave majorant of a 1D grid function.
#[derive(Debug, Clone)]
pub struct MajorantResult1D {
    pub h_tilde: GridFn1D,
    pub norm: f64,
    /// Hull vertex indices, left to right; collinear vertices are retained.
    pub knots: Vec<usize>,
}

/// Upper convex hull values of a sampled function on a uniform grid.
/// Collinear hull points are kept as vertices.
pub(crate) fn upper_hull(values: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let m = values.len();
    let mut stack: Vec<usize> = Vec::with_capacity(m);
    for c in 0..m {
        while stack.len() >= 2 {
            let a = stack[stack.len() - 2];
            let b = stack[stack.len() - 1];
            // drop b only when strictly below the chord a--c
            let lhs = (values[b] - values[a]) * ((c - a) as f64);
            let rhs = (values[c] - values[a]) * ((b - a) as f64);
            if lhs < rhs {
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(c);
    }
    let mut hull = values.to_vec();
    for w in stack.windows(2) {
        let (a, b) = (w[0], w[1]);
        let step = (values[b] - values[a]) / ((b - a) as f64);
        for k in a + 1..b {
            hull[k] = values[a] + step * ((k - a) as f64);
        }
        hull[b] = values[b];
    }
    (hull, stack)
}

pub(crate) fn upper_hull_values(values: &[f64]) -> Vec<f64> {
    upper_hull(values).0
}

/// Least concave majorant of an H1_0 grid function: the upper convex hull of
/// the sampled points, the unique minimal-norm majorant on the grid.
pub fn least_concave_majorant(h: &GridFn1D) -> Result<MajorantResult1D> {
    h.require_h10()?;
    let (values, knots) = upper_hull(h.values());
    let h_tilde = GridFn1D::new(values)?;
    let norm = rkhs_norm_1d(&h_tilde)?;
    Ok(MajorantResult1D { h_tilde, norm, knots })
}

/// Residual magnitudes of the projection certificates.
#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    /// `max(0, max(h - g))`: violation of `g >= h`.
    pub feasibility: f64,
    /// `max(0, -min atom)`: violation of measure nonnegativity.
    pub stationarity: f64,
    /// `max |atom * (g - h)|`: complementary slackness defect.
    pub complementarity: f64,
    /// `|<g, h - g>|`: defect of the projection orthogonality.
    pub orthogonality: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.feasibility
            .max(self.stationarity)
            .max(self.complementarity)
            .max(self.orthogonality)
    }
}

/// Result of projecting a trend onto the polar cone (or, via [`project_w`],
/// onto the mirrored cone).
#[derive(Debug, Clone)]
pub struct ProjectionResult {
    /// The projection: for the polar cone the minimal-norm majorant of `h`,
    /// for the mirror the maximal-norm-minimal minorant.
    pub h_bar: GridFn2D,
    /// Complementary projection `h - h_bar` (nonpositive for the polar cone).
    pub v_part: GridFn2D,
    /// RKHS norm of `h_bar`.
    pub norm: f64,
    /// KKT multipliers of `g >= h` (twice the measure atoms), zero off the
    /// contact set.
    pub multipliers: GridFn2D,
    /// Nodes where `h_bar = h` up to the solver tolerance.
    pub contact_set: Vec<(usize, usize)>,
    pub iterations: usize,
    pub residuals: Residuals,
}

impl Serialize for ProjectionResult {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = serializer.serialize_struct("ProjectionResult", 5)?;
        st.serialize_field("h_bar", &self.h_bar.to_csv())?;
        st.serialize_field("norm", &self.norm)?;
        st.serialize_field("residuals", &self.residuals)?;
        st.serialize_field("contact_set", &self.contact_set)?;
        st.serialize_field("iterations", &self.iterations)?;
        st.end()
    }
}

fn assemble_result(
    h: &GridFn2D,
    g: GridFn2D,
    iterations: usize,
    tol: f64,
) -> Result<ProjectionResult> {
    let n = h.n();
    let scale = h.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let contact_tol = tol * scale;

    let v_part = h.sub(&g)?;
    let norm = rkhs_norm_2d(&g)?;
    let atoms = measure_atoms(&mixed_second_diff(&g)?);

    let mut contact_set = Vec::new();
    let mut multipliers = GridFn2D::zeros(n)?;
    for i in 0..=n {
        for j in 0..=n {
            if (g.at(i, j) - h.at(i, j)).abs() <= contact_tol {
                contact_set.push((i, j));
                multipliers.set(i, j, 2.0 * atoms.at(i, j));
            }
        }
    }

    let mut feasibility = 0.0f64;
    let mut stationarity = 0.0f64;
    let mut complementarity = 0.0f64;
    for i in 0..=n {
        for j in 0..=n {
            feasibility = feasibility.max(h.at(i, j) - g.at(i, j));
            stationarity = stationarity.max(-atoms.at(i, j));
            complementarity =
                complementarity.max((atoms.at(i, j) * (g.at(i, j) - h.at(i, j))).abs());
        }
    }
    let orthogonality = rkhs_inner(&g, &v_part)?.abs();

    Ok(ProjectionResult {
        h_bar: g,
        v_part,
        norm,
        multipliers,
        contact_set,
        iterations,
        residuals: Residuals {
            feasibility: feasibility.max(0.0),
            stationarity: stationarity.max(0.0),
            complementarity,
            orthogonality,
        },
    })
}

/// Projects `h` onto the polar cone of `{v <= 0}`: solves
/// `min ||g||  s.t.  g >= h, g in H2_0`, the minimisation problem whose
/// solution is the minimal-norm majorant of the trend.
pub fn project_polar_cone(h: &GridFn2D, tol: f64, max_iter: usize) -> Result<ProjectionResult> {
    let out = solver::solve_lower_bounded(h, tol, max_iter)?;
    let g = GridFn2D::new(h.n(), out.g)?;
    assemble_result(h, g, out.iterations, tol)
}

/// Mirror projection onto the polar cone of `{w >= 0}`: solves
/// `min ||g||  s.t.  g <= h`, returned as `-project_polar_cone(-h)` with the
/// same multipliers and contact set.  Satisfies `h_bar <= h` node-wise.
pub fn project_w(h: &GridFn2D, tol: f64, max_iter: usize) -> Result<ProjectionResult> {
    let pr = project_polar_cone(&h.scaled(-1.0), tol, max_iter)?;
    Ok(ProjectionResult {
        h_bar: pr.h_bar.scaled(-1.0),
        v_part: pr.v_part.scaled(-1.0),
        norm: pr.norm,
        multipliers: pr.multipliers,
        contact_set: pr.contact_set,
        iterations: pr.iterations,
        residuals: pr.residuals,
    })
}

/// Product shortcut: when `h = h1 x h2` and the product of the 1D least
/// concave majorants dominates `h` at every node, that product is the
/// projection of `h` onto the polar cone.  The domination precondition is
/// automatic for nonnegative factors and is checked node by node.
pub fn product_majorant(h1: &GridFn1D, h2: &GridFn1D) -> Result<GridFn2D> {
    let m1 = least_concave_majorant(h1)?;
    let m2 = least_concave_majorant(h2)?;
    let cand = GridFn2D::outer(&m1.h_tilde, &m2.h_tilde)?;
    let base = GridFn2D::outer(h1, h2)?;
    let scale = base.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let n = cand.n();
    for i in 0..=n {
        for j in 0..=n {
            if cand.at(i, j) < base.at(i, j) - 1e-12 * scale {
                return Err(Error::domain(format!(
                    "product majorant does not dominate the trend at node ({i}, {j}): \
                     {} < {}; fall back to project_polar_cone",
                    cand.at(i, j),
                    base.at(i, j)
                )));
            }
        }
    }
    Ok(cand)
}

/// One certificate check of [`verify_projection`].
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub residual: f64,
}

/// Certificate report for a claimed polar-cone projection.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionReport {
    pub checks: Vec<Check>,
    pub pass: bool,
}

/// Re-derives the projection certificates for a claimed result: feasibility,
/// membership of the complement in the nonpositive cone, orthogonality of the
/// decomposition, nonnegativity of the generated measure, and complementary
/// slackness.  Each failure pins the claimed optimum away from the unique
/// projection.
pub fn verify_projection(h: &GridFn2D, pr: &ProjectionResult, tol: f64) -> Result<ProjectionReport> {
    h.same_grid(&pr.h_bar)?;
    let n = h.n();
    let scale = h.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol_abs = tol * scale;

    let g = &pr.h_bar;
    let v = h.sub(g)?;
    let atoms = measure_atoms(&mixed_second_diff(g)?);

    let mut feas = 0.0f64;
    let mut vmax = 0.0f64;
    let mut meas = 0.0f64;
    let mut comp = 0.0f64;
    let mut atom_scale = 1.0f64;
    let mut decomp = 0.0f64;
    for i in 0..=n {
        for j in 0..=n {
            feas = feas.max(h.at(i, j) - g.at(i, j));
            vmax = vmax.max(v.at(i, j));
            meas = meas.max(-atoms.at(i, j));
            atom_scale = atom_scale.max(atoms.at(i, j).abs());
            comp = comp.max((atoms.at(i, j) * (g.at(i, j) - h.at(i, j))).abs());
            decomp = decomp.max((h.at(i, j) - g.at(i, j) - pr.v_part.at(i, j)).abs());
        }
    }
    let norm_sq = pr.norm * pr.norm;
    let ortho = rkhs_inner(g, &v)?.abs();

    let checks = vec![
        Check { name: "feasibility", pass: feas <= tol_abs, residual: feas.max(0.0) },
        Check { name: "v_membership", pass: vmax <= tol_abs, residual: vmax.max(0.0) },
        Check {
            name: "orthogonality",
            pass: ortho <= tol * norm_sq.max(1e-30) + tol_abs * 1e-6,
            residual: ortho,
        },
        Check { name: "measure_nonneg", pass: meas <= tol_abs, residual: meas.max(0.0) },
        Check {
            name: "complementary_slackness",
            pass: comp <= tol_abs * atom_scale,
            residual: comp,
        },
        Check { name: "decomposition", pass: decomp <= 1e-12 * scale, residual: decomp },
    ];
    let pass = checks.iter().all(|c| c.pass);
    Ok(ProjectionReport { checks, pass })
}
