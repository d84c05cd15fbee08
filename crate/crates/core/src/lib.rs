//! Boundary non-crossing probabilities of the Brownian pillow.
//!
//! The Brownian pillow is the centered Gaussian field on the unit square with
//! covariance `(min(s,s') - ss')(min(t,t') - tt')`, pinned to zero on the
//! boundary.  This crate computes and bounds the probability that the field
//! plus a trend stays below a boundary function everywhere:
//!
//! * [`grid`]: grid functions on [0,1] and [0,1]^2, forward-difference RKHS
//!   inner products and discrete Riemann-Stieltjes integrals;
//! * [`majorant`]: the minimal-norm majorant of a trend (projection onto the
//!   polar cone of the nonpositive functions), least concave majorants and
//!   the product shortcut;
//! * [`sim`]: seeded, reproducible simulation of Brownian sheet and pillow
//!   paths on the grid;
//! * [`estimator`]: direct and Cameron-Martin importance-sampled Monte Carlo
//!   estimators, band and small-ball probabilities, and rate sweeps;
//! * [`bounds`]: Gaussian shift bounds, exponential upper/lower bounds and
//!   boundary-at-zero bounds, assembled into a reconciliation report;
//! * [`trends`]: built-in trend families used by the CLI and tests.

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod grid;
pub mod majorant;
pub mod sim;
pub mod trends;

mod solver;

/// Library version, embedded in CLI artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use grid::{
    corner_combination, measure_atoms, mixed_second_diff, rkhs_inner, rkhs_inner_1d,
    rkhs_norm_1d, rkhs_norm_2d, stieltjes_integral_1d, stieltjes_integral_2d, CellField2D,
    GridFn1D, GridFn2D, DEFAULT_ALGEBRAIC_TOL, DEFAULT_SOLVER_TOL,
};
pub use majorant::{
    least_concave_majorant, product_majorant, project_polar_cone, project_w,
    verify_projection, MajorantResult1D, ProjectionReport, ProjectionResult,
};
pub use sim::{pillow_cov, sample_pillow, sample_pillow_batch, sample_sheet, PathBatch};
