//! Functions sampled on uniform grids of [0,1] and [0,1]^2, together with the
//! discrete RKHS calculus built on forward differences.
//!
//! Grid conventions: a grid with `n` cells per axis has `n + 1` nodes at
//! `i / n`.  The derivative of a 1D grid function is the forward difference
//! scaled by `n` (one value per cell); the mixed derivative of a 2D grid
//! function is the four-node difference scaled by `n^2` (one value per cell).
//! With these conventions the discrete inner products below are the exact
//! RKHS inner products of the piecewise (bi)linear interpolants.
//!
//! The discrete Riemann-Stieltjes measure generated by a cell field lives on
//! nodes: the atom at an interior node is the second mixed difference of the
//! cell field across the four adjacent cells.  The field is treated as
//! constant outside [0,1]^2, so nodes on the boundary frame carry no mass and
//! a constant field generates the zero measure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance for algebraic identities (rearrangements of the same sum).
pub const DEFAULT_ALGEBRAIC_TOL: f64 = 1e-10;
/// Default tolerance for solver-derived quantities (feasibility, duals).
pub const DEFAULT_SOLVER_TOL: f64 = 1e-8;

/// Real-valued function sampled on the uniform grid `{i/n : i = 0..=n}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn1D {
    n: usize,
    values: Vec<f64>,
}

impl GridFn1D {
    /// Wraps `values` as a grid function with `values.len() - 1` cells.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(Error::domain(format!(
                "grid needs at least 3 nodes (n >= 2), got {}",
                values.len()
            )));
        }
        Ok(GridFn1D { n: values.len() - 1, values })
    }

    /// Samples `f` at the grid nodes.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs n >= 2 cells, got {n}")));
        }
        let values = (0..=n).map(|i| f(i as f64 / n as f64)).collect();
        Ok(GridFn1D { n, values })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(vec![0.0; n + 1])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Node coordinate `i / n`.
    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// Checks membership in the discrete H1_0 space: zero endpoints.
    pub fn require_h10(&self) -> Result<()> {
        for &i in &[0, self.n] {
            if self.values[i] != 0.0 {
                return Err(Error::domain(format!(
                    "function is not in H1_0: node {i} has value {} (expected 0)",
                    self.values[i]
                )));
            }
        }
        Ok(())
    }

    /// Forward-difference derivative, one slope per cell, scaled by `n`.
    pub fn slopes(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.values.windows(2).map(|w| (w[1] - w[0]) * n).collect()
    }

    pub fn scaled(&self, a: f64) -> Self {
        GridFn1D { n: self.n, values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Serializes as `n=<n>` followed by one row of comma separated values.
    pub fn to_csv(&self) -> String {
        let row: Vec<String> = self.values.iter().map(|v| format_f64(*v)).collect();
        format!("n={}\n{}\n", self.n, row.join(","))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let n = parse_header(lines.next())?;
        let row = lines
            .next()
            .ok_or_else(|| Error::Parse("missing value row".into()))?;
        let values = parse_row(row, n + 1, 1)?;
        Self::new(values)
    }
}

/// Real-valued function sampled on the uniform grid of [0,1]^2, stored
/// row-major: entry `(i, j)` is the value at `(i/n, j/n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFn2D {
    n: usize,
    values: Vec<f64>,
}

impl GridFn2D {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs n >= 2 cells, got {n}")));
        }
        if values.len() != (n + 1) * (n + 1) {
            return Err(Error::dimension(format!(
                "expected {} node values for n = {n}, got {}",
                (n + 1) * (n + 1),
                values.len()
            )));
        }
        Ok(GridFn2D { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs n >= 2 cells, got {n}")));
        }
        let nf = n as f64;
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                values.push(f(i as f64 / nf, j as f64 / nf));
            }
        }
        Ok(GridFn2D { n, values })
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(n, vec![0.0; (n + 1) * (n + 1)])
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        Self::new(n, vec![c; (n + 1) * (n + 1)])
    }

    /// Outer product `h1(s) * h2(t)` of two 1D grid functions on the same grid.
    pub fn outer(h1: &GridFn1D, h2: &GridFn1D) -> Result<Self> {
        if h1.n() != h2.n() {
            return Err(Error::dimension(format!(
                "outer product factors live on different grids: {} vs {}",
                h1.n(),
                h2.n()
            )));
        }
        let n = h1.n();
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            for j in 0..=n {
                values.push(h1.value(i) * h2.value(j));
            }
        }
        Ok(GridFn2D { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.n + 1) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i * (self.n + 1) + j] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    /// Checks membership in the discrete H2_0 space: zeros on all four edges.
    pub fn require_h20(&self) -> Result<()> {
        for k in 0..=self.n {
            for (i, j) in [(0, k), (self.n, k), (k, 0), (k, self.n)] {
                if self.at(i, j) != 0.0 {
                    return Err(Error::domain(format!(
                        "function is not in H2_0: boundary node ({i}, {j}) has value {} (expected 0)",
                        self.at(i, j)
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn same_grid(&self, other: &GridFn2D) -> Result<()> {
        if self.n != other.n {
            return Err(Error::dimension(format!(
                "grid sizes differ: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> Self {
        GridFn2D { n: self.n, values: self.values.iter().map(|v| a * v).collect() }
    }

    pub fn add(&self, other: &GridFn2D) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(GridFn2D { n: self.n, values })
    }

    pub fn sub(&self, other: &GridFn2D) -> Result<Self> {
        self.same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(GridFn2D { n: self.n, values })
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Serializes as `n=<n>` followed by `n + 1` rows of `n + 1` values.
    pub fn to_csv(&self) -> String {
        let mut out = format!("n={}\n", self.n);
        for i in 0..=self.n {
            let row: Vec<String> =
                (0..=self.n).map(|j| format_f64(self.at(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let n = parse_header(lines.next())?;
        let mut values = Vec::with_capacity((n + 1) * (n + 1));
        for i in 0..=n {
            let row = lines.next().ok_or_else(|| {
                Error::Parse(format!("missing row {} of {}", i + 1, n + 1))
            })?;
            values.extend(parse_row(row, n + 1, i + 2)?);
        }
        Self::new(n, values)
    }
}

/// Per-cell values of a mixed second derivative: entry `(i, j)` lives on the
/// cell `[i/n, (i+1)/n] x [j/n, (j+1)/n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField2D {
    n: usize,
    values: Vec<f64>,
}

impl CellField2D {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain(format!("grid needs n >= 2 cells, got {n}")));
        }
        if values.len() != n * n {
            return Err(Error::dimension(format!(
                "expected {} cell values for n = {n}, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(CellField2D { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cumulative double integral `(s,t) -> int_{[0,s]x[0,t]} f dl^2`,
    /// the inverse of [`mixed_second_diff`] on H2_0 members.
    pub fn integrate(&self) -> GridFn2D {
        let n = self.n;
        let inv = 1.0 / (n as f64 * n as f64);
        let mut g = GridFn2D { n, values: vec![0.0; (n + 1) * (n + 1)] };
        for i in 1..=n {
            for j in 1..=n {
                let v = g.at(i - 1, j) + g.at(i, j - 1) - g.at(i - 1, j - 1)
                    + self.at(i - 1, j - 1) * inv;
                g.set(i, j, v);
            }
        }
        g
    }

    /// Total mass of the discrete measure generated by the field; by
    /// telescoping this equals [`corner_combination`].
    pub fn total_mass(&self) -> f64 {
        measure_atoms(self).values().iter().sum()
    }
}

/// Mixed second difference of an H2_0 grid function: cell value
/// `n^2 (h_{i+1,j+1} - h_{i+1,j} - h_{i,j+1} + h_{i,j})`.
pub fn mixed_second_diff(h: &GridFn2D) -> Result<CellField2D> {
    h.require_h20()?;
    let n = h.n();
    let scale = n as f64 * n as f64;
    let mut values = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            values.push(
                scale * (h.at(i + 1, j + 1) - h.at(i + 1, j) - h.at(i, j + 1) + h.at(i, j)),
            );
        }
    }
    Ok(CellField2D { n, values })
}

/// RKHS inner product of two H2_0 grid functions:
/// `(1/n^2) sum_cells h1'' h2''`.
pub fn rkhs_inner(h1: &GridFn2D, h2: &GridFn2D) -> Result<f64> {
    h1.same_grid(h2)?;
    let f1 = mixed_second_diff(h1)?;
    let f2 = mixed_second_diff(h2)?;
    let sum: f64 = f1
        .values()
        .iter()
        .zip(f2.values())
        .map(|(a, b)| a * b)
        .sum();
    let n = h1.n() as f64;
    Ok(sum / (n * n))
}

/// RKHS norm of an H2_0 grid function.
pub fn rkhs_norm_2d(h: &GridFn2D) -> Result<f64> {
    Ok(rkhs_inner(h, h)?.sqrt())
}

/// RKHS inner product of two H1_0 grid functions: `(1/n) sum h1' h2'`.
pub fn rkhs_inner_1d(h1: &GridFn1D, h2: &GridFn1D) -> Result<f64> {
    if h1.n() != h2.n() {
        return Err(Error::dimension(format!(
            "grid sizes differ: {} vs {}",
            h1.n(),
            h2.n()
        )));
    }
    h1.require_h10()?;
    h2.require_h10()?;
    let sum: f64 = h1
        .slopes()
        .iter()
        .zip(h2.slopes())
        .map(|(a, b)| a * b)
        .sum();
    Ok(sum / h1.n() as f64)
}

/// RKHS norm of an H1_0 grid function.
pub fn rkhs_norm_1d(h: &GridFn1D) -> Result<f64> {
    h.require_h10()?;
    let sum: f64 = h.slopes().iter().map(|s| s * s).sum();
    Ok((sum / h.n() as f64).sqrt())
}

/// Node atoms of the discrete signed measure generated by a cell field.
///
/// The atom at an interior node `(i, j)` is
/// `f_{i,j} - f_{i-1,j} - f_{i,j-1} + f_{i-1,j-1}`; nodes on the boundary
/// frame carry no mass (the field is extended as constant outside the
/// square), so a constant field generates the zero measure.
pub fn measure_atoms(f: &CellField2D) -> GridFn2D {
    let n = f.n();
    let mut atoms = GridFn2D { n, values: vec![0.0; (n + 1) * (n + 1)] };
    for i in 1..n {
        for j in 1..n {
            let a = f.at(i, j) - f.at(i - 1, j) - f.at(i, j - 1) + f.at(i - 1, j - 1);
            atoms.set(i, j, a);
        }
    }
    atoms
}

/// Corner combination `f(1,1) - f(1,0) - f(0,1) + f(0,0)` of a cell field,
/// reading the extreme cells as the boundary values of the right-continuous
/// derivative.  Equals the total measure mass by telescoping.
pub fn corner_combination(f: &CellField2D) -> f64 {
    let n = f.n();
    f.at(n - 1, n - 1) - f.at(n - 1, 0) - f.at(0, n - 1) + f.at(0, 0)
}

/// Riemann-Stieltjes integral of `g` against the measure generated by the
/// cell field `f`: the sum of `g(node) * atom(node)` over interior nodes.
///
/// For `g` in H2_0 this equals `(1/n^2) sum_cells g'' f` exactly (both are
/// rearrangements of the same finite sum), the discrete integration by parts.
pub fn stieltjes_integral_2d(g: &GridFn2D, f: &CellField2D) -> Result<f64> {
    if g.n() != f.n() {
        return Err(Error::dimension(format!(
            "grid sizes differ: {} vs {}",
            g.n(),
            f.n()
        )));
    }
    let n = g.n();
    let mut total = 0.0;
    for i in 1..n {
        for j in 1..n {
            let atom = f.at(i, j) - f.at(i - 1, j) - f.at(i, j - 1) + f.at(i - 1, j - 1);
            total += g.at(i, j) * atom;
        }
    }
    Ok(total)
}

/// Riemann-Stieltjes integral of `g` against `d(-h_tilde')` for a concave
/// `h_tilde`: the sum of `g(node) * (slope_{i-1} - slope_i)` over interior
/// nodes.  The slope jumps must be nonnegative up to `tol`.
///
/// For constant `g = c` this telescopes to `c (h'(0+) - h'(1-))`.
pub fn stieltjes_integral_1d(g: &GridFn1D, h_tilde: &GridFn1D, tol: f64) -> Result<f64> {
    if g.n() != h_tilde.n() {
        return Err(Error::dimension(format!(
            "grid sizes differ: {} vs {}",
            g.n(),
            h_tilde.n()
        )));
    }
    let slopes = h_tilde.slopes();
    let n = g.n();
    let mut total = 0.0;
    for i in 1..n {
        let atom = slopes[i - 1] - slopes[i];
        if atom < -tol {
            return Err(Error::domain(format!(
                "h_tilde is not concave at node {i}: slope jump {atom:.3e} < -{tol:.3e}"
            )));
        }
        total += g.value(i) * atom;
    }
    Ok(total)
}

/// Formats with 17 significant digits, enough for exact f64 round trips.
fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_header(line: Option<&str>) -> Result<usize> {
    let line = line.ok_or_else(|| Error::Parse("empty CSV input".into()))?;
    let rest = line
        .strip_prefix("n=")
        .ok_or_else(|| Error::Parse(format!("expected header 'n=<int>', got {line:?}")))?;
    let n: usize = rest
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("invalid grid size {rest:?}")))?;
    if n < 2 {
        return Err(Error::Parse(format!("grid size must be >= 2, got {n}")));
    }
    Ok(n)
}

fn parse_row(row: &str, expected: usize, line_no: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = row
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {line_no}: invalid value {tok:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Parse(format!(
            "line {line_no}: expected {expected} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parabola(n: usize) -> GridFn1D {
        GridFn1D::from_fn(n, |s| s * (1.0 - s)).unwrap()
    }

    fn tent(n: usize) -> GridFn1D {
        GridFn1D::new((0..=n).map(|i| i.min(n - i) as f64 / n as f64).collect()).unwrap()
    }

    fn parabola_product(n: usize) -> GridFn2D {
        GridFn2D::outer(&parabola(n), &parabola(n)).unwrap()
    }

    #[test]
    fn mixed_diff_zero_function() {
        let h = GridFn2D::zeros(4).unwrap();
        let f = mixed_second_diff(&h).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mixed_diff_parabola_product_n2() {
        // Hand evaluation at n = 2: only the center node is nonzero with
        // h(1/2, 1/2) = 1/16, so the four cells carry n^2/16 = 1/4 with the
        // checkerboard sign pattern.
        let h = parabola_product(2);
        let f = mixed_second_diff(&h).unwrap();
        let expect = [0.25, -0.25, -0.25, 0.25];
        for (got, want) in f.values().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "got {got}, want {want}");
        }
    }

    #[test]
    fn mixed_diff_rejects_nonzero_boundary() {
        let h = GridFn2D::constant(4, 1.0).unwrap();
        let err = mixed_second_diff(&h).unwrap_err();
        assert!(err.to_string().contains("boundary node (0, 0)"), "{err}");
    }

    #[test]
    fn mixed_diff_factorizes_on_outer_products() {
        let h1 = GridFn1D::new(vec![0.0, 0.3, -0.1, 0.7, 0.0]).unwrap();
        let h2 = GridFn1D::new(vec![0.0, -0.2, 0.5, 0.1, 0.0]).unwrap();
        let h = GridFn2D::outer(&h1, &h2).unwrap();
        let f = mixed_second_diff(&h).unwrap();
        let s1 = h1.slopes();
        let s2 = h2.slopes();
        for i in 0..4 {
            for j in 0..4 {
                assert!((f.at(i, j) - s1[i] * s2[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstruction_roundtrip() {
        let h = parabola_product(16);
        let f = mixed_second_diff(&h).unwrap();
        let back = f.integrate();
        for i in 0..=16 {
            for j in 0..=16 {
                assert!((back.at(i, j) - h.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn inner_parabola_product_near_one_ninth() {
        let h = parabola_product(256);
        let v = rkhs_inner(&h, &h).unwrap();
        assert!((v - 1.0 / 9.0).abs() < 1e-3, "got {v}");
    }

    #[test]
    fn inner_with_zero_is_zero() {
        let h = parabola_product(8);
        let z = GridFn2D::zeros(8).unwrap();
        assert_eq!(rkhs_inner(&h, &z).unwrap(), 0.0);
    }

    #[test]
    fn inner_factorizes_on_outer_products() {
        let h1 = GridFn1D::new(vec![0.0, 0.4, 0.9, 0.2, 0.0]).unwrap();
        let h2 = tent(4);
        let g1 = parabola(4);
        let g2 = GridFn1D::new(vec![0.0, -0.1, 0.3, 0.8, 0.0]).unwrap();
        let lhs = rkhs_inner(
            &GridFn2D::outer(&h1, &h2).unwrap(),
            &GridFn2D::outer(&g1, &g2).unwrap(),
        )
        .unwrap();
        let rhs = rkhs_inner_1d(&h1, &g1).unwrap() * rkhs_inner_1d(&h2, &g2).unwrap();
        assert!((lhs - rhs).abs() < 1e-12, "lhs {lhs}, rhs {rhs}");
    }

    #[test]
    fn norm1d_parabola() {
        let v = rkhs_norm_1d(&parabola(256)).unwrap();
        assert!((v * v - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn norm1d_tent_exact_for_even_powers_of_two() {
        for n in [2usize, 4, 16, 64, 256] {
            let v = rkhs_norm_1d(&tent(n)).unwrap();
            assert_eq!(v * v, 1.0, "n = {n}");
        }
    }

    #[test]
    fn norm1d_zero() {
        assert_eq!(rkhs_norm_1d(&GridFn1D::zeros(8).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn norm1d_rejects_nonzero_endpoints() {
        let h = GridFn1D::new(vec![0.1, 0.0, 0.0]).unwrap();
        assert!(rkhs_norm_1d(&h).is_err());
    }

    #[test]
    fn stieltjes2d_constant_field_is_zero_measure() {
        let f = CellField2D::new(4, vec![3.7; 16]).unwrap();
        let g = GridFn2D::from_fn(4, |s, t| (7.0 * s).sin() + t * t).unwrap();
        assert_eq!(stieltjes_integral_2d(&g, &f).unwrap(), 0.0);
        assert_eq!(f.total_mass(), 0.0);
    }

    #[test]
    fn stieltjes2d_tent_product_single_atom() {
        // The slope field of tent x tent jumps only at the center node, an
        // atom of mass (+2)(+2) = 4; against g = 1 the integral is 4.
        for n in [2usize, 8, 16] {
            let h = GridFn2D::outer(&tent(n), &tent(n)).unwrap();
            let f = mixed_second_diff(&h).unwrap();
            let ones = GridFn2D::constant(n, 1.0).unwrap();
            let v = stieltjes_integral_2d(&ones, &f).unwrap();
            assert!((v - 4.0).abs() < 1e-12, "n = {n}: got {v}");
            let atoms = measure_atoms(&f);
            for i in 0..=n {
                for j in 0..=n {
                    let want = if i == n / 2 && j == n / 2 { 4.0 } else { 0.0 };
                    assert!((atoms.at(i, j) - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn stieltjes2d_constant_g_times_mass() {
        let h1 = GridFn1D::new(vec![0.0, 0.5, 0.7, 0.1, 0.0]).unwrap();
        let h2 = GridFn1D::new(vec![0.0, 0.2, 0.9, 0.4, 0.0]).unwrap();
        let f = mixed_second_diff(&GridFn2D::outer(&h1, &h2).unwrap()).unwrap();
        let c = -2.5;
        let g = GridFn2D::constant(4, c).unwrap();
        let lhs = stieltjes_integral_2d(&g, &f).unwrap();
        assert!((lhs - c * f.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn corner_combination_equals_total_mass() {
        let h = GridFn2D::from_fn(8, |s, t| (3.0 * s).sin() * t * (1.0 - t) * s * (1.0 - s))
            .unwrap();
        let f = mixed_second_diff(&h).unwrap();
        let mass = f.total_mass();
        let corner = corner_combination(&f);
        assert!((mass - corner).abs() < 1e-10 * (1.0 + corner.abs()));
    }

    #[test]
    fn stieltjes1d_parabola_constant_g() {
        let n = 256;
        let c = 1.7;
        let g = GridFn1D::from_fn(n, |_| c).unwrap();
        let v = stieltjes_integral_1d(&g, &parabola(n), 1e-9).unwrap();
        // telescopes to c (h'(0+) - h'(1-)) = 2c (1 - 1/n)
        assert!((v - 2.0 * c).abs() <= 2.0 * c * (2.0 / n as f64), "got {v}");
    }

    #[test]
    fn stieltjes1d_tent_atoms() {
        let n = 16;
        let ones = GridFn1D::from_fn(n, |_| 1.0).unwrap();
        assert_eq!(stieltjes_integral_1d(&ones, &tent(n), 1e-12).unwrap(), 2.0);
        let id = GridFn1D::from_fn(n, |s| s).unwrap();
        assert_eq!(stieltjes_integral_1d(&id, &tent(n), 1e-12).unwrap(), 1.0);
    }

    #[test]
    fn stieltjes1d_rejects_convex() {
        let n = 8;
        let convex = GridFn1D::from_fn(n, |s| s * s).unwrap();
        let g = GridFn1D::from_fn(n, |_| 1.0).unwrap();
        assert!(stieltjes_integral_1d(&g, &convex, 1e-9).is_err());
    }

    #[test]
    fn integration_by_parts_identity() {
        // For g in H2_0 the node-measure sum equals the cell sum exactly.
        let g = GridFn2D::from_fn(8, |s, t| (2.0 * s).sin() * s * (1.0 - s) * t * (1.0 - t))
            .unwrap();
        let h = GridFn2D::from_fn(8, |s, t| (s * t).cos() * s * (1.0 - s) * t * (1.0 - t))
            .unwrap();
        let f = mixed_second_diff(&h).unwrap();
        let lhs = stieltjes_integral_2d(&g, &f).unwrap();
        let gf = mixed_second_diff(&g).unwrap();
        let n2 = 64.0;
        let rhs: f64 = gf
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / n2;
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()), "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn csv_roundtrip_2d_value_exact() {
        let h = GridFn2D::from_fn(5, |s, t| (s * 17.3).sin() * (t + 0.1).ln()).unwrap();
        let back = GridFn2D::from_csv(&h.to_csv()).unwrap();
        assert_eq!(h, back);
    }

    #[test]
    fn csv_rejects_malformed() {
        assert!(GridFn2D::from_csv("m=4\n").is_err());
        assert!(GridFn2D::from_csv("n=4\n1,2\n").is_err());
        assert!(GridFn1D::from_csv("n=2\n0.0,abc,0.0\n").is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_csv_roundtrip_1d(values in prop::collection::vec(-1e6f64..1e6, 3..40)) {
            let h = GridFn1D::new(values).unwrap();
            let back = GridFn1D::from_csv(&h.to_csv()).unwrap();
            prop_assert_eq!(h, back);
        }

        #[test]
        fn prop_inner_bilinear_symmetric(
            seed_a in -3.0f64..3.0,
            seed_b in -3.0f64..3.0,
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
        ) {
            let n = 6;
            let h = GridFn2D::from_fn(n, |s, t| (seed_a * s + t).sin() * s * (1.0 - s) * t * (1.0 - t)).unwrap();
            let g = GridFn2D::from_fn(n, |s, t| (seed_b * t - s).cos() * s * (1.0 - s) * t * (1.0 - t)).unwrap();
            let k = GridFn2D::from_fn(n, |s, t| (s - t) * s * (1.0 - s) * t * (1.0 - t)).unwrap();
            let combo = h.scaled(a).add(&g.scaled(b)).unwrap();
            let lhs = rkhs_inner(&combo, &k).unwrap();
            let rhs = a * rkhs_inner(&h, &k).unwrap() + b * rkhs_inner(&g, &k).unwrap();
            let scale = 1.0 + lhs.abs().max(rhs.abs());
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale);
            let sym = (rkhs_inner(&h, &g).unwrap() - rkhs_inner(&g, &h).unwrap()).abs();
            prop_assert!(sym <= 1e-12);
        }

        #[test]
        fn prop_tensor_norm_identity(
            v1 in prop::collection::vec(-2.0f64..2.0, 7),
            v2 in prop::collection::vec(-2.0f64..2.0, 7),
        ) {
            let mut a = vec![0.0];
            a.extend(v1); a.push(0.0);
            let mut b = vec![0.0];
            b.extend(v2); b.push(0.0);
            let h1 = GridFn1D::new(a).unwrap();
            let h2 = GridFn1D::new(b).unwrap();
            let h = GridFn2D::outer(&h1, &h2).unwrap();
            let lhs = rkhs_inner(&h, &h).unwrap();
            let n1 = rkhs_norm_1d(&h1).unwrap();
            let n2 = rkhs_norm_1d(&h2).unwrap();
            let rhs = n1 * n1 * n2 * n2;
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }

        #[test]
        fn prop_reconstruction(values in prop::collection::vec(-4.0f64..4.0, 9)) {
            // 3x3 interior of a 5x5 node grid (n = 4), boundary pinned to zero.
            let n = 4;
            let mut g = GridFn2D::zeros(n).unwrap();
            for (k, v) in values.into_iter().enumerate() {
                let i = 1 + k / 3;
                let j = 1 + k % 3;
                g.set(i, j, v);
            }
            let f = mixed_second_diff(&g).unwrap();
            let back = f.integrate();
            let scale: f64 = 1.0 + g.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in back.values().iter().zip(g.values()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale);
            }
        }
    }
}
