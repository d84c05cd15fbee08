//! Built-in trend and boundary families used by the CLI, tests and bindings.

use crate::error::{Error, Result};
use crate::grid::{GridFn1D, GridFn2D};

/// Names of the built-in 1D trends.
pub const BUILTIN_1D: &[&str] = &["parabola", "tent", "skew-tent", "four-vertex"];
/// Names of the built-in 2D trends.
pub const BUILTIN_2D: &[&str] = &[
    "parabola-product",
    "tent-product",
    "negative-bump",
    "mixed-sign",
];

/// `s (1 - s)`.
pub fn parabola(n: usize) -> Result<GridFn1D> {
    GridFn1D::from_fn(n, |s| s * (1.0 - s))
}

/// `min(s, 1 - s)`, sampled so slopes are exactly +-1 on dyadic grids.
pub fn tent(n: usize) -> Result<GridFn1D> {
    let values = (0..=n).map(|i| i.min(n - i) as f64 / n as f64).collect();
    GridFn1D::new(values)
}

/// Tent with apex at `apex` and height 1.
pub fn skew_tent(n: usize, apex: f64) -> Result<GridFn1D> {
    if !(apex > 0.0 && apex < 1.0) {
        return Err(Error::domain(format!("skew-tent apex must be in (0,1), got {apex}")));
    }
    GridFn1D::from_fn(n, move |s| {
        if s <= apex {
            s / apex
        } else {
            (1.0 - s) / (1.0 - apex)
        }
    })
}

/// Piecewise linear through (0,0), (0.5, 0.1), (0.75, 0.5), (1, 0); a
/// non-concave fixture whose least concave majorant has knots 0, 0.75, 1.
pub fn four_vertex(n: usize) -> Result<GridFn1D> {
    GridFn1D::from_fn(n, |s| {
        if s <= 0.5 {
            0.2 * s
        } else if s <= 0.75 {
            0.1 + 1.6 * (s - 0.5)
        } else {
            0.5 - 2.0 * (s - 0.75)
        }
    })
}

/// `s (1 - s) t (1 - t)`.
pub fn parabola_product(n: usize) -> Result<GridFn2D> {
    let p = parabola(n)?;
    GridFn2D::outer(&p, &p)
}

/// `min(s, 1 - s) min(t, 1 - t)`.
pub fn tent_product(n: usize) -> Result<GridFn2D> {
    let t = tent(n)?;
    GridFn2D::outer(&t, &t)
}

/// Nonpositive trend `-4 s (1 - s) t (1 - t)` (minimum -1/4 at the center);
/// its minimal majorant is identically zero.
pub fn negative_bump(n: usize) -> Result<GridFn2D> {
    Ok(parabola_product(n)?.scaled(-4.0))
}

/// Sign-changing trend `16 s (1 - s) t (1 - t) (s + t - 1)`, positive above
/// the antidiagonal and negative below it.
pub fn mixed_sign(n: usize) -> Result<GridFn2D> {
    GridFn2D::from_fn(n, |s, t| 16.0 * s * (1.0 - s) * t * (1.0 - t) * (s + t - 1.0))
}

/// Resolves a built-in 1D trend by name.
pub fn builtin_trend_1d(name: &str, n: usize) -> Result<GridFn1D> {
    match name {
        "parabola" => parabola(n),
        "tent" => tent(n),
        "skew-tent" => skew_tent(n, 0.25),
        "four-vertex" => four_vertex(n),
        _ => Err(Error::domain(format!(
            "unknown 1D builtin {name:?} (known: {})",
            BUILTIN_1D.join(", ")
        ))),
    }
}

/// Resolves a built-in 2D trend by name.
pub fn builtin_trend_2d(name: &str, n: usize) -> Result<GridFn2D> {
    match name {
        "parabola-product" => parabola_product(n),
        "tent-product" => tent_product(n),
        "negative-bump" => negative_bump(n),
        "mixed-sign" => mixed_sign(n),
        _ => Err(Error::domain(format!(
            "unknown 2D builtin {name:?} (known: {})",
            BUILTIN_2D.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_resolve_and_vanish_on_boundary() {
        for name in BUILTIN_1D {
            let g = builtin_trend_1d(name, 16).unwrap();
            g.require_h10().unwrap();
        }
        for name in BUILTIN_2D {
            let g = builtin_trend_2d(name, 16).unwrap();
            g.require_h20().unwrap();
        }
        assert!(builtin_trend_1d("bogus", 8).is_err());
        assert!(builtin_trend_2d("bogus", 8).is_err());
    }

    #[test]
    fn four_vertex_hits_the_vertices() {
        let g = four_vertex(8).unwrap();
        assert!((g.value(4) - 0.1).abs() < 1e-15);
        assert!((g.value(6) - 0.5).abs() < 1e-15);
        assert_eq!(g.value(8), 0.0);
    }

    #[test]
    fn mixed_sign_changes_sign() {
        let g = mixed_sign(8).unwrap();
        assert!(g.min_value() < -0.05);
        assert!(g.max_value() > 0.05);
    }

    #[test]
    fn negative_bump_is_nonpositive() {
        let g = negative_bump(8).unwrap();
        assert!(g.max_value() <= 0.0);
        assert!((g.min_value() + 0.25).abs() < 1e-12);
    }
}
