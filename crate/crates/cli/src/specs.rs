//! Trend and boundary spec strings -> grid functions.
//!
//! Grammar:
//!   zero
//!   const:<v>
//!   builtin:<name>[:k=v[,k=v]]     keys: scale, apex
//!   product:<name1>,<name2>[:k=v]  outer product of 1D builtins (2D only)
//!   csv:<path>

use std::collections::BTreeMap;

use brownian_pillow::trends;
use brownian_pillow::{GridFn1D, GridFn2D};

use crate::CliError;

fn parse_params(text: Option<&str>) -> Result<BTreeMap<String, f64>, CliError> {
    let mut map = BTreeMap::new();
    let Some(text) = text else { return Ok(map) };
    for pair in text.split(',') {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("expected k=v parameter, got {pair:?}")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| CliError::config(format!("invalid parameter value {v:?}")))?;
        map.insert(k.trim().to_string(), value);
    }
    Ok(map)
}

fn known_params(map: &BTreeMap<String, f64>, allowed: &[&str]) -> Result<(), CliError> {
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(CliError::config(format!(
                "unknown parameter {key:?} (allowed: {})",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

fn builtin_1d(name: &str, n: usize, params: &BTreeMap<String, f64>) -> Result<GridFn1D, CliError> {
    let g = if name == "skew-tent" {
        trends::skew_tent(n, params.get("apex").copied().unwrap_or(0.25))?
    } else {
        trends::builtin_trend_1d(name, n)?
    };
    Ok(match params.get("scale") {
        Some(&a) => g.scaled(a),
        None => g,
    })
}

/// Resolves a 1D spec (for the majorant command and product factors).
pub fn grid_1d(spec: &str, n: usize) -> Result<GridFn1D, CliError> {
    let mut parts = spec.splitn(3, ':');
    match parts.next().unwrap_or("") {
        "zero" => Ok(GridFn1D::zeros(n)?),
        "const" => {
            let v: f64 = parts
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|_| CliError::config(format!("invalid constant in {spec:?}")))?;
            Ok(GridFn1D::from_fn(n, |_| v)?)
        }
        "builtin" => {
            let name = parts
                .next()
                .ok_or_else(|| CliError::config(format!("missing builtin name in {spec:?}")))?;
            let params = parse_params(parts.next())?;
            known_params(&params, &["scale", "apex"])?;
            Ok(builtin_1d(name, n, &params)?)
        }
        "csv" => {
            let path = parts
                .next()
                .ok_or_else(|| CliError::config(format!("missing path in {spec:?}")))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {path}: {e}")))?;
            let g = GridFn1D::from_csv(&text)?;
            if g.n() != n {
                return Err(CliError::config(format!(
                    "{path} has n = {}, expected {n}",
                    g.n()
                )));
            }
            Ok(g)
        }
        other => Err(CliError::config(format!("unknown 1D spec kind {other:?} in {spec:?}"))),
    }
}

/// Resolves a 2D spec (trends and boundaries).
pub fn grid_2d(spec: &str, n: usize) -> Result<GridFn2D, CliError> {
    let mut parts = spec.splitn(3, ':');
    match parts.next().unwrap_or("") {
        "zero" => Ok(GridFn2D::zeros(n)?),
        "const" => {
            let v: f64 = parts
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|_| CliError::config(format!("invalid constant in {spec:?}")))?;
            Ok(GridFn2D::constant(n, v)?)
        }
        "builtin" => {
            let name = parts
                .next()
                .ok_or_else(|| CliError::config(format!("missing builtin name in {spec:?}")))?;
            let params = parse_params(parts.next())?;
            known_params(&params, &["scale"])?;
            let g = trends::builtin_trend_2d(name, n)?;
            Ok(match params.get("scale") {
                Some(&a) => g.scaled(a),
                None => g,
            })
        }
        "product" => {
            let names = parts
                .next()
                .ok_or_else(|| CliError::config(format!("missing factors in {spec:?}")))?;
            let (name1, name2) = names.split_once(',').ok_or_else(|| {
                CliError::config(format!("product needs two comma-separated names in {spec:?}"))
            })?;
            let params = parse_params(parts.next())?;
            known_params(&params, &["scale", "apex"])?;
            let g1 = builtin_1d(name1.trim(), n, &params)?;
            let g2 = trends::builtin_trend_1d(name2.trim(), n)?;
            let g = GridFn2D::outer(&g1, &g2)?;
            Ok(g)
        }
        "csv" => {
            let path = parts
                .next()
                .ok_or_else(|| CliError::config(format!("missing path in {spec:?}")))?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {path}: {e}")))?;
            let g = GridFn2D::from_csv(&text)?;
            if g.n() != n {
                return Err(CliError::config(format!(
                    "{path} has n = {}, expected {n}",
                    g.n()
                )));
            }
            Ok(g)
        }
        other => Err(CliError::config(format!("unknown 2D spec kind {other:?} in {spec:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_builtin_with_params() {
        let g = grid_1d("builtin:skew-tent:apex=0.5,scale=2", 8).unwrap();
        assert_eq!(g.value(4), 2.0);
        assert!(grid_1d("builtin:skew-tent:knob=1", 8).is_err());
        assert!(grid_1d("builtin:skew-tent:apex", 8).is_err());
    }

    #[test]
    fn parses_product_and_scales() {
        let g = grid_2d("product:tent,parabola:scale=2", 4).unwrap();
        let t = trends::tent(4).unwrap();
        let p = trends::parabola(4).unwrap();
        let want = GridFn2D::outer(&t.scaled(2.0), &p).unwrap();
        assert_eq!(g.values(), want.values());
        assert!(grid_2d("product:tent", 4).is_err());
    }

    #[test]
    fn parses_constants_and_rejects_unknown_kind() {
        let g = grid_2d("const:-0.25", 4).unwrap();
        assert!(g.values().iter().all(|&v| v == -0.25));
        assert!(grid_2d("wavelet:3", 4).is_err());
        assert!(grid_1d("const:abc", 4).is_err());
    }
}
