//! Seeded simulation of Brownian sheet and Brownian pillow paths on the grid.
//!
//! Randomness contract: each path draws from its own ChaCha12 stream, keyed
//! by `(seed, stream_id)` through a SplitMix64 expansion and selecting the
//! ChaCha stream by path index.  Cell noises are consumed in row-major order
//! inside a path, so a batch is a pure function of `(n, count, seed,
//! stream_id)` no matter how paths are scheduled.

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::GridFn2D;

/// A reproducible batch of pillow sample paths.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub n: usize,
    pub paths: Vec<GridFn2D>,
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn derive_key(seed: u64, stream_id: u64) -> [u8; 32] {
    let mut state = seed ^ splitmix64(&mut { stream_id.wrapping_add(0x1234_5678_9ABC_DEF0) });
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// Generator for one path of one batch; distinct `(seed, stream_id,
/// path_index)` triples yield independent streams.
pub fn path_rng(seed: u64, stream_id: u64, path_index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::from_seed(derive_key(seed, stream_id));
    rng.set_stream(path_index);
    rng
}

/// Brownian sheet values at the grid nodes: the cumulative double sum of
/// i.i.d. centered Gaussian cell increments with variance `1/n^2`, so
/// `E W(s,t) W(s',t') = min(s,s') min(t,t')` exactly at nodes.
pub fn sample_sheet(n: usize, rng: &mut ChaCha12Rng) -> GridFn2D {
    let mut w = GridFn2D::zeros(n).expect("n >= 2");
    let inv_n = 1.0 / n as f64;
    for i in 1..=n {
        for j in 1..=n {
            let xi: f64 = rng.sample(StandardNormal);
            let v = w.at(i - 1, j) + w.at(i, j - 1) - w.at(i - 1, j - 1) + xi * inv_n;
            w.set(i, j, v);
        }
    }
    w
}

/// Brownian pillow values at the grid nodes, pinned to zero on all four
/// edges: `B0(s,t) = W(s,t) - s W(1,t) - t W(s,1) + s t W(1,1)`.
pub fn sample_pillow(n: usize, rng: &mut ChaCha12Rng) -> GridFn2D {
    let w = sample_sheet(n, rng);
    let nf = n as f64;
    let w11 = w.at(n, n);
    let mut b = GridFn2D::zeros(n).expect("n >= 2");
    for i in 1..n {
        let s = i as f64 / nf;
        for j in 1..n {
            let t = j as f64 / nf;
            let v = w.at(i, j) - s * w.at(n, j) - t * w.at(i, n) + s * t * w11;
            b.set(i, j, v);
        }
    }
    b
}

/// Generates `count` pillow paths for `(seed, stream_id)`.
pub fn sample_pillow_batch(n: usize, count: usize, seed: u64, stream_id: u64) -> Result<PathBatch> {
    if n < 2 {
        return Err(Error::domain(format!("grid needs n >= 2 cells, got {n}")));
    }
    let paths = (0..count)
        .map(|p| {
            let mut rng = path_rng(seed, stream_id, p as u64);
            sample_pillow(n, &mut rng)
        })
        .collect();
    Ok(PathBatch { n, paths, seed, stream_id })
}

impl PathBatch {
    /// Dumps one CSV per path plus a `batch.json` manifest into `dir`.
    pub fn dump(&self, dir: &std::path::Path) -> Result<()> {
        let io_err = |e: std::io::Error| Error::Domain(format!("path dump failed: {e}"));
        std::fs::create_dir_all(dir).map_err(io_err)?;
        for (k, path) in self.paths.iter().enumerate() {
            std::fs::write(dir.join(format!("path-{k:05}.csv")), path.to_csv()).map_err(io_err)?;
        }
        let manifest = serde_json::json!({
            "seed": self.seed,
            "stream_id": self.stream_id,
            "n": self.n,
            "count": self.paths.len(),
        });
        std::fs::write(dir.join("batch.json"), format!("{manifest:#}\n")).map_err(io_err)?;
        Ok(())
    }
}

/// Covariance of the Brownian pillow:
/// `(min(s,s2) - s s2)(min(t,t2) - t t2)` for arguments in [0,1].
pub fn pillow_cov(s: f64, t: f64, s2: f64, t2: f64) -> Result<f64> {
    for (name, v) in [("s", s), ("t", t), ("s2", s2), ("t2", t2)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{name} = {v} is outside [0,1]")));
        }
    }
    Ok((s.min(s2) - s * s2) * (t.min(t2) - t * t2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pillow_cov_values() {
        assert_eq!(pillow_cov(0.5, 0.5, 0.5, 0.5).unwrap(), 1.0 / 16.0);
        assert_eq!(pillow_cov(0.0, 0.3, 0.7, 0.9).unwrap(), 0.0);
        assert_eq!(pillow_cov(0.25, 0.5, 0.5, 0.5).unwrap(), 1.0 / 32.0);
        assert!(pillow_cov(-0.1, 0.5, 0.5, 0.5).is_err());
        assert!(pillow_cov(0.5, 0.5, 1.5, 0.5).is_err());
    }

    #[test]
    fn sheet_vanishes_on_the_axes() {
        let mut rng = path_rng(7, 0, 0);
        let w = sample_sheet(8, &mut rng);
        for k in 0..=8 {
            assert_eq!(w.at(0, k), 0.0);
            assert_eq!(w.at(k, 0), 0.0);
        }
    }

    #[test]
    fn pillow_vanishes_on_all_edges() {
        for p in 0..20 {
            let mut rng = path_rng(11, 3, p);
            let b = sample_pillow(6, &mut rng);
            for k in 0..=6 {
                assert_eq!(b.at(0, k), 0.0);
                assert_eq!(b.at(6, k), 0.0);
                assert_eq!(b.at(k, 0), 0.0);
                assert_eq!(b.at(k, 6), 0.0);
            }
        }
    }

    #[test]
    fn batches_are_bitwise_reproducible() {
        let a = sample_pillow_batch(8, 16, 42, 5).unwrap();
        let b = sample_pillow_batch(8, 16, 42, 5).unwrap();
        for (x, y) in a.paths.iter().zip(&b.paths) {
            assert_eq!(x.values(), y.values());
        }
        let c = sample_pillow_batch(8, 16, 42, 6).unwrap();
        assert_ne!(a.paths[0].values(), c.paths[0].values());
    }

    #[test]
    fn sheet_moments_match_min_covariance() {
        let n = 8;
        let count = 100_000;
        let mut sum_sq_11 = 0.0;
        let mut sum_cross = 0.0;
        for p in 0..count {
            let mut rng = path_rng(2024, 0, p as u64);
            let w = sample_sheet(n, &mut rng);
            sum_sq_11 += w.at(n, n) * w.at(n, n);
            sum_cross += w.at(n / 2, n / 2) * w.at(n, n);
        }
        let m = count as f64;
        let var_11 = sum_sq_11 / m;
        // Var of W(1,1)^2 is 2 for a standard Gaussian
        assert!((var_11 - 1.0).abs() < 3.0 * (2.0f64 / m).sqrt(), "{var_11}");
        let cov = sum_cross / m;
        // Cov(W(.5,.5), W(1,1)) = 1/4; Var of the product ~ E[W1^2 W2^2]
        assert!((cov - 0.25).abs() < 3.0 * (0.45f64 / m).sqrt(), "{cov}");
    }

    #[test]
    fn pillow_center_variance() {
        let n = 8;
        let count = 100_000;
        let mut sum_sq = 0.0;
        let mut sum_cross = 0.0;
        for p in 0..count {
            let mut rng = path_rng(77, 0, p as u64);
            let b = sample_pillow(n, &mut rng);
            sum_sq += b.at(n / 2, n / 2) * b.at(n / 2, n / 2);
            sum_cross += b.at(n / 4, n / 2) * b.at(n / 2, n / 2);
        }
        let m = count as f64;
        let var = sum_sq / m;
        let se_var = (2.0f64 / m).sqrt() * (1.0 / 16.0);
        assert!((var - 1.0 / 16.0).abs() < 3.0 * se_var, "{var}");
        let cov = sum_cross / m;
        // K((1/4,1/2),(1/2,1/2)) = 1/32; SE via bivariate normal moments
        let v1 = pillow_cov(0.25, 0.5, 0.25, 0.5).unwrap();
        let v2 = 1.0 / 16.0;
        let se_cov = ((v1 * v2 + (1.0f64 / 32.0).powi(2)) / m).sqrt();
        assert!((cov - 1.0 / 32.0).abs() < 3.0 * se_cov, "{cov}");
    }

    #[test]
    fn dump_writes_paths_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let batch = sample_pillow_batch(4, 3, 11, 2).unwrap();
        batch.dump(dir.path()).unwrap();
        let manifest: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("batch.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest["seed"], 11);
        assert_eq!(manifest["stream_id"], 2);
        assert_eq!(manifest["n"], 4);
        assert_eq!(manifest["count"], 3);
        let back = GridFn2D::from_csv(
            &std::fs::read_to_string(dir.path().join("path-00001.csv")).unwrap(),
        )
        .unwrap();
        assert_eq!(back, batch.paths[1]);
    }

    #[test]
    fn distinct_streams_decorrelate() {
        let n = 4;
        let count = 4000;
        let a = sample_pillow_batch(n, count, 9, 0).unwrap();
        let b = sample_pillow_batch(n, count, 9, 1).unwrap();
        for (i, j) in [(1, 1), (2, 2), (1, 3), (3, 2)] {
            let mut cross = 0.0;
            let mut va = 0.0;
            let mut vb = 0.0;
            for (x, y) in a.paths.iter().zip(&b.paths) {
                cross += x.at(i, j) * y.at(i, j);
                va += x.at(i, j) * x.at(i, j);
                vb += y.at(i, j) * y.at(i, j);
            }
            let rho = cross / (va.sqrt() * vb.sqrt());
            assert!(rho.abs() < 4.0 / (count as f64).sqrt(), "rho = {rho}");
        }
    }
}
