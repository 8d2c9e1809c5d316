//! Seeded streams, parallel path loops and sample statistics.
//!
//! Path `i` of suite `s` under master seed `seed` draws from a ChaCha8 stream
//! keyed by `(seed, s)` with stream number `i`, so results do not depend on
//! the number of workers. Reductions run over the ordered per-path results.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::grid::{sample_wiener, TimeGrid};
use crate::levy_space::{sample_jumps, JumpSet, LevyModel, SamplePath};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "ALEVY_WORKERS";

pub mod suite {
    pub const SAMPLE: u64 = 1;
    pub const TRANSFORM: u64 = 2;
    pub const GIRSANOV: u64 = 3;
    pub const SOLUTION: u64 = 4;
    pub const VERIFY: u64 = 5;
    pub const MALLIAVIN: u64 = 6;
}

pub fn path_rng(seed: u64, suite: u64, index: u64) -> ChaCha8Rng {
    let key = seed ^ suite.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Install a global thread pool sized by `ALEVY_WORKERS` if it is set.
/// Returns the worker count in effect.
pub fn init_workers() -> usize {
    if let Some(n) = std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if a pool already exists; the existing pool is kept.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    rayon::current_num_threads()
}

/// Evaluate `f` on paths `0..n` in parallel; results come back in index order.
pub fn map_paths<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Like [`map_paths`] but stops at the first error (by index).
pub fn try_map_paths<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    let out: Vec<Result<T, E>> = map_paths(n, f);
    out.into_iter().collect()
}

/// Generator of the sample paths of one suite.
#[derive(Clone)]
pub struct PathSource {
    pub grid: Arc<TimeGrid>,
    pub model: Option<Arc<LevyModel>>,
    /// Jumps are sampled for layers with `ε_n >= eps_cut`.
    pub eps_cut: f64,
    pub seed: u64,
    pub suite: u64,
}

impl PathSource {
    pub fn wiener_only(grid: Arc<TimeGrid>, seed: u64, suite: u64) -> Self {
        Self { grid, model: None, eps_cut: 1.0, seed, suite }
    }

    pub fn with_jumps(grid: Arc<TimeGrid>, model: Arc<LevyModel>, eps_cut: f64, seed: u64, suite: u64) -> Self {
        Self { grid, model: Some(model), eps_cut, seed, suite }
    }

    pub fn path(&self, index: u64) -> SamplePath {
        let mut rng = path_rng(self.seed, self.suite, index);
        let wiener = sample_wiener(&self.grid, &mut rng);
        let jumps = match &self.model {
            Some(m) => sample_jumps(m, &self.grid, &mut rng, self.eps_cut),
            None => JumpSet::empty(),
        };
        SamplePath { wiener, jumps }
    }
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Self { mean, se: 0.0, n };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        Self { mean, se: (var / n as f64).sqrt(), n }
    }

    pub fn of_iter(xs: impl IntoIterator<Item = f64>) -> Self {
        Self::of(&xs.into_iter().collect::<Vec<_>>())
    }
}

/// Two estimates of the same quantity with `|lhs − rhs| / √(se_l² + se_r²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub lhs: MeanSe,
    pub rhs: MeanSe,
    /// Standard error of the per-path difference.
    pub se_diff: f64,
}

impl Comparison {
    pub fn new(lhs: &[f64], rhs: &[f64]) -> Self {
        let diff: Vec<f64> = lhs.iter().zip(rhs).map(|(a, b)| a - b).collect();
        Self { lhs: MeanSe::of(lhs), rhs: MeanSe::of(rhs), se_diff: MeanSe::of(&diff).se }
    }

    pub fn pooled_se(&self) -> f64 {
        self.lhs.se.hypot(self.rhs.se)
    }

    pub fn z_score(&self) -> f64 {
        let d = (self.lhs.mean - self.rhs.mean).abs();
        let se = self.pooled_se();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_independent_of_scheduling() {
        let a: Vec<f64> = map_paths(64, |i| path_rng(7, 1, i).random::<f64>());
        let b: Vec<f64> = (0..64).map(|i| path_rng(7, 1, i).random::<f64>()).collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_ne!(path_rng(7, 1, 0).random::<f64>(), path_rng(7, 2, 0).random::<f64>());
    }

    #[test]
    fn mean_se_of_constants() {
        let m = MeanSe::of(&[2.0; 10]);
        assert_eq!(m.mean, 2.0);
        assert_eq!(m.se, 0.0);
        let c = Comparison::new(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]);
        assert_eq!(c.z_score(), 0.0);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.5)).collect();
        assert!((loglog_slope(&x, &y) + 1.5).abs() < 1e-12);
    }
}
