//! Time grids and discretised Wiener paths.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    widths: Vec<f64>,
    uniform: bool,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::InvalidGrid("need at least one cell".into()));
        }
        let h = horizon / steps as f64;
        let mut nodes: Vec<f64> = (0..=steps).map(|j| j as f64 * h).collect();
        nodes[steps] = horizon;
        Ok(Self { nodes, widths: vec![h; steps], uniform: true })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first node must be 0, got {}", nodes[0])));
        }
        let mut widths = Vec::with_capacity(nodes.len() - 1);
        for w in nodes.windows(2) {
            let d = w[1] - w[0];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidGrid(format!("nodes not strictly increasing at {}", w[1])));
            }
            widths.push(d);
        }
        let h0 = widths[0];
        let uniform = widths.iter().all(|&d| d == h0);
        Ok(Self { nodes, widths, uniform })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("non-empty")
    }
    /// Number of cells `m`.
    pub fn steps(&self) -> usize {
        self.widths.len()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }
    /// Width of cell `k` (1-based, cell `k` is `(t_{k-1}, t_k]`).
    pub fn width(&self, k: usize) -> f64 {
        self.widths[k - 1]
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }
    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Index of the grid node equal to `t` (up to rounding).
    pub fn node_index(&self, t: f64) -> Result<usize> {
        let j = self.nearest_node(t);
        let tol = 1e-9 * self.horizon();
        if (self.nodes[j] - t).abs() <= tol {
            Ok(j)
        } else {
            Err(Error::InvalidInput(format!("time {t} is not a grid node")))
        }
    }

    pub fn nearest_node(&self, t: f64) -> usize {
        let idx = self.nodes.partition_point(|&x| x < t);
        if idx == 0 {
            return 0;
        }
        if idx >= self.nodes.len() {
            return self.nodes.len() - 1;
        }
        if (t - self.nodes[idx - 1]) <= (self.nodes[idx] - t) {
            idx - 1
        } else {
            idx
        }
    }

    /// The cell `k` containing `t`, i.e. `t_{k-1} < t <= t_k` (t = 0 maps to cell 1).
    pub fn cell_of(&self, t: f64) -> usize {
        self.nodes.partition_point(|&x| x < t).clamp(1, self.steps())
    }

    /// Grid with every `factor` consecutive cells merged.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidGrid(format!("cannot coarsen {} cells by {factor}", self.steps())));
        }
        let nodes: Vec<f64> = self.nodes.iter().step_by(factor).copied().collect();
        let mut g = Self::from_nodes(nodes)?;
        g.uniform = self.uniform;
        if g.uniform {
            let h = g.widths[0];
            g.widths.iter_mut().for_each(|w| *w = h);
        }
        Ok(g)
    }
}

/// A Wiener path on a grid: increments plus cumulative values.
#[derive(Clone, Debug)]
pub struct WienerPath {
    grid: Arc<TimeGrid>,
    increments: Vec<f64>,
    values: Vec<f64>,
}

impl WienerPath {
    pub fn from_increments(grid: Arc<TimeGrid>, increments: Vec<f64>) -> Result<Self> {
        if increments.len() != grid.steps() {
            return Err(Error::InvalidInput(format!(
                "expected {} increments, got {}",
                grid.steps(),
                increments.len()
            )));
        }
        let mut values = Vec::with_capacity(increments.len() + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for &dw in &increments {
            acc += dw;
            values.push(acc);
        }
        Ok(Self { grid, increments, values })
    }

    /// Scale standard normals `z_j` to increments `z_j √Δ_j`.
    pub fn from_standard_normals(grid: Arc<TimeGrid>, z: &[f64]) -> Result<Self> {
        let inc = z.iter().zip(grid.widths()).map(|(z, d)| z * d.sqrt()).collect();
        Self::from_increments(grid, inc)
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }
    /// Increment of cell `k` (1-based).
    pub fn increment(&self, k: usize) -> f64 {
        self.increments[k - 1]
    }
    /// `W_{t_j}` for `j = 0..=m`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn value_at(&self, j: usize) -> f64 {
        self.values[j]
    }
    pub fn terminal(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Path with increment `k` replaced by `dw`.
    pub fn with_increment(&self, k: usize, dw: f64) -> Self {
        let mut inc = self.increments.clone();
        inc[k - 1] = dw;
        Self::from_increments(self.grid.clone(), inc).expect("same length")
    }

    /// Path aggregated to the coarser grid.
    pub fn coarsen(&self, coarse: Arc<TimeGrid>) -> Result<Self> {
        let factor = self.grid.steps() / coarse.steps().max(1);
        if factor * coarse.steps() != self.grid.steps() {
            return Err(Error::GridMismatch);
        }
        let inc = self.increments.chunks(factor).map(|c| c.iter().sum()).collect();
        Self::from_increments(coarse, inc)
    }

    pub fn same_grid(&self, other: &WienerPath) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}

pub fn sample_wiener<R: Rng + ?Sized>(grid: &Arc<TimeGrid>, rng: &mut R) -> WienerPath {
    let z: Vec<f64> = (0..grid.steps()).map(|_| rng.sample(StandardNormal)).collect();
    WienerPath::from_standard_normals(grid.clone(), &z).expect("length matches grid")
}
