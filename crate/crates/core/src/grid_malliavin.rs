//! Malliavin derivative and Skorohod integral on the time grid.
//!
//! `D_s F` is represented by its constant value `d_j F` on each cell and the
//! divergence of a step process is `δ(u) = Σ u_j ΔW_j − Σ d_j(u_j) Δ_j`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functional::{Cylinder, GridFunctional};
use crate::grid::{TimeGrid, WienerPath};
use crate::levy_space::JumpSet;

/// Relative finite-difference step.
pub const FD_STEP: f64 = 1e-5;

fn fd_step(path: &WienerPath, cell: usize) -> f64 {
    FD_STEP * path.increment(cell).abs().max(1.0)
}

/// `d_j F` on `path`; analytic when available, otherwise a central difference
/// along the Cameron–Martin direction with derivative `1` on cell `j`.
pub fn derivative(f: &dyn GridFunctional, path: &WienerPath, jumps: &JumpSet, cell: usize) -> Result<f64> {
    if let Some(d) = f.analytic_derivative(path, jumps, cell) {
        return Ok(d);
    }
    if !f.allows_finite_differences() {
        return Err(Error::MissingDerivative);
    }
    Ok(fd_derivative(&|p: &WienerPath| f.value(p, jumps), path, cell))
}

fn fd_derivative(f: &dyn Fn(&WienerPath) -> f64, path: &WienerPath, cell: usize) -> f64 {
    let delta = fd_step(path, cell);
    let dt = path.grid().width(cell);
    let x = path.increment(cell);
    let up = f(&path.with_increment(cell, x + delta * dt));
    let down = f(&path.with_increment(cell, x - delta * dt));
    (up - down) / (2.0 * delta * dt)
}

/// `d_{jk} F`.
pub fn second_derivative(f: &dyn GridFunctional, path: &WienerPath, jumps: &JumpSet, j: usize, k: usize) -> Result<f64> {
    if let Some(d) = f.analytic_second_derivative(path, jumps, j, k) {
        return Ok(d);
    }
    if f.analytic_derivative(path, jumps, j).is_some() {
        let g = |p: &WienerPath| f.analytic_derivative(p, jumps, j).expect("checked");
        return Ok(fd_derivative(&g, path, k));
    }
    if !f.allows_finite_differences() {
        return Err(Error::MissingDerivative);
    }
    let g = |p: &WienerPath| fd_derivative(&|q: &WienerPath| f.value(q, jumps), p, j);
    Ok(fd_derivative(&g, path, k))
}

/// A step process `u_s = u_j` on cell `j`, each cell value a functional.
pub trait GridProcess: Send + Sync {
    fn grid(&self) -> &Arc<TimeGrid>;
    fn cell_value(&self, cell: usize, path: &WienerPath, jumps: &JumpSet) -> f64;
    /// `d_wrt(u_cell)`.
    fn cell_derivative(&self, cell: usize, wrt: usize, path: &WienerPath, jumps: &JumpSet) -> Result<f64>;
}

/// A time-dependent cylinder read as the step process `u_j = f(t_{j-1}, ·)`.
impl GridProcess for Cylinder {
    fn grid(&self) -> &Arc<TimeGrid> {
        Cylinder::grid(self)
    }
    fn cell_value(&self, cell: usize, path: &WienerPath, jumps: &JumpSet) -> f64 {
        self.value_on(self.grid().node(cell - 1), path, jumps)
    }
    fn cell_derivative(&self, cell: usize, wrt: usize, path: &WienerPath, jumps: &JumpSet) -> Result<f64> {
        let z: Vec<f64> = self.features.iter().map(|f| f.value(path)).collect();
        let mut g = vec![0.0; z.len()];
        self.eval_grad(self.grid().node(cell - 1), &z, jumps, &mut g);
        Ok(g.iter().zip(&self.features).map(|(g, f)| g * f.weight(wrt)).sum())
    }
}

/// A step process with an arbitrary functional on each cell.
#[derive(Clone)]
pub struct CellProcess {
    pub cells: Vec<Arc<dyn GridFunctional>>,
}

impl CellProcess {
    /// The same functional on every cell.
    pub fn constant_in_time(f: Arc<dyn GridFunctional>) -> Self {
        let m = f.grid().steps();
        Self { cells: vec![f; m] }
    }
}

impl GridProcess for CellProcess {
    fn grid(&self) -> &Arc<TimeGrid> {
        self.cells[0].grid()
    }
    fn cell_value(&self, cell: usize, path: &WienerPath, jumps: &JumpSet) -> f64 {
        self.cells[cell - 1].value(path, jumps)
    }
    fn cell_derivative(&self, cell: usize, wrt: usize, path: &WienerPath, jumps: &JumpSet) -> Result<f64> {
        derivative(self.cells[cell - 1].as_ref(), path, jumps, wrt)
    }
}

/// Discrete divergence from cell values and their own-cell derivatives,
/// restricted to cells `first..=last`.
pub fn divergence(values: &[f64], own_derivatives: &[f64], path: &WienerPath, first: usize, last: usize) -> (f64, f64) {
    let grid = path.grid();
    let mut wiener = 0.0;
    let mut trace = 0.0;
    for k in first..=last {
        wiener += values[k - 1] * path.increment(k);
        trace += own_derivatives[k - 1] * grid.width(k);
    }
    (wiener, trace)
}

/// `δ(u) = Σ_j u_j ΔW_j − Σ_j d_j(u_j) Δ_j`.
pub fn skorohod(u: &dyn GridProcess, path: &WienerPath, jumps: &JumpSet) -> Result<f64> {
    let m = path.grid().steps();
    let mut values = vec![0.0; m];
    let mut diag = vec![0.0; m];
    for k in 1..=m {
        values[k - 1] = u.cell_value(k, path, jumps);
        diag[k - 1] = u.cell_derivative(k, k, path, jumps)?;
    }
    let (w, t) = divergence(&values, &diag, path, 1, m);
    Ok(w - t)
}

/// `Σ_j u_j ΔW_j`.
pub fn ito_sum(u: &dyn GridProcess, path: &WienerPath, jumps: &JumpSet) -> f64 {
    (1..=path.grid().steps()).map(|k| u.cell_value(k, path, jumps) * path.increment(k)).sum()
}

/// Per-path terms of the duality `E[Σ u_j d_jF Δ_j] = E[δ(u) F]`.
pub fn duality_terms(f: &dyn GridFunctional, u: &dyn GridProcess, path: &WienerPath, jumps: &JumpSet) -> Result<(f64, f64)> {
    let grid = path.grid();
    let mut lhs = 0.0;
    for k in 1..=grid.steps() {
        lhs += u.cell_value(k, path, jumps) * derivative(f, path, jumps, k)? * grid.width(k);
    }
    let rhs = skorohod(u, path, jumps)? * f.value(path, jumps);
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::{FeatureSpec, LinearCombination, Opaque, Shape};
    use crate::grid::sample_wiener;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(m: usize, seed: u64) -> (Arc<TimeGrid>, WienerPath) {
        let g = Arc::new(TimeGrid::uniform(1.0, m).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = sample_wiener(&g, &mut rng);
        (g, p)
    }

    #[test]
    fn derivative_of_terminal_value() {
        let (g, p) = setup(16, 1);
        let wt = Cylinder::of_terminal(g.clone(), 1.0, Shape::Identity);
        let e = Cylinder::of_terminal(g, 1.0, Shape::Exp(1.0));
        for j in 1..=16 {
            assert_eq!(derivative(&wt, &p, &JumpSet::empty(), j).unwrap(), 1.0);
            let d = derivative(&e, &p, &JumpSet::empty(), j).unwrap();
            assert!((d - p.terminal().exp()).abs() < 1e-14);
            for k in 1..=16 {
                assert_eq!(second_derivative(&wt, &p, &JumpSet::empty(), j, k).unwrap(), 0.0);
                let d2 = second_derivative(&e, &p, &JumpSet::empty(), j, k).unwrap();
                assert!((d2 - p.terminal().exp()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn square_of_half_integral_against_finite_differences() {
        let (g, p) = setup(16, 2);
        let f = Cylinder::of_feature(g.clone(), 1.0, FeatureSpec::half(), Shape::Square).unwrap();
        let half: f64 = p.increments()[..8].iter().sum();
        let opaque = Opaque::new(g.clone(), true, move |w, _| {
            let s: f64 = w.increments()[..8].iter().sum();
            s * s
        });
        for j in 1..=16 {
            let ind = if g.node(j) <= 0.5 { 1.0 } else { 0.0 };
            let d = derivative(&f, &p, &JumpSet::empty(), j).unwrap();
            assert!((d - 2.0 * half * ind).abs() < 1e-14);
            let fd = derivative(&opaque, &p, &JumpSet::empty(), j).unwrap();
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-3), "cell {j}: {fd} vs {d}");
            for k in 1..=16 {
                let ind_k = if g.node(k) <= 0.5 { 1.0 } else { 0.0 };
                let d2 = second_derivative(&f, &p, &JumpSet::empty(), j, k).unwrap();
                assert_eq!(d2, 2.0 * ind * ind_k);
                let fd2 = second_derivative(&opaque, &p, &JumpSet::empty(), j, k).unwrap();
                assert!((fd2 - d2).abs() < 1e-3, "({j},{k}) {fd2}");
            }
        }
    }

    #[test]
    fn missing_derivative_reported() {
        let (g, p) = setup(4, 3);
        let f = Opaque::new(g, false, |w, _| w.terminal());
        assert!(matches!(derivative(&f, &p, &JumpSet::empty(), 1), Err(Error::MissingDerivative)));
        assert!(matches!(second_derivative(&f, &p, &JumpSet::empty(), 1, 2), Err(Error::MissingDerivative)));
    }

    #[test]
    fn skorohod_of_terminal_value_process() {
        let (g, p) = setup(32, 4);
        let u = CellProcess::constant_in_time(Arc::new(Cylinder::of_terminal(g, 1.0, Shape::Identity)));
        let d = skorohod(&u, &p, &JumpSet::empty()).unwrap();
        let wt = p.terminal();
        assert!((d - (wt * wt - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn adapted_process_gives_ito_sum_exactly() {
        let (g, p) = setup(32, 5);
        // u_j = W_{t_{j-1}}: cell j depends only on earlier increments.
        let cells: Vec<Arc<dyn GridFunctional>> = (1..=32)
            .map(|j| {
                let to = g.node(j - 1);
                if j == 1 {
                    Arc::new(Cylinder::constant(g.clone(), 0.0)) as Arc<dyn GridFunctional>
                } else {
                    Arc::new(
                        Cylinder::of_feature(g.clone(), 1.0, FeatureSpec::Window { from: 0.0, to }, Shape::Sin(1.0))
                            .unwrap(),
                    )
                }
            })
            .collect();
        let u = CellProcess { cells };
        let d = skorohod(&u, &p, &JumpSet::empty()).unwrap();
        assert_eq!(d.to_bits(), ito_sum(&u, &p, &JumpSet::empty()).to_bits());
    }

    #[test]
    fn derivative_is_linear() {
        let (g, p) = setup(8, 6);
        let f: Arc<dyn GridFunctional> = Arc::new(Cylinder::of_terminal(g.clone(), 1.0, Shape::Sin(1.0)));
        let h: Arc<dyn GridFunctional> =
            Arc::new(Cylinder::of_feature(g.clone(), 1.0, FeatureSpec::half(), Shape::Gauss(0.7)).unwrap());
        let comb = LinearCombination { terms: vec![(2.0, f.clone()), (-0.5, h.clone())] };
        for j in 1..=8 {
            let lhs = derivative(&comb, &p, &JumpSet::empty(), j).unwrap();
            let rhs = 2.0 * derivative(f.as_ref(), &p, &JumpSet::empty(), j).unwrap()
                - 0.5 * derivative(h.as_ref(), &p, &JumpSet::empty(), j).unwrap();
            assert!((lhs - rhs).abs() < 1e-14);
        }
    }
}
