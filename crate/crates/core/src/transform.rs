//! Anticipating Girsanov transformations on the grid.
//!
//! With the left-endpoint rule, the backward transform anchored at `t` is
//!
//! `y_k = a_k(A_{k-1,t} ω)`, `A_{r,t} ω = ω′ − Σ_{r<l<=t} y_l Δ_l e_l`,
//!
//! which is implicit in `y_k`, and the forward transform is the explicit
//! recursion `w_k = a_k(T_{k-1} ω)`, `T_r ω = ω′ + Σ_{l<=r} w_l Δ_l e_l`. The
//! sensitivities `D_θ[a_k(A_{k-1,t})]` solve a linear Volterra system that
//! is low-rank for cylindrical drifts.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{Cylinder, FunctionalBounds};
use crate::grid::WienerPath;
use crate::levy_space::JumpSet;

/// A drift `a` with its per-cell sup bounds.
#[derive(Clone, Debug)]
pub struct DriftCoefficient {
    pub cyl: Cylinder,
    /// Bounds of `a_k = a(t_{k-1}, ·)` for each cell.
    pub cell_bounds: Vec<FunctionalBounds>,
    /// `c₁ = Σ_k ‖|Da_k|_2‖²_∞ Δ_k`.
    pub c1: Option<f64>,
    /// `c₂ = Σ_k ‖|D²a_k|_2‖²_∞ Δ_k`.
    pub c2: Option<f64>,
}

impl DriftCoefficient {
    pub fn new(cyl: Cylinder) -> Self {
        let grid = cyl.grid().clone();
        let cell_bounds: Vec<FunctionalBounds> = (1..=grid.steps()).map(|k| cyl.bounds_at(grid.node(k - 1))).collect();
        let sum_sq = |pick: fn(&FunctionalBounds) -> Option<f64>| -> Option<f64> {
            let mut s = 0.0;
            for (k, b) in cell_bounds.iter().enumerate() {
                let v = pick(b)?;
                s += v * v * grid.width(k + 1);
            }
            Some(s)
        };
        let c1 = sum_sq(|b| b.grad);
        let c2 = sum_sq(|b| b.hess);
        Self { cyl, cell_bounds, c1, c2 }
    }

    /// `Σ_{k in (s,t]} ‖a_k‖²_∞ Δ_k`.
    pub fn sup_square_integral(&self, s: usize, t: usize) -> Option<f64> {
        let grid = self.cyl.grid();
        let mut acc = 0.0;
        for k in s + 1..=t {
            let b = self.cell_bounds[k - 1].sup?;
            acc += b * b * grid.width(k);
        }
        Some(acc)
    }

    #[inline]
    pub(crate) fn time(&self, k: usize) -> f64 {
        self.cyl.grid().node(k - 1)
    }

    /// Time argument of cell `k`: its left node.
    #[inline]
    pub fn time_of(&self, k: usize) -> f64 {
        self.time(k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationScheme {
    /// Fixed-point iteration of the whole shift field, started at `ω′`.
    Picard,
    /// Cell-by-cell solves in causal order with Newton steps.
    Sweep,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_scheme")]
    pub scheme: IterationScheme,
}

fn default_tol() -> f64 {
    1e-12
}
fn default_max_iter() -> usize {
    200
}
fn default_scheme() -> IterationScheme {
    IterationScheme::Picard
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter(), scheme: default_scheme() }
    }
}

impl SolverOptions {
    pub fn sweep() -> Self {
        Self { scheme: IterationScheme::Sweep, ..Self::default() }
    }
}

/// The shift field realising `A_{s,t}` or `T_t` on one path.
#[derive(Clone, Debug)]
pub struct PathTransform {
    pub kind: TransformKind,
    /// Window `(s, t]` as node indices. Forward transforms start at `s`.
    pub s: usize,
    pub t: usize,
    /// `y_k` for cells in the window, zero elsewhere (indexed `k - 1`).
    pub drift: Vec<f64>,
    base: WienerPath,
    pub iterations: usize,
    /// Final sup-norm change of the transformed paths.
    pub defect: f64,
    /// Defect after each iteration.
    pub history: Vec<f64>,
}

impl PathTransform {
    fn sign(&self) -> f64 {
        match self.kind {
            TransformKind::Forward => 1.0,
            TransformKind::Backward => -1.0,
        }
    }

    pub fn base(&self) -> &WienerPath {
        &self.base
    }

    /// Shift on cell `k`.
    pub fn drift_at(&self, k: usize) -> f64 {
        self.drift[k - 1]
    }

    /// `A_{s,t} ω` or `T_t ω`.
    pub fn transformed(&self) -> WienerPath {
        self.partial(match self.kind {
            TransformKind::Backward => self.s,
            TransformKind::Forward => self.t,
        })
    }

    /// `A_{r,t} ω` for `r` in `[s, t]` (backward), or the forward path stopped
    /// at `r` for `r` in `[s, t]` (forward).
    pub fn partial(&self, r: usize) -> WienerPath {
        let grid = self.base.grid();
        let sign = self.sign();
        let (lo, hi) = match self.kind {
            TransformKind::Backward => (r.max(self.s), self.t),
            TransformKind::Forward => (self.s, r.min(self.t)),
        };
        let mut inc = self.base.increments().to_vec();
        for k in lo + 1..=hi {
            inc[k - 1] += sign * self.drift[k - 1] * grid.width(k);
        }
        WienerPath::from_increments(grid.clone(), inc).expect("same grid")
    }

    /// Features of `cyl` at the partial paths, for nodes `r = s..=t`.
    pub fn features_at_nodes(&self, cyl: &Cylinder) -> Vec<Vec<f64>> {
        let grid = self.base.grid();
        let mut z: Vec<f64> = cyl.features.iter().map(|f| f.value(&self.base)).collect();
        let n = self.t - self.s;
        let mut out = vec![Vec::new(); n + 1];
        match self.kind {
            TransformKind::Backward => {
                out[n] = z.clone();
                for k in (self.s + 1..=self.t).rev() {
                    let step = self.drift[k - 1] * grid.width(k);
                    for (zi, f) in z.iter_mut().zip(&cyl.features) {
                        *zi -= f.weight(k) * step;
                    }
                    out[k - 1 - self.s] = z.clone();
                }
            }
            TransformKind::Forward => {
                out[0] = z.clone();
                for k in self.s + 1..=self.t {
                    let step = self.drift[k - 1] * grid.width(k);
                    for (zi, f) in z.iter_mut().zip(&cyl.features) {
                        *zi += f.weight(k) * step;
                    }
                    out[k - self.s] = z.clone();
                }
            }
        }
        out
    }

    /// Write `(iteration, defect)` rows.
    pub fn write_trace<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "defect"])?;
        for (i, d) in self.history.iter().enumerate() {
            w.write_record([(i + 1).to_string(), format!("{d:.6e}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_window(path: &WienerPath, s: usize, t: usize) -> Result<()> {
    if s > t || t > path.grid().steps() {
        return Err(Error::InvalidInput(format!("window ({s}, {t}] outside the grid")));
    }
    Ok(())
}

/// Largest change of any partial path: the range of the cumulative sums of `δy Δ`.
fn family_defect(old: &[f64], new: &[f64], path: &WienerPath, s: usize, t: usize) -> f64 {
    let grid = path.grid();
    let (mut acc, mut lo, mut hi) = (0.0f64, 0.0f64, 0.0f64);
    for k in s + 1..=t {
        acc += (new[k - 1] - old[k - 1]) * grid.width(k);
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    hi - lo
}

/// Solve `(A_{s,t} ω)_· = ω′_· − ∫_{s∧·}^{t∧·} a_r(A_{r,t} ω) dr` on the grid.
pub fn solve_backward(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize, opts: &SolverOptions) -> Result<PathTransform> {
    check_window(path, s, t)?;
    let grid = path.grid();
    let cyl = &a.cyl;
    let p = cyl.arity();
    let base_z: Vec<f64> = cyl.features.iter().map(|f| f.value(path)).collect();
    let mut drift = vec![0.0; grid.steps()];
    let mut history = Vec::new();
    let mut z = base_z.clone();

    if cyl.is_deterministic() {
        for k in s + 1..=t {
            drift[k - 1] = cyl.eval(a.time(k), &z, jumps);
        }
        return Ok(PathTransform { kind: TransformKind::Backward, s, t, drift, base: path.clone(), iterations: 1, defect: 0.0, history: vec![0.0] });
    }

    match opts.scheme {
        IterationScheme::Picard => {
            let mut next = vec![0.0; grid.steps()];
            for it in 1..=opts.max_iter {
                z.copy_from_slice(&base_z);
                for k in (s + 1..=t).rev() {
                    let step = drift[k - 1] * grid.width(k);
                    for (zi, f) in z.iter_mut().zip(&cyl.features) {
                        *zi -= f.weight(k) * step;
                    }
                    next[k - 1] = cyl.eval(a.time(k), &z, jumps);
                }
                let d = family_defect(&drift, &next, path, s, t);
                std::mem::swap(&mut drift, &mut next);
                history.push(d);
                if !d.is_finite() {
                    break;
                }
                if d <= opts.tol {
                    return Ok(PathTransform { kind: TransformKind::Backward, s, t, drift, base: path.clone(), iterations: it, defect: d, history });
                }
            }
            Err(Error::NoConvergence { iterations: opts.max_iter, defect: history.last().copied().unwrap_or(f64::NAN) })
        }
        IterationScheme::Sweep => {
            let mut grad = vec![0.0; p];
            let mut zk = vec![0.0; p];
            let mut worst = 0.0f64;
            let mut max_it = 0;
            for k in (s + 1..=t).rev() {
                let dt = grid.width(k);
                let time = a.time(k);
                let mut y = cyl.eval(time, &z, jumps);
                let mut it = 0;
                loop {
                    it += 1;
                    for i in 0..p {
                        zk[i] = z[i] - cyl.features[i].weight(k) * y * dt;
                    }
                    let v = cyl.eval_grad(time, &zk, jumps, &mut grad);
                    let beta: f64 = (0..p).map(|i| grad[i] * cyl.features[i].weight(k)).sum::<f64>() * dt;
                    let slope = 1.0 + beta;
                    if !(slope > 0.0) {
                        return Err(Error::NoConvergence { iterations: it, defect: f64::INFINITY });
                    }
                    let step = (y - v) / slope;
                    y -= step;
                    if step.abs() <= (opts.tol * 0.01).max(4.0 * f64::EPSILON * (1.0 + y.abs())) {
                        worst = worst.max(step.abs() * dt);
                        break;
                    }
                    if it >= opts.max_iter || !y.is_finite() {
                        return Err(Error::NoConvergence { iterations: it, defect: step.abs() * dt });
                    }
                }
                max_it = max_it.max(it);
                drift[k - 1] = y;
                for i in 0..p {
                    z[i] -= cyl.features[i].weight(k) * y * dt;
                }
            }
            history.push(worst);
            Ok(PathTransform { kind: TransformKind::Backward, s, t, drift, base: path.clone(), iterations: max_it, defect: worst, history })
        }
    }
}

/// Solve `(T_t ω)_· = ω′_· + ∫_0^{t∧·} a_s(T_s ω) ds` on the grid.
pub fn solve_forward(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, t: usize, opts: &SolverOptions) -> Result<PathTransform> {
    solve_forward_from(a, path, jumps, 0, t, opts)
}

/// The forward recursion started at node `r`; on the grid this is `A_{r,t}^{-1}`.
pub fn solve_forward_from(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, r: usize, t: usize, opts: &SolverOptions) -> Result<PathTransform> {
    check_window(path, r, t)?;
    let grid = path.grid();
    let cyl = &a.cyl;
    let base_z: Vec<f64> = cyl.features.iter().map(|f| f.value(path)).collect();
    let mut drift = vec![0.0; grid.steps()];
    let deterministic = cyl.is_deterministic();
    let scheme = if deterministic { IterationScheme::Sweep } else { opts.scheme };
    match scheme {
        IterationScheme::Sweep => {
            let mut z = base_z;
            for k in r + 1..=t {
                let y = cyl.eval(a.time(k), &z, jumps);
                drift[k - 1] = y;
                let step = y * grid.width(k);
                for (zi, f) in z.iter_mut().zip(&cyl.features) {
                    *zi += f.weight(k) * step;
                }
            }
            Ok(PathTransform { kind: TransformKind::Forward, s: r, t, drift, base: path.clone(), iterations: 1, defect: 0.0, history: vec![0.0] })
        }
        IterationScheme::Picard => {
            let mut history = Vec::new();
            let mut next = vec![0.0; grid.steps()];
            let mut z = base_z.clone();
            for it in 1..=opts.max_iter {
                z.copy_from_slice(&base_z);
                for k in r + 1..=t {
                    next[k - 1] = cyl.eval(a.time(k), &z, jumps);
                    let step = drift[k - 1] * grid.width(k);
                    for (zi, f) in z.iter_mut().zip(&cyl.features) {
                        *zi += f.weight(k) * step;
                    }
                }
                let d = family_defect(&drift, &next, path, r, t);
                std::mem::swap(&mut drift, &mut next);
                history.push(d);
                if d <= opts.tol {
                    return Ok(PathTransform { kind: TransformKind::Forward, s: r, t, drift, base: path.clone(), iterations: it, defect: d, history });
                }
                if !d.is_finite() {
                    break;
                }
            }
            Err(Error::NoConvergence { iterations: opts.max_iter, defect: history.last().copied().unwrap_or(f64::NAN) })
        }
    }
}

/// Defects of the inverse and flow identities.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ComposeDefects {
    /// `sup |T_t(A_t ω) − ω′|` over grid nodes.
    pub inverse: f64,
    /// `max_s sup |A_{s,t} ω − T_s(A_t ω)|` over the probed `s`.
    pub flow: f64,
}

pub fn sup_distance(p1: &WienerPath, p2: &WienerPath) -> Result<f64> {
    if !p1.same_grid(p2) {
        return Err(Error::GridMismatch);
    }
    Ok(p1.values().iter().zip(p2.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Check `T_t ∘ A_t = id` and `A_{s,t} = T_s ∘ A_t` with independent solves.
pub fn compose_check(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, t: usize, opts: &SolverOptions) -> Result<ComposeDefects> {
    let at = solve_backward(a, path, jumps, 0, t, opts)?;
    let at_path = at.transformed();
    let back = solve_forward(a, &at_path, jumps, t, opts)?;
    let inverse = sup_distance(&back.transformed(), path)?;
    let mut flow = 0.0f64;
    let probes: Vec<usize> = [0, t / 4, t / 2, (3 * t) / 4, t].into_iter().collect();
    for s in probes {
        let ast = solve_backward(a, path, jumps, s, t, opts)?.transformed();
        let ts = solve_forward(a, &at_path, jumps, s, opts)?.transformed();
        flow = flow.max(sup_distance(&ast, &ts)?);
    }
    Ok(ComposeDefects { inverse, flow })
}

/// Discrete Cameron–Martin norm of `p1 − p2`.
pub fn cm_distance(p1: &WienerPath, p2: &WienerPath) -> Result<f64> {
    if !p1.same_grid(p2) {
        return Err(Error::GridMismatch);
    }
    let grid = p1.grid();
    let s: f64 = (1..=grid.steps())
        .map(|k| {
            let d = p1.increment(k) - p2.increment(k);
            d * d / grid.width(k)
        })
        .sum();
    Ok(s.sqrt())
}

/// Both sides of `|A_{u,t}ω − A_{u,s}ω|²_CM <= 2(∫_s^t ‖a_r‖²_∞ dr) exp{2c₁}`.
pub fn uniform_cm_bound_check(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, u: usize, s: usize, t: usize, opts: &SolverOptions) -> Result<(f64, f64)> {
    if !(u <= s && s <= t) {
        return Err(Error::InvalidInput("need u <= s <= t".into()));
    }
    let at = solve_backward(a, path, jumps, u, t, opts)?.transformed();
    let as_ = solve_backward(a, path, jumps, u, s, opts)?.transformed();
    let lhs = cm_distance(&at, &as_)?.powi(2);
    let rhs = match (a.sup_square_integral(s, t), a.c1) {
        (Some(i), Some(c1)) => 2.0 * i * (2.0 * c1).exp(),
        (Some(i), None) if i == 0.0 => 0.0,
        _ => f64::INFINITY,
    };
    Ok((lhs, rhs))
}

/// Sensitivities `V_k` with `D_θ[a_k(A_{k-1,t} ω)] = V_k · H_θ` for the cells of a backward transform.
#[derive(Clone, Debug)]
pub struct Sensitivity {
    pub s: usize,
    pub t: usize,
    pub arity: usize,
    /// `V_k`, row `k - s - 1`.
    pub v: Vec<f64>,
    /// `G_k = ∇f_k` at `A_{k-1,t} ω`, same layout.
    pub grad: Vec<f64>,
}

impl Sensitivity {
    /// Propagate `M_t = I`, `M_{k-1} = (I − Δ_k H_k R_kᵀ) M_k` with
    /// `R_k = G_k / (1 + Δ_k G_k·H_k)` and set `V_k = M_kᵀ R_k`.
    pub fn compute(a: &DriftCoefficient, tr: &PathTransform, jumps: &JumpSet) -> Result<Self> {
        if tr.kind != TransformKind::Backward {
            return Err(Error::InvalidInput("sensitivities need a backward transform".into()));
        }
        let cyl = &a.cyl;
        let grid = tr.base.grid();
        let p = cyl.arity();
        let n = tr.t - tr.s;
        let mut v = vec![0.0; n * p];
        let mut gradv = vec![0.0; n * p];
        if p == 0 || cyl.is_deterministic() {
            return Ok(Self { s: tr.s, t: tr.t, arity: p, v, grad: gradv });
        }
        let feats = tr.features_at_nodes(cyl);
        let mut m = vec![0.0; p * p];
        for i in 0..p {
            m[i * p + i] = 1.0;
        }
        let mut g = vec![0.0; p];
        let mut r = vec![0.0; p];
        let mut h = vec![0.0; p];
        let mut tmp = vec![0.0; p];
        for k in (tr.s + 1..=tr.t).rev() {
            let dt = grid.width(k);
            let row = k - tr.s - 1;
            cyl.eval_grad(a.time(k), &feats[k - 1 - tr.s], jumps, &mut g);
            for i in 0..p {
                h[i] = cyl.features[i].weight(k);
            }
            let beta: f64 = g.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() * dt;
            if !(1.0 + beta > 0.0) {
                return Err(Error::NoConvergence { iterations: 0, defect: f64::INFINITY });
            }
            for i in 0..p {
                r[i] = g[i] / (1.0 + beta);
            }
            // V_k = M_kᵀ R_k
            for j in 0..p {
                v[row * p + j] = (0..p).map(|i| m[i * p + j] * r[i]).sum();
                gradv[row * p + j] = g[j];
            }
            // M_{k-1} = M_k − Δ H (Rᵀ M_k) = M_k − Δ H V_kᵀ
            for j in 0..p {
                tmp[j] = v[row * p + j];
            }
            for i in 0..p {
                for j in 0..p {
                    m[i * p + j] -= dt * h[i] * tmp[j];
                }
            }
        }
        Ok(Self { s: tr.s, t: tr.t, arity: p, v, grad: gradv })
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let r = k - self.s - 1;
        &self.v[r * self.arity..(r + 1) * self.arity]
    }
    pub fn grad_row(&self, k: usize) -> &[f64] {
        let r = k - self.s - 1;
        &self.grad[r * self.arity..(r + 1) * self.arity]
    }

    /// `D_θ[a_k(A_{k-1,t})]` for `θ` in cell `theta`.
    pub fn value(&self, a: &DriftCoefficient, k: usize, theta: usize) -> f64 {
        self.row(k).iter().zip(&a.cyl.features).map(|(v, f)| v * f.weight(theta)).sum()
    }

    /// `∫_0^T |D_θ[a_k(A_{k-1,t})]|² dθ = V_kᵀ Gram V_k`.
    pub fn l2_norm_sq(&self, a: &DriftCoefficient, k: usize) -> f64 {
        let gram = gram_matrix(&a.cyl);
        let v = self.row(k);
        let p = self.arity;
        let mut s = 0.0;
        for i in 0..p {
            for j in 0..p {
                s += v[i] * gram[i * p + j] * v[j];
            }
        }
        s
    }
}

/// `Gram_ij = Σ_θ h_{iθ} h_{jθ} Δ_θ`.
pub fn gram_matrix(cyl: &Cylinder) -> Vec<f64> {
    let p = cyl.arity();
    let grid = cyl.grid();
    let mut g = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            g[i * p + j] = (1..=grid.steps())
                .map(|k| cyl.features[i].weight(k) * cyl.features[j].weight(k) * grid.width(k))
                .sum();
        }
    }
    g
}

/// `D_θ[a_r(A_{r,t} ω)]` for `θ` in cell `theta` and the grid node `r` in `[s, t)`.
pub fn transform_sensitivity(a: &DriftCoefficient, tr: &PathTransform, jumps: &JumpSet, theta: usize, r: usize) -> Result<f64> {
    if r < tr.s || r >= tr.t {
        return Err(Error::InvalidInput(format!("node {r} outside [{}, {})", tr.s, tr.t)));
    }
    let sens = Sensitivity::compute(a, tr, jumps)?;
    Ok(sens.value(a, r + 1, theta))
}

/// Central difference of `a_{r}(A_{r,t} ω)` along the Cameron–Martin direction of cell `theta`.
pub fn sensitivity_by_bump(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize, theta: usize, r: usize, h: f64, opts: &SolverOptions) -> Result<f64> {
    let dt = path.grid().width(theta);
    let x = path.increment(theta);
    let up = solve_backward(a, &path.with_increment(theta, x + h * dt), jumps, s, t, opts)?;
    let down = solve_backward(a, &path.with_increment(theta, x - h * dt), jumps, s, t, opts)?;
    Ok((up.drift_at(r + 1) - down.drift_at(r + 1)) / (2.0 * h * dt))
}
