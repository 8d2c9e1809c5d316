//! Explicit solutions of the linear equation
//!
//! `X_t = X_0 + ∫ b_s X_s ds + ∫ a_s X_s δW_s + ∫∫ v_{s-}(y) X_{s-} dÑ(s, y)`
//!
//! with jump coefficient `v_{s-}(y, ω) = ψ(y) c(s, ω)`. On the grid
//!
//! `X_t^ε = X_0(A_{0,t}) exp{Σ_k b_k(A_{k-1,t}) Δ_k} L_{0,t}
//!          Π_{τ_j <= t, |y_j| > ε} [1 + ψ(y_j) c(τ_j, A_{n_j,t})]
//!          exp{−Ψ(ε) Σ_k c_k(A_{k-1,t}) Δ_k}`,
//!
//! where `Ψ(ε) = ∫_{|y|>ε} ψ dν` and `n_j` is the grid node nearest to `τ_j`.
//! `ε = 0` is the full solution: every sampled jump and the full compensator.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::Cylinder;
use crate::girsanov::{density_l_terms, DensityRecord, Engine};
use crate::grid::{TimeGrid, WienerPath};
use crate::levy_space::{BoundFunction, JumpSet, LevyModel, SamplePath};
use crate::quadrature::Integral;
use crate::mc::{self, MeanSe, PathSource};
use crate::orbit::{orbit_applies, TerminalOrbit};
use crate::transform::{solve_backward, DriftCoefficient, Sensitivity, SolverOptions};

/// The `y`-profile `ψ` of a separable jump coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SizeProfile {
    Zero,
    Constant { value: f64 },
    /// `value · 1_{|y| > threshold}`.
    Indicator { value: f64, threshold: f64 },
    /// `scale · g(y)` with the model's dominating function.
    Bound { scale: f64 },
    /// `coef · y`.
    Linear { coef: f64 },
}

impl SizeProfile {
    pub fn eval(&self, y: f64, g: &BoundFunction) -> f64 {
        match *self {
            SizeProfile::Zero => 0.0,
            SizeProfile::Constant { value } => value,
            SizeProfile::Indicator { value, threshold } => {
                if y.abs() > threshold {
                    value
                } else {
                    0.0
                }
            }
            SizeProfile::Bound { scale } => scale * g.eval(y),
            SizeProfile::Linear { coef } => coef * y,
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            SizeProfile::Zero => true,
            SizeProfile::Constant { value } | SizeProfile::Indicator { value, .. } => value == 0.0,
            SizeProfile::Bound { scale } => scale == 0.0,
            SizeProfile::Linear { coef } => coef == 0.0,
        }
    }
}

/// `v_{s-}(y, ω) = ψ(y) c(s, ω)`.
#[derive(Clone, Debug)]
pub struct JumpCoefficient {
    pub size: SizeProfile,
    pub factor: Cylinder,
    /// The dominating function `g`; also the profile used by [`SizeProfile::Bound`].
    pub bound: BoundFunction,
}

impl JumpCoefficient {
    pub fn zero(grid: Arc<TimeGrid>) -> Self {
        Self { size: SizeProfile::Zero, factor: Cylinder::constant(grid, 0.0), bound: BoundFunction::Zero }
    }

    #[inline]
    pub fn psi(&self, y: f64) -> f64 {
        self.size.eval(y, &self.bound)
    }

    pub fn is_zero(&self) -> bool {
        self.size.is_zero() || (self.factor.is_deterministic() && self.factor.profile.coef == 0.0)
    }
}

/// Hypotheses the caller declares for a coefficient set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypotheses {
    #[serde(default)]
    pub h1: bool,
    #[serde(default)]
    pub h2: bool,
    #[serde(default)]
    pub h3: bool,
    #[serde(default)]
    pub h4: bool,
}

#[derive(Clone, Debug)]
pub struct CoefficientSet {
    pub x0: Cylinder,
    pub b: Cylinder,
    pub a: DriftCoefficient,
    pub v: JumpCoefficient,
    pub hypotheses: Hypotheses,
}

impl CoefficientSet {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.a.cyl.grid()
    }

    /// Every coefficient is deterministic, so the solution is a Doléans-Dade exponential.
    pub fn is_adapted_constant(&self) -> bool {
        self.x0.is_deterministic() && self.b.is_deterministic() && self.a.cyl.is_deterministic() && self.v.factor.is_deterministic()
    }

    fn orbit_ready(&self) -> bool {
        orbit_applies(&self.a.cyl) && self.x0.is_terminal() && self.b.is_terminal() && self.v.factor.is_terminal()
    }

    /// `|ψ(y)| sup|c| <= g(y)` at the given sizes, with `sup|c|` over the grid nodes.
    pub fn domination_by_bounds(&self, sizes: &[f64]) -> Option<usize> {
        let grid = self.grid();
        let sup_c = grid.nodes().iter().map(|&t| self.v.factor.bounds_at(t).sup).try_fold(0.0f64, |m, s| s.map(|s| m.max(s)))?;
        Some(sizes.iter().filter(|&&y| self.v.psi(y).abs() * sup_c > self.v.bound.eval(y) * (1.0 + 1e-12)).count())
    }

    /// Number of sampled jumps with `|v_{τ-}(y, ω)| > g(y)`.
    pub fn domination_violations(&self, path: &SamplePath) -> usize {
        let p = &path.wiener;
        path.jumps
            .jumps()
            .iter()
            .filter(|j| {
                let v = self.v.psi(j.size) * self.v.factor.value_on(j.time, p, &path.jumps);
                v.abs() > self.v.bound.eval(j.size) * (1.0 + 1e-12)
            })
            .count()
    }
}

/// The value of a solution at a grid node and the factors it is built from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SolutionSample {
    pub time: f64,
    pub node: usize,
    /// Truncation level; 0 for the full solution.
    pub eps: f64,
    pub value: f64,
    /// `X_0(A_{0,t})`.
    pub initial: f64,
    /// `Σ_k b_k(A_{k-1,t}) Δ_k`.
    pub drift: f64,
    /// `L_{0,t}`.
    pub density: f64,
    pub jump_product: f64,
    /// `Ψ(ε) Σ_k c_k(A_{k-1,t}) Δ_k`.
    pub compensator: f64,
    pub jumps_used: usize,
    /// `Σ_j ψ(y_j) c(τ_j, A_{n_j,t})` over the jumps used.
    pub jump_sum: f64,
}

impl SolutionSample {
    fn compose(initial: f64, drift: f64, density: f64, jump_product: f64, compensator: f64) -> f64 {
        initial * drift.exp() * density * jump_product * (-compensator).exp()
    }

    /// The value rebuilt from the stored factors.
    pub fn recomposed(&self) -> f64 {
        Self::compose(self.initial, self.drift, self.density, self.jump_product, self.compensator)
    }

    /// `X_0(A) e^{∫b} L exp{Σ v − comp} Π (1 + v) e^{−v}`.
    pub fn compensated_form(&self, jump_values: &[f64]) -> f64 {
        let corr: f64 = jump_values.iter().map(|v| (1.0 + v) * (-v).exp()).product();
        self.initial * self.drift.exp() * self.density * (self.jump_sum - self.compensator).exp() * corr
    }
}

/// A full solution together with its compensated-measure representation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FullSolution {
    pub sample: SolutionSample,
    pub compensated: f64,
}

impl FullSolution {
    pub fn representation_gap(&self) -> f64 {
        rel_diff(self.sample.value, self.compensated)
    }
}

pub fn rel_diff(x: f64, y: f64) -> f64 {
    let scale = x.abs().max(y.abs());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).abs() / scale
    }
}

/// Everything about `A_{·,n}` the solution needs at anchor node `n`.
#[derive(Clone, Debug)]
pub struct Anchor {
    pub node: usize,
    pub initial: f64,
    pub drift: f64,
    pub density: DensityRecord,
    /// `Σ_{k<=n} c_k(A_{k-1,n}) Δ_k`.
    pub comp_unit: f64,
    /// `c(τ_j, A_{n_j,n})` for the jumps with `n_j <= n`, in time order.
    pub jump_factor: Vec<f64>,
}

enum PathEngine {
    Orbit { orbit: TerminalOrbit, b_cum: Option<Vec<f64>>, c_cum: Option<Vec<f64>> },
    Generic,
}

/// Per-path data shared by all anchors.
pub struct PathState<'p> {
    pub path: &'p SamplePath,
    engine: PathEngine,
    /// Snapped node `n_j` of each jump.
    pub snapped: Vec<usize>,
    /// `ψ(y_j)`.
    pub psi: Vec<f64>,
}

impl PathState<'_> {
    pub fn uses_orbit(&self) -> bool {
        matches!(self.engine, PathEngine::Orbit { .. })
    }
}

fn cumulative(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

/// Evaluates solutions for one coefficient set.
pub struct Solver<'a> {
    pub coeffs: &'a CoefficientSet,
    model: Option<&'a LevyModel>,
    pub opts: SolverOptions,
    pub engine: Engine,
    masses: Vec<(f64, f64)>,
}

impl<'a> Solver<'a> {
    /// Precomputes `Ψ(ε)` at 0 and at every retained `ε_n` of the model.
    pub fn new(coeffs: &'a CoefficientSet, model: Option<&'a LevyModel>, opts: SolverOptions) -> Result<Self> {
        let mut s = Self { coeffs, model, opts, engine: Engine::Auto, masses: Vec::new() };
        if let Some(m) = model {
            let mut levels = vec![0.0];
            levels.extend(m.layers.iter().map(|l| l.lower));
            for eps in levels {
                let mass = s.compute_mass(eps)?;
                s.masses.push((eps, mass));
            }
        }
        Ok(s)
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    fn compute_mass(&self, eps: f64) -> Result<f64> {
        if self.coeffs.v.size.is_zero() {
            return Ok(0.0);
        }
        let model = self
            .model
            .ok_or_else(|| Error::InvalidInput("a nonzero jump coefficient needs a Lévy model".into()))?;
        match model.integrate_measure(&|y| self.coeffs.v.psi(y), eps)? {
            Integral::Finite(x) => Ok(x),
            Integral::Divergent => Err(Error::QuadratureFailure(format!("ψ is not ν-integrable above {eps}"))),
        }
    }

    /// `Ψ(ε) = ∫_{|y|>ε} ψ dν`.
    pub fn jump_mass(&self, eps: f64) -> Result<f64> {
        match self.masses.iter().find(|(e, _)| *e == eps) {
            Some(&(_, m)) => Ok(m),
            None => self.compute_mass(eps),
        }
    }

    pub fn prepare<'p>(&self, path: &'p SamplePath) -> Result<PathState<'p>> {
        let c = self.coeffs;
        let grid = path.grid();
        let jumps = &path.jumps;
        let engine = if self.engine == Engine::Auto && c.orbit_ready() {
            let orbit = TerminalOrbit::new(&c.a, &path.wiener, jumps, self.opts.tol, self.opts.max_iter)?;
            let along = |cyl: &Cylinder| {
                cyl.is_time_homogeneous()
                    .then(|| cumulative(orbit.back[1..].iter().map(|&u| cyl.eval_scalar(0.0, u, jumps).0)))
            };
            let b_cum = along(&c.b);
            let c_cum = along(&c.v.factor);
            PathEngine::Orbit { orbit, b_cum, c_cum }
        } else {
            PathEngine::Generic
        };
        let snapped = jumps.jumps().iter().map(|j| grid.nearest_node(j.time)).collect();
        let psi = jumps.jumps().iter().map(|j| c.v.psi(j.size)).collect();
        Ok(PathState { path, engine, snapped, psi })
    }

    /// Transform data at anchor node `n`.
    pub fn anchor(&self, st: &PathState, n: usize) -> Result<Anchor> {
        let c = self.coeffs;
        let path = st.path;
        let grid = path.grid();
        let jumps = &path.jumps;
        let nj = st.snapped.partition_point(|&s| s <= n);
        match &st.engine {
            PathEngine::Orbit { orbit, b_cum, c_cum } => {
                let o = &orbit.back;
                let dt = orbit.dt;
                let initial = c.x0.eval_scalar(0.0, o[n], jumps).0;
                let along = |cyl: &Cylinder, cum: &Option<Vec<f64>>| match cum {
                    Some(cum) => dt * cum[n],
                    None => dt * (1..=n).map(|k| cyl.eval_scalar(grid.node(k - 1), o[n - k + 1], jumps).0).sum::<f64>(),
                };
                let drift = along(&c.b, b_cum);
                let comp_unit = along(&c.v.factor, c_cum);
                let density = DensityRecord::of_l(0, n, orbit.density_l(0, n));
                let jump_factor = (0..nj)
                    .map(|j| c.v.factor.eval_scalar(jumps.jumps()[j].time, o[n - st.snapped[j]], jumps).0)
                    .collect();
                Ok(Anchor { node: n, initial, drift, density, comp_unit, jump_factor })
            }
            PathEngine::Generic => {
                let w = &path.wiener;
                let tr = solve_backward(&c.a, w, jumps, 0, n, &self.opts)?;
                let sens = Sensitivity::compute(&c.a, &tr, jumps)?;
                let density = DensityRecord::of_l(0, n, density_l_terms(&c.a, &tr, &sens));
                let z0 = tr.features_at_nodes(&c.x0);
                let initial = c.x0.eval(0.0, &z0[0], jumps);
                let zb = tr.features_at_nodes(&c.b);
                let drift: f64 = (1..=n).map(|k| c.b.eval(grid.node(k - 1), &zb[k - 1], jumps) * grid.width(k)).sum();
                let zc = tr.features_at_nodes(&c.v.factor);
                let comp_unit: f64 = (1..=n).map(|k| c.v.factor.eval(grid.node(k - 1), &zc[k - 1], jumps) * grid.width(k)).sum();
                let jump_factor = (0..nj).map(|j| c.v.factor.eval(jumps.jumps()[j].time, &zc[st.snapped[j]], jumps)).collect();
                Ok(Anchor { node: n, initial, drift, density, comp_unit, jump_factor })
            }
        }
    }

    /// Assemble `X^ε` at the anchor from the jumps `j` with `include(j)` and `|y_j| > ε`.
    pub fn assemble(&self, st: &PathState, anchor: &Anchor, eps: f64, include: impl Fn(usize) -> bool) -> Result<SolutionSample> {
        let jumps = st.path.jumps.jumps();
        let mass = self.jump_mass(eps)?;
        let mut product = 1.0;
        let mut sum = 0.0;
        let mut used = 0;
        for (j, &cj) in anchor.jump_factor.iter().enumerate() {
            if !include(j) || jumps[j].size.abs() <= eps {
                continue;
            }
            let v = st.psi[j] * cj;
            if !(1.0 + v > 0.0) {
                return Err(Error::ProductDegenerate { time: jumps[j].time, factor: 1.0 + v });
            }
            product *= 1.0 + v;
            sum += v;
            used += 1;
        }
        let compensator = mass * anchor.comp_unit;
        let density = anchor.density.value;
        let value = SolutionSample::compose(anchor.initial, anchor.drift, density, product, compensator);
        Ok(SolutionSample {
            time: st.path.grid().node(anchor.node),
            node: anchor.node,
            eps,
            value,
            initial: anchor.initial,
            drift: anchor.drift,
            density,
            jump_product: product,
            compensator,
            jumps_used: used,
            jump_sum: sum,
        })
    }

    /// `X^ε` at node `n`: jumps with `τ_j <= t_n`.
    pub fn solution_at(&self, st: &PathState, anchor: &Anchor, eps: f64) -> Result<SolutionSample> {
        let t = st.path.grid().node(anchor.node);
        let jumps = st.path.jumps.jumps();
        self.assemble(st, anchor, eps, |j| jumps[j].time <= t)
    }

    /// `X^ε_{τ_i-}`: anchored at `n_i`, with the jumps before `τ_i`.
    pub fn before_jump(&self, st: &PathState, i: usize, eps: f64) -> Result<SolutionSample> {
        let anchor = self.anchor(st, st.snapped[i])?;
        self.assemble(st, &anchor, eps, |j| j < i)
    }

    pub fn eps_solution(&self, path: &SamplePath, n: usize, eps: f64) -> Result<SolutionSample> {
        if !(eps > 0.0) {
            return Err(Error::InvalidInput("ε must be positive; use full_solution for ε = 0".into()));
        }
        let st = self.prepare(path)?;
        let anchor = self.anchor(&st, n)?;
        self.solution_at(&st, &anchor, eps)
    }

    pub fn full_solution(&self, path: &SamplePath, n: usize) -> Result<FullSolution> {
        let st = self.prepare(path)?;
        let anchor = self.anchor(&st, n)?;
        self.full_at(&st, &anchor)
    }

    pub fn full_at(&self, st: &PathState, anchor: &Anchor) -> Result<FullSolution> {
        let sample = self.solution_at(st, anchor, 0.0)?;
        let t = sample.time;
        let jumps = st.path.jumps.jumps();
        let values: Vec<f64> = anchor
            .jump_factor
            .iter()
            .enumerate()
            .filter(|(j, _)| jumps[*j].time <= t)
            .map(|(j, c)| st.psi[j] * c)
            .collect();
        Ok(FullSolution { compensated: sample.compensated_form(&values), sample })
    }

    /// `C = ‖X_0‖_∞ exp(Σ_{k<=n} ‖b_k‖_∞ Δ_k + t_n ∫g dν)`; `None` if a bound is missing.
    pub fn dominating_constant(&self, n: usize) -> Result<Option<f64>> {
        let c = self.coeffs;
        let grid = c.grid();
        let Some(x0) = c.x0.bounds_at(0.0).sup else { return Ok(None) };
        let mut b = 0.0;
        for k in 1..=n {
            let Some(s) = c.b.bounds_at(grid.node(k - 1)).sup else { return Ok(None) };
            b += s * grid.width(k);
        }
        let int_g = match self.model {
            Some(m) => match m.integrate_measure(&|y| c.v.bound.eval(y).abs(), 0.0)? {
                Integral::Finite(x) => x,
                Integral::Divergent => return Ok(None),
            },
            None => 0.0,
        };
        Ok(Some(x0 * (b + grid.node(n) * int_g).exp()))
    }
}

/// `|X^ε_t| <= C L_{0,t} exp(Σ_{τ_j <= t} g(y_j))`; returns `(lhs, rhs)`.
pub fn dominating_bound(sample: &SolutionSample, constant: f64, jumps: &JumpSet, g: &BoundFunction) -> (f64, f64) {
    let jump_sum: f64 = jumps.jumps().iter().filter(|j| j.time <= sample.time).map(|j| g.eval(j.size)).sum();
    (sample.value.abs(), constant * sample.density * jump_sum.exp())
}

/// `Z_t = Z_0(A_{0,t}) exp{Σ h_k(A_{k-1,t}) Δ_k} L_{0,t}` at node `n`.
pub fn wiener_solution(z0: &Cylinder, h: &Cylinder, a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, n: usize, opts: &SolverOptions) -> Result<SolutionSample> {
    let grid = path.grid().clone();
    let coeffs = CoefficientSet {
        x0: z0.clone(),
        b: h.clone(),
        a: a.clone(),
        v: JumpCoefficient::zero(grid),
        hypotheses: Hypotheses::default(),
    };
    let solver = Solver::new(&coeffs, None, *opts)?;
    let sp = SamplePath { wiener: path.clone(), jumps: jumps.clone() };
    Ok(solver.full_solution(&sp, n)?.sample)
}

/// One row of `E|X_t^ε − X_t|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub mean_abs_error: f64,
    pub se: f64,
    pub n: usize,
}

/// `E|X^ε_t − X_t|` for each `ε` on common paths.
pub fn eps_convergence_table(solver: &Solver, source: &PathSource, node: usize, eps_list: &[f64], n: usize) -> Result<Vec<ConvergenceRow>> {
    let diffs: Vec<Vec<f64>> = mc::try_map_paths(n, |i| -> Result<Vec<f64>> {
        let path = source.path(i as u64);
        let st = solver.prepare(&path)?;
        let anchor = solver.anchor(&st, node)?;
        let full = solver.solution_at(&st, &anchor, 0.0)?.value;
        eps_list.iter().map(|&e| Ok((solver.solution_at(&st, &anchor, e)?.value - full).abs())).collect()
    })?;
    Ok(eps_list
        .iter()
        .enumerate()
        .map(|(c, &eps)| {
            let ms = MeanSe::of_iter(diffs.iter().map(|d| d[c]));
            ConvergenceRow { eps, mean_abs_error: ms.mean, se: ms.se, n: ms.n }
        })
        .collect())
}

pub fn write_convergence_table<W: Write>(out: W, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "mean_abs_error", "se", "N"])?;
    for r in rows {
        w.write_record([format!("{}", r.eps), format!("{:.12e}", r.mean_abs_error), format!("{:.12e}", r.se), r.n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Rows `(t, eps, value, factors…, seed)`.
pub fn write_samples<W: Write>(out: W, rows: &[(u64, SolutionSample)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "eps", "value", "initial", "drift", "density", "jump_product", "compensator", "jumps", "seed"])?;
    for (seed, s) in rows {
        w.write_record([
            format!("{}", s.time),
            format!("{}", s.eps),
            format!("{:.15e}", s.value),
            format!("{:.15e}", s.initial),
            format!("{:.15e}", s.drift),
            format!("{:.15e}", s.density),
            format!("{:.15e}", s.jump_product),
            format!("{:.15e}", s.compensator),
            s.jumps_used.to_string(),
            seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
