//! Monte Carlo checks of the weak-solution property and of the path
//! regularity estimates.
//!
//! The duality test compares, on common paths,
//!
//! `lhs = Σ_k a_k(ω) X_{k-1} d_k G Δ_k`
//!
//! `rhs = G · (X_t − X_0 − Σ_k b_k X_{k-1} Δ_k − [Σ_i ψ(y_i) c(τ_i) X_{τ_i-} − Ψ(ε) Σ_k c_k X_{k-1} Δ_k])`,
//!
//! where every coefficient is evaluated on the untransformed path.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::Cylinder;
use crate::girsanov::{density_l, Engine};
use crate::grid::{TimeGrid, WienerPath};
use crate::levy_space::{LevyModel, SamplePath};
use crate::mc::{self, Comparison, MeanSe, PathSource};
use crate::orbit::TerminalOrbit;
use crate::solution::{Anchor, CoefficientSet, PathState, Solver};
use crate::transform::{gram_matrix, solve_backward, DriftCoefficient, Sensitivity, SolverOptions};

/// z-score threshold of the statistical checks.
pub const Z_LIMIT: f64 = 3.0;

/// A bounded test functional `G`.
pub type TestFunctional = (String, Cylinder);

#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub functional: String,
    pub node: usize,
    pub time: f64,
    pub eps: f64,
    pub m: usize,
    pub seed: u64,
    pub comparison: Comparison,
    /// Whether the estimate comes from the 4N re-run.
    pub rerun: bool,
}

impl DualityReport {
    pub fn z_score(&self) -> f64 {
        self.comparison.z_score()
    }
    pub fn passed(&self) -> bool {
        self.z_score() < Z_LIMIT
    }
    pub fn residual(&self) -> f64 {
        self.comparison.lhs.mean - self.comparison.rhs.mean
    }
}

/// Per-path pieces of the duality identity at one truncation level.
struct PathTerms {
    /// `Σ_k a_k X_{k-1} d_k G Δ_k` for each `G`.
    lhs: Vec<f64>,
    /// `G (X_t − X_0 − drift − Ñ-part)` for each `G`.
    rhs: Vec<f64>,
}

/// Anchors and values of `X^ε` at the nodes `0..=n` of one path.
struct PathSolution<'s, 'p> {
    solver: &'s Solver<'s>,
    st: PathState<'p>,
    anchors: Vec<Anchor>,
    /// `c(τ_i, ω)` and `c_k(ω) = c(t_{k-1}, ω)`.
    c_jump: Vec<f64>,
    c_cell: Vec<f64>,
    a_cell: Vec<f64>,
    b_cell: Vec<f64>,
    x0: f64,
}

impl<'s, 'p> PathSolution<'s, 'p> {
    fn new(solver: &'s Solver<'s>, path: &'p SamplePath, n: usize) -> Result<Self> {
        let st = solver.prepare(path)?;
        let anchors = (0..=n).map(|k| solver.anchor(&st, k)).collect::<Result<Vec<_>>>()?;
        let c = solver.coeffs;
        let (w, jumps) = (&path.wiener, &path.jumps);
        let grid = path.grid();
        let features = |cyl: &Cylinder| -> Vec<f64> { cyl.features.iter().map(|f| f.value(w)).collect() };
        let cells = |cyl: &Cylinder| -> Vec<f64> {
            let z = features(cyl);
            (1..=n).map(|k| cyl.eval(grid.node(k - 1), &z, jumps)).collect()
        };
        let zc = features(&c.v.factor);
        let c_jump = jumps.jumps().iter().map(|j| c.v.factor.eval(j.time, &zc, jumps)).collect();
        let c_cell = cells(&c.v.factor);
        let a_cell = cells(&c.a.cyl);
        let b_cell = cells(&c.b);
        let x0 = c.x0.eval(0.0, &features(&c.x0), jumps);
        Ok(Self { solver, st, anchors, c_jump, c_cell, a_cell, b_cell, x0 })
    }

    fn n(&self) -> usize {
        self.anchors.len() - 1
    }

    /// `X^ε` at nodes `0..=n`.
    fn values(&self, eps: f64) -> Result<Vec<f64>> {
        self.anchors.iter().map(|a| Ok(self.solver.solution_at(&self.st, a, eps)?.value)).collect()
    }

    /// `X^ε_{τ_i-}` for the jumps with `τ_i <= t_n` (0 for the others).
    fn before_jumps(&self, eps: f64) -> Result<Vec<f64>> {
        let t = self.st.path.grid().node(self.n());
        let jumps = self.st.path.jumps.jumps();
        (0..jumps.len())
            .map(|i| {
                if jumps[i].time > t {
                    return Ok(0.0);
                }
                let anchor = &self.anchors[self.st.snapped[i]];
                Ok(self.solver.assemble(&self.st, anchor, eps, |j| j < i)?.value)
            })
            .collect()
    }

    /// `∫∫_{lo < |y| <= hi} v X_{s-} dÑ` on the grid with the given `X`; `hi = ∞` allowed.
    fn compensated_integral(&self, x: &[f64], x_before: &[f64], lo: f64, hi: f64) -> Result<f64> {
        let t = self.st.path.grid().node(self.n());
        let jumps = self.st.path.jumps.jumps();
        let mut sum = 0.0;
        for (i, j) in jumps.iter().enumerate() {
            let a = j.size.abs();
            if j.time <= t && a > lo && a <= hi {
                sum += self.st.psi[i] * self.c_jump[i] * x_before[i];
            }
        }
        let mass = self.solver.jump_mass(lo)? - if hi.is_finite() { self.solver.jump_mass(hi)? } else { 0.0 };
        let grid = self.st.path.grid();
        let comp: f64 = (1..=self.n()).map(|k| self.c_cell[k - 1] * x[k - 1] * grid.width(k)).sum();
        Ok(sum - mass * comp)
    }

    fn terms(&self, eps: f64, gs: &[TestFunctional]) -> Result<PathTerms> {
        let x = self.values(eps)?;
        let before = self.before_jumps(eps)?;
        let n = self.n();
        let grid = self.st.path.grid();
        let drift: f64 = (1..=n).map(|k| self.b_cell[k - 1] * x[k - 1] * grid.width(k)).sum();
        let jump = self.compensated_integral(&x, &before, eps, f64::INFINITY)?;
        let core = x[n] - self.x0 - drift - jump;
        let (w, jumps) = (&self.st.path.wiener, &self.st.path.jumps);
        let mut lhs = Vec::with_capacity(gs.len());
        let mut rhs = Vec::with_capacity(gs.len());
        for (_, g) in gs {
            let z: Vec<f64> = g.features.iter().map(|f| f.value(w)).collect();
            let mut grad = vec![0.0; z.len()];
            let gv = g.eval_grad(g.eval_time, &z, jumps, &mut grad);
            let mut l = 0.0;
            for k in 1..=n {
                let dg: f64 = grad.iter().zip(&g.features).map(|(gr, f)| gr * f.weight(k)).sum();
                l += self.a_cell[k - 1] * x[k - 1] * dg * grid.width(k);
            }
            lhs.push(l);
            rhs.push(gv * core);
        }
        Ok(PathTerms { lhs, rhs })
    }
}

fn collect_reports(terms: &[PathTerms], gs: &[TestFunctional], node: usize, eps: f64, source: &PathSource, rerun: bool) -> Vec<DualityReport> {
    let grid = &source.grid;
    gs.iter()
        .enumerate()
        .map(|(c, (name, _))| {
            let lhs: Vec<f64> = terms.iter().map(|t| t.lhs[c]).collect();
            let rhs: Vec<f64> = terms.iter().map(|t| t.rhs[c]).collect();
            DualityReport {
                functional: name.clone(),
                node,
                time: grid.node(node),
                eps,
                m: grid.steps(),
                seed: source.seed,
                comparison: Comparison::new(&lhs, &rhs),
                rerun,
            }
        })
        .collect()
}

fn duality_terms(solver: &Solver, source: &PathSource, gs: &[TestFunctional], node: usize, eps: f64, n: usize) -> Result<Vec<PathTerms>> {
    mc::try_map_paths(n, |i| {
        let path = source.path(i as u64);
        PathSolution::new(solver, &path, node)?.terms(eps, gs)
    })
}

/// Both sides of the duality identity for `X^ε` (`eps = 0`: the full solution) and each `G`.
///
/// A functional whose z-score reaches [`Z_LIMIT`] is re-estimated once on `4n` paths.
pub fn duality_residual(solver: &Solver, source: &PathSource, gs: &[TestFunctional], node: usize, eps: f64, n: usize) -> Result<Vec<DualityReport>> {
    if gs.is_empty() {
        return Ok(vec![]);
    }
    let terms = duality_terms(solver, source, gs, node, eps, n)?;
    let mut reports = collect_reports(&terms, gs, node, eps, source, false);
    let failing: Vec<usize> = (0..gs.len()).filter(|&c| !reports[c].passed()).collect();
    if !failing.is_empty() {
        let subset: Vec<TestFunctional> = failing.iter().map(|&c| gs[c].clone()).collect();
        let more = duality_terms(solver, source, &subset, node, eps, 4 * n)?;
        for (r, &c) in collect_reports(&more, &subset, node, eps, source, true).into_iter().zip(&failing) {
            reports[c] = r;
        }
    }
    Ok(reports)
}

/// `I₁ε = E|∫∫_{0<|y|<=ε} v X_{s-} dÑ|` and `I₂ε = E|∫∫_{|y|>ε} v (X^ε_{s-} − X_{s-}) dÑ|`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Decomposition {
    pub eps: f64,
    pub i1: MeanSe,
    pub i2: MeanSe,
}

#[derive(Clone, Debug, Serialize)]
pub struct FullDualityReport {
    pub duality: Vec<DualityReport>,
    pub decomposition: Vec<Decomposition>,
}

/// Duality for the full solution together with the small-jump decomposition at each `ε`.
pub fn full_duality_residual(solver: &Solver, source: &PathSource, gs: &[TestFunctional], node: usize, n: usize, eps_list: &[f64]) -> Result<FullDualityReport> {
    let duality = duality_residual(solver, source, gs, node, 0.0, n)?;
    let per_path: Vec<Vec<(f64, f64)>> = mc::try_map_paths(n, |i| -> Result<Vec<(f64, f64)>> {
        let path = source.path(i as u64);
        let ps = PathSolution::new(solver, &path, node)?;
        let x = ps.values(0.0)?;
        let xb = ps.before_jumps(0.0)?;
        eps_list
            .iter()
            .map(|&eps| {
                let i1 = ps.compensated_integral(&x, &xb, 0.0, eps)?;
                let xe = ps.values(eps)?;
                let xeb = ps.before_jumps(eps)?;
                let dx: Vec<f64> = xe.iter().zip(&x).map(|(a, b)| a - b).collect();
                let dxb: Vec<f64> = xeb.iter().zip(&xb).map(|(a, b)| a - b).collect();
                let i2 = ps.compensated_integral(&dx, &dxb, eps, f64::INFINITY)?;
                Ok((i1.abs(), i2.abs()))
            })
            .collect()
    })?;
    let decomposition = eps_list
        .iter()
        .enumerate()
        .map(|(c, &eps)| Decomposition {
            eps,
            i1: MeanSe::of_iter(per_path.iter().map(|r| r[c].0)),
            i2: MeanSe::of_iter(per_path.iter().map(|r| r[c].1)),
        })
        .collect();
    Ok(FullDualityReport { duality, decomposition })
}

/// One level of the grid-refinement study.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RefinementRow {
    pub m: usize,
    /// `E[lhs − rhs]` at this level.
    pub residual: MeanSe,
    /// `E[(lhs − rhs)_m − (lhs − rhs)_{2m}]` on coupled paths; absent at the finest level.
    pub step: Option<MeanSe>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RefinementReport {
    pub functional: String,
    pub rows: Vec<RefinementRow>,
    /// Log-log slope of `|step|` against `Δ`.
    pub slope: f64,
}

impl RefinementReport {
    /// The coarsest step is distinguishable from 0 at `z` standard errors.
    pub fn bias_resolved(&self, z: f64) -> bool {
        self.rows.first().and_then(|r| r.step).is_some_and(|s| s.mean.abs() >= z * s.se)
    }

    /// A resolved bias must decay at `slope >= slope_min`; otherwise every level's residual must be
    /// consistent with 0.
    pub fn passed(&self, slope_min: f64, z: f64) -> bool {
        if self.bias_resolved(z) {
            self.slope >= slope_min
        } else {
            self.rows.iter().all(|r| r.residual.mean.abs() < z * r.residual.se)
        }
    }
}

/// Duality residuals on coupled paths over the grids `finest / 2^j`.
///
/// Paths are sampled on the finest grid and coarsened, and the coefficient set is rebuilt
/// on each grid by `build`. The bias `R(m)` is `O(Δ)`, so `R(m) − R(2m)` decays at the
/// same rate with far less noise than `R(m)` itself.
pub fn duality_refinement(
    build: &(dyn Fn(&Arc<TimeGrid>) -> Result<(CoefficientSet, Vec<TestFunctional>)> + Sync),
    model: Option<&Arc<LevyModel>>,
    source: &PathSource,
    levels: &[usize],
    eps: f64,
    n: usize,
    opts: SolverOptions,
) -> Result<Vec<RefinementReport>> {
    let finest = *levels.iter().max().ok_or_else(|| Error::InvalidInput("no refinement levels".into()))?;
    if source.grid.steps() != finest || !source.grid.is_uniform() {
        return Err(Error::InvalidInput("the path source must use the finest uniform grid".into()));
    }
    let horizon = source.grid.horizon();
    let mut grids = Vec::new();
    let mut sets = Vec::new();
    for &m in levels {
        if finest % m != 0 {
            return Err(Error::InvalidInput(format!("level {m} does not divide {finest}")));
        }
        let g = Arc::new(TimeGrid::uniform(horizon, m)?);
        sets.push(build(&g)?);
        grids.push(g);
    }
    let solvers = sets
        .iter()
        .map(|(c, _)| Solver::new(c, model.map(|m| m.as_ref()), opts))
        .collect::<Result<Vec<_>>>()?;
    let n_g = sets[0].1.len();
    // diffs[path][level][functional]
    let diffs: Vec<Vec<Vec<f64>>> = mc::try_map_paths(n, |i| -> Result<Vec<Vec<f64>>> {
        let fine = source.path(i as u64);
        let mut out = Vec::with_capacity(levels.len());
        for ((g, (_, gs)), solver) in grids.iter().zip(&sets).zip(&solvers) {
            let w = if g.steps() == finest { fine.wiener.clone() } else { fine.wiener.coarsen(g.clone())? };
            let path = SamplePath { wiener: w, jumps: fine.jumps.clone() };
            let t = PathSolution::new(solver, &path, g.steps())?.terms(eps, gs)?;
            out.push(t.lhs.iter().zip(&t.rhs).map(|(l, r)| l - r).collect());
        }
        Ok(out)
    })?;
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by_key(|&l| levels[l]);
    let mut reports = Vec::with_capacity(n_g);
    for c in 0..n_g {
        let mut rows = Vec::new();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for (pos, &l) in order.iter().enumerate() {
            let residual = MeanSe::of_iter(diffs.iter().map(|d| d[l][c]));
            let step = order.get(pos + 1).map(|&next| MeanSe::of_iter(diffs.iter().map(|d| d[l][c] - d[next][c])));
            if let Some(s) = step {
                xs.push(horizon / levels[l] as f64);
                ys.push(s.mean.abs());
            }
            rows.push(RefinementRow { m: levels[l], residual, step });
        }
        let slope = if xs.len() >= 2 { mc::loglog_slope(&xs, &ys) } else { f64::NAN };
        reports.push(RefinementReport { functional: sets[0].1[c].0.clone(), rows, slope });
    }
    Ok(reports)
}

/// `E|δ(a(A_{·,t}) 1_{[0,t]}) − δ(a(A_{·,s}) 1_{[0,s]})|^{2p}` for one `(s, t)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentRow {
    pub s: f64,
    pub t: f64,
    pub moment: MeanSe,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub p: f64,
    pub rows: Vec<MomentRow>,
    pub slope: f64,
}

impl ContinuityReport {
    /// The fitted slope is at least `p − 1 − slack`; trivially true when every moment is 0.
    pub fn passed(&self, slack: f64) -> bool {
        self.rows.iter().all(|r| r.moment.mean == 0.0) || self.slope >= self.p - 1.0 - slack
    }
}

fn skorohod_window(a: &DriftCoefficient, orbit: Option<&TerminalOrbit>, w: &WienerPath, t: usize, opts: &SolverOptions) -> Result<f64> {
    let jumps = crate::levy_space::JumpSet::empty();
    match orbit {
        Some(o) => Ok(o.density_l(0, t).skorohod()),
        None => Ok(density_l(a, w, &jumps, 0, t, opts)?.skorohod),
    }
}

/// Increment moments of `t ↦ ∫_0^t a_r(A_{r,t}) δW_r` for the node pairs `(s, t)`.
pub fn continuity_diagnostic(a: &DriftCoefficient, pairs: &[(usize, usize)], p: f64, source: &PathSource, n: usize, opts: &SolverOptions) -> Result<ContinuityReport> {
    if !(p > 2.0) {
        return Err(Error::InvalidInput("the moment order needs p > 2".into()));
    }
    let grid = &source.grid;
    let use_orbit = Engine::Auto.use_orbit(a);
    let per_path: Vec<Vec<f64>> = mc::try_map_paths(n, |i| -> Result<Vec<f64>> {
        let path = source.path(i as u64);
        let w = &path.wiener;
        let orbit = if use_orbit { Some(TerminalOrbit::new(a, w, &path.jumps, opts.tol, opts.max_iter)?) } else { None };
        pairs
            .iter()
            .map(|&(s, t)| {
                let d = skorohod_window(a, orbit.as_ref(), w, t, opts)? - skorohod_window(a, orbit.as_ref(), w, s, opts)?;
                Ok(d.abs().powf(2.0 * p))
            })
            .collect()
    })?;
    let rows: Vec<MomentRow> = pairs
        .iter()
        .enumerate()
        .map(|(c, &(s, t))| MomentRow { s: grid.node(s), t: grid.node(t), moment: MeanSe::of_iter(per_path.iter().map(|r| r[c])) })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.t - r.s).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.moment.mean).collect();
    let slope = if ys.iter().all(|&y| y > 0.0) { mc::loglog_slope(&xs, &ys) } else { f64::NAN };
    Ok(ContinuityReport { p, rows, slope })
}

/// Both sides of the four sensitivity bounds on one path.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct AuxBounds {
    /// Largest `lhs / rhs` over the cells of (a) and (c).
    pub worst_a: f64,
    pub worst_c: f64,
    pub b_lhs: f64,
    pub b_rhs: f64,
    pub d_lhs: f64,
    pub d_rhs: f64,
    pub violations: usize,
}

/// Relative slack granted to round-off in the bound checks.
pub const BOUND_SLACK: f64 = 1e-9;

fn ratio(lhs: f64, rhs: f64) -> f64 {
    if lhs == 0.0 {
        0.0
    } else if rhs == 0.0 {
        f64::INFINITY
    } else {
        lhs / rhs
    }
}

/// The bounds on `D_θ(a_r(A_{r,s}))` and on `(D_θ a_r)(A_{r,t}) − (D_θ a_r)(A_{r,s})` for `r <= s <= t`.
pub fn aux_bounds_check(a: &DriftCoefficient, path: &WienerPath, jumps: &crate::levy_space::JumpSet, s: usize, t: usize, opts: &SolverOptions) -> Result<AuxBounds> {
    if s > t || t > path.grid().steps() {
        return Err(Error::InvalidInput("need s <= t inside the grid".into()));
    }
    let grid = path.grid();
    let cyl = &a.cyl;
    let p = cyl.arity();
    let (Some(c1), Some(c2)) = (a.c1, a.c2) else {
        return Err(Error::InvalidInput("the drift has no declared derivative bounds".into()));
    };
    let growth = 2.0 * (2.0 * c1).exp();
    let sup_int = a.sup_square_integral(s, t).unwrap_or(f64::INFINITY);
    let mut out = AuxBounds { b_rhs: c1 * growth, d_rhs: growth * c2 * sup_int, ..Default::default() };
    if p == 0 || cyl.is_deterministic() {
        return Ok(out);
    }
    let tr_s = solve_backward(a, path, jumps, 0, s, opts)?;
    let sens = Sensitivity::compute(a, &tr_s, jumps)?;
    let tr_t = solve_backward(a, path, jumps, 0, t, opts)?;
    let zs = tr_s.features_at_nodes(cyl);
    let zt = tr_t.features_at_nodes(cyl);
    let gram = gram_matrix(cyl);
    let (mut gs, mut gt) = (vec![0.0; p], vec![0.0; p]);
    for k in 1..=s {
        let dt = grid.width(k);
        let bounds = &a.cell_bounds[k - 1];
        let lhs_a = sens.l2_norm_sq(a, k);
        let rhs_a = growth * bounds.grad.map_or(f64::INFINITY, |g| g * g);
        out.worst_a = out.worst_a.max(ratio(lhs_a, rhs_a));
        out.b_lhs += lhs_a * dt;

        let time = a.time_of(k);
        cyl.eval_grad(time, &zs[k - 1], jumps, &mut gs);
        cyl.eval_grad(time, &zt[k - 1], jumps, &mut gt);
        let diff: Vec<f64> = gt.iter().zip(&gs).map(|(x, y)| x - y).collect();
        let mut lhs_c = 0.0;
        for i in 0..p {
            for j in 0..p {
                lhs_c += diff[i] * gram[i * p + j] * diff[j];
            }
        }
        let rhs_c = bounds.hess.map_or(f64::INFINITY, |h| h * h) * growth * sup_int;
        out.worst_c = out.worst_c.max(ratio(lhs_c, rhs_c));
        out.d_lhs += lhs_c * dt;
    }
    let tol = 1.0 + BOUND_SLACK;
    out.violations = usize::from(out.worst_a > tol)
        + usize::from(out.worst_c > tol)
        + usize::from(out.b_lhs > out.b_rhs * tol)
        + usize::from(out.d_lhs > out.d_rhs * tol);
    Ok(out)
}

pub fn write_duality_rows<W: Write>(out: W, rows: &[(String, DualityReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "functional", "t", "eps", "lhs", "rhs", "se_lhs", "se_rhs", "pooled_se", "z", "N", "m", "seed", "rerun"])?;
    for (scenario, r) in rows {
        let c = &r.comparison;
        w.write_record([
            scenario.clone(),
            r.functional.clone(),
            format!("{}", r.time),
            format!("{}", r.eps),
            format!("{:.12e}", c.lhs.mean),
            format!("{:.12e}", c.rhs.mean),
            format!("{:.6e}", c.lhs.se),
            format!("{:.6e}", c.rhs.se),
            format!("{:.6e}", c.pooled_se()),
            format!("{:.4}", c.z_score()),
            c.lhs.n.to_string(),
            r.m.to_string(),
            r.seed.to_string(),
            r.rerun.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_refinement<W: Write>(out: W, rows: &[(String, RefinementReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scenario", "functional", "m", "residual", "se_residual", "step", "se_step", "slope", "N"])?;
    for (scenario, r) in rows {
        for row in &r.rows {
            let (step, se) = row.step.map_or((String::new(), String::new()), |s| (format!("{:.6e}", s.mean), format!("{:.6e}", s.se)));
            w.write_record([
                scenario.clone(),
                r.functional.clone(),
                row.m.to_string(),
                format!("{:.6e}", row.residual.mean),
                format!("{:.6e}", row.residual.se),
                step,
                se,
                format!("{:.4}", r.slope),
                row.residual.n.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_decomposition<W: Write>(out: W, rows: &[Decomposition]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["eps", "i1", "se_i1", "i2", "se_i2", "N"])?;
    for r in rows {
        w.write_record([
            format!("{}", r.eps),
            format!("{:.12e}", r.i1.mean),
            format!("{:.6e}", r.i1.se),
            format!("{:.12e}", r.i2.mean),
            format!("{:.6e}", r.i2.se),
            r.i1.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
