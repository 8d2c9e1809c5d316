//! Suite orchestration behind the `alevy` binary.
//!
//! Artifacts written to the output directory (only for suites that ran):
//!
//! | suite     | file                  | columns |
//! |-----------|-----------------------|---------|
//! | sample    | `layer_cdf.csv`       | layer, side, y, cdf |
//! | sample    | `jumps.csv`           | path, time, size, layer |
//! | transform | `transform_trace.csv` | iteration, defect |
//! | transform | `bounds.csv`          | path, compose_inverse, compose_flow, cm_lhs, cm_rhs, worst_a, worst_c, b_lhs, b_rhs, d_lhs, d_rhs, violations |
//! | girsanov  | `identity.csv`        | test, s, t, lhs, rhs, se_lhs, se_rhs, N, m, seed |
//! | solution  | `doleans_oracle.csv`  | path, t, value, closed_form, rel_err (deterministic coefficients only) |
//! | solution  | `samples.csv`         | t, eps, value, initial, drift, density, jump_product, compensator, jumps, seed |
//! | solution  | `convergence.csv`     | eps, mean_abs_error, se, N |
//! | verify    | `duality.csv`         | scenario, functional, t, eps, lhs, rhs, se_lhs, se_rhs, pooled_se, z, N, m, seed, rerun |
//! | verify    | `refinement.csv`      | scenario, functional, m, residual, se_residual, step, se_step, slope, N |
//! | verify    | `decomposition.csv`   | eps, i1, se_i1, i2, se_i2, N |
//! | verify    | `continuity.csv`      | s, t, moment, se, N |
//!
//! `summary.json` lists every check with its value, limit and verdict.
//!
//! Seeds: path `i` of suite `k` draws from `ChaCha8(seed ⊕ k·φ, stream i)`, with
//! `k = 1..5` for sample, transform, girsanov, solution, verify.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::GridFunctional;
use crate::girsanov::{cocycle_test, girsanov_identity_test, inverse_relation_residual, normalization_test, write_identity_rows, Engine};
use crate::levy_space::hypothesis_report;
use crate::quadrature::Integral;
use crate::mc::{self, MeanSe, PathSource};
use crate::scenario::{Built, Scenario, Suite};
use crate::solution::{dominating_bound, eps_convergence_table, rel_diff, write_convergence_table, write_samples, Solver};
use crate::transform::{compose_check, solve_backward, uniform_cm_bound_check};
use crate::verify::{aux_bounds_check, continuity_diagnostic, duality_refinement, duality_residual, full_duality_residual, write_decomposition, write_duality_rows, write_refinement, BOUND_SLACK};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, passed: value < limit }
    }
    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self { name: name.into(), value, limit, passed: value >= limit }
    }
    fn holds(name: impl Into<String>, passed: bool) -> Self {
        Self { name: name.into(), value: f64::from(u8::from(passed)), limit: 1.0, passed }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seconds: f64,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub paths: usize,
    pub steps: usize,
    pub workers: usize,
    pub suites: Vec<SuiteReport>,
}

impl RunSummary {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteReport::passed)
    }

    /// 0 when every suite passed, otherwise the code of the first failing suite.
    pub fn exit_code(&self) -> i32 {
        self.suites.iter().find(|s| !s.passed()).map_or(0, |s| s.suite.exit_code())
    }
}

struct Ctx<'a> {
    s: &'a Scenario,
    b: &'a Built,
    out: Option<&'a Path>,
}

impl Ctx<'_> {
    fn m(&self) -> usize {
        self.b.grid.steps()
    }

    fn source(&self, suite: u64) -> PathSource {
        PathSource::with_jumps(self.b.grid.clone(), self.b.model.clone(), self.s.eps_cut(), self.s.mc.seed, suite)
    }

    fn artifact(&self, name: &str) -> Result<Option<BufWriter<File>>> {
        match self.out {
            Some(dir) => Ok(Some(BufWriter::new(File::create(dir.join(name))?))),
            None => Ok(None),
        }
    }

    fn z(&self) -> f64 {
        self.s.tolerances.z_limit
    }
}

/// Run `suites` in order. Artifacts go to `out` when given; nothing is written when `suites` is empty.
pub fn run(s: &Scenario, suites: &[Suite], out: Option<&Path>) -> Result<RunSummary> {
    s.validate()?;
    let mut summary = RunSummary {
        scenario: s.name.clone(),
        seed: s.mc.seed,
        paths: s.mc.paths,
        steps: s.grid.steps,
        workers: rayon::current_num_threads(),
        suites: vec![],
    };
    if suites.is_empty() {
        return Ok(summary);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let b = s.build()?;
    let ctx = Ctx { s, b: &b, out };
    for &suite in suites {
        let start = Instant::now();
        let checks = match suite {
            Suite::Sample => sample_suite(&ctx)?,
            Suite::Transform => transform_suite(&ctx)?,
            Suite::Girsanov => girsanov_suite(&ctx)?,
            Suite::Solution => solution_suite(&ctx)?,
            Suite::Verify => verify_suite(&ctx)?,
        };
        summary.suites.push(SuiteReport { suite, seconds: start.elapsed().as_secs_f64(), checks });
    }
    if let Some(dir) = out {
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        fs::write(dir.join("summary.json"), text + "\n")?;
    }
    Ok(summary)
}

fn z_of(est: MeanSe, exact: f64) -> f64 {
    if est.se > 0.0 {
        (est.mean - exact).abs() / est.se
    } else if est.mean == exact {
        0.0
    } else {
        f64::INFINITY
    }
}

fn sample_suite(c: &Ctx) -> Result<Vec<Check>> {
    let model = &c.b.model;
    let n = c.s.mc.paths;
    let src = c.source(mc::suite::SAMPLE);
    let horizon = c.b.grid.horizon();
    let mut checks = Vec::new();

    let h = hypothesis_report(model)?;
    checks.push(Check::holds("g dominated: ∫g dν, ∫g² dν finite and g(0+) = 0", h.dominated));
    checks.push(Check::holds("∫(e^g − 1) dν finite", h.exp_integrable));

    let layers: Vec<_> = model.layers_above(c.s.eps_cut()).cloned().collect();
    let per_path: Vec<(Vec<usize>, f64)> = mc::map_paths(n, |i| {
        let p = src.path(i);
        let counts = layers.iter().map(|l| p.jumps.jumps().iter().filter(|j| j.layer == l.index).count()).collect();
        (counts, p.wiener.terminal())
    });
    for (c_idx, layer) in layers.iter().enumerate() {
        let est = MeanSe::of_iter(per_path.iter().map(|(counts, _)| counts[c_idx] as f64));
        checks.push(Check::below(format!("jump count z, layer {}", layer.index), z_of(est, layer.intensity * horizon), c.z()));
    }
    let w2 = MeanSe::of_iter(per_path.iter().map(|(_, w)| w * w));
    checks.push(Check::below("E[W_T²] = T z", z_of(w2, horizon), c.z()));

    if let Some(w) = c.artifact("layer_cdf.csv")? {
        model.write_cdf_tables(w)?;
    }
    if let Some(w) = c.artifact("jumps.csv")? {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["path", "time", "size", "layer"])?;
        for i in 0..n.min(20) as u64 {
            for j in src.path(i).jumps.jumps() {
                w.write_record([i.to_string(), format!("{:.12e}", j.time), format!("{:.12e}", j.size), j.layer.to_string()])?;
            }
        }
        w.flush()?;
    }
    Ok(checks)
}

fn transform_suite(c: &Ctx) -> Result<Vec<Check>> {
    let a = &c.b.coeffs.a;
    let opts = c.s.mc.solver;
    let m = c.m();
    let src = c.source(mc::suite::TRANSFORM);
    let n = c.s.verify.bound_paths;
    let rows = mc::try_map_paths(n, |i| -> Result<[f64; 11]> {
        let p = src.path(i);
        let d = compose_check(a, &p.wiener, &p.jumps, m, &opts)?;
        let (cm_lhs, cm_rhs) = uniform_cm_bound_check(a, &p.wiener, &p.jumps, 0, m / 2, m, &opts)?;
        let x = aux_bounds_check(a, &p.wiener, &p.jumps, m / 2, m, &opts)?;
        Ok([d.inverse, d.flow, cm_lhs, cm_rhs, x.worst_a, x.worst_c, x.b_lhs, x.b_rhs, x.d_lhs, x.d_rhs, x.violations as f64])
    })?;
    let max = |k: usize| rows.iter().map(|r| r[k]).fold(0.0, f64::max);
    let compose_limit = (10.0 * opts.tol).max(1e-12);
    let cm_violations = rows.iter().filter(|r| r[2] > r[3] * (1.0 + BOUND_SLACK)).count();
    let aux_violations: f64 = rows.iter().map(|r| r[10]).sum();
    let checks = vec![
        Check::below("compose inverse defect", max(0), compose_limit),
        Check::below("compose flow defect", max(1), compose_limit),
        Check::below("uniform Cameron–Martin bound violations", cm_violations as f64, 0.5),
        Check::below("sensitivity bound violations", aux_violations, 0.5),
    ];
    if let Some(w) = c.artifact("bounds.csv")? {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["path", "compose_inverse", "compose_flow", "cm_lhs", "cm_rhs", "worst_a", "worst_c", "b_lhs", "b_rhs", "d_lhs", "d_rhs", "violations"])?;
        for (i, r) in rows.iter().enumerate() {
            let mut rec = vec![i.to_string()];
            rec.extend(r.iter().map(|x| format!("{x:.6e}")));
            w.write_record(rec)?;
        }
        w.flush()?;
    }
    if let Some(w) = c.artifact("transform_trace.csv")? {
        let p = src.path(0);
        solve_backward(a, &p.wiener, &p.jumps, 0, m, &opts)?.write_trace(w)?;
    }
    Ok(checks)
}

fn girsanov_suite(c: &Ctx) -> Result<Vec<Check>> {
    let a = &c.b.coeffs.a;
    let opts = c.s.mc.solver;
    let m = c.m();
    let n = c.s.mc.paths;
    let src = c.source(mc::suite::GIRSANOV);
    let mut checks = Vec::new();
    let norm = normalization_test(a, 0, m, n, &src, &opts, Engine::Auto)?;
    checks.push(Check::below("E[L_{0,T}] = 1 z", z_of(norm, 1.0), c.z()));
    let mut rows = Vec::new();
    for (name, f) in &c.b.functionals {
        let r = girsanov_identity_test(a, f as &dyn GridFunctional, 0, m, n, &src, &opts, Engine::Auto)?;
        checks.push(Check::below(format!("E[F(A)L] = E[F] z, {name}"), r.first.z_score(), c.z()));
        checks.push(Check::below(format!("E[F(A)] = E[F 𝓛] z, {name}"), r.second.z_score(), c.z()));
        rows.push((name.clone(), r));
    }
    let probes = 20.min(c.s.verify.bound_paths) as u64;
    let (mut inv, mut coc) = (0.0f64, 0.0f64);
    for i in 0..probes {
        let p = src.path(i);
        inv = inv.max(inverse_relation_residual(a, &p.wiener, &p.jumps, 0, m, &opts)?);
        coc = coc.max(cocycle_test(a, &p.wiener, &p.jumps, m / 2, m, &opts)?);
    }
    checks.push(Check::below("inverse relation residual", inv, c.s.tolerances.pathwise_rel));
    checks.push(Check::below("cocycle residual", coc, c.s.tolerances.pathwise_rel));
    if let Some(w) = c.artifact("identity.csv")? {
        write_identity_rows(w, &rows)?;
    }
    Ok(checks)
}

fn solution_suite(c: &Ctx) -> Result<Vec<Check>> {
    let coeffs = &c.b.coeffs;
    let model = &c.b.model;
    let m = c.m();
    let solver = Solver::new(coeffs, Some(model), c.s.mc.solver)?;
    let src = c.source(mc::suite::SOLUTION);
    let tol = c.s.tolerances.oracle_rel;
    let n_exact = c.s.mc.paths.min(1000);
    let mut checks = Vec::new();

    let gaps = mc::try_map_paths(n_exact, |i| -> Result<f64> { Ok(solver.full_solution(&src.path(i), m)?.representation_gap()) })?;
    checks.push(Check::below("product vs compensated representation", gaps.iter().copied().fold(0.0, f64::max), tol));

    if coeffs.is_adapted_constant() {
        let nodes = [m / 4, m / 2, m];
        let jump_mass = match model.integrate_measure(&|y| coeffs.v.psi(y), 0.0)? {
            Integral::Finite(x) => x,
            Integral::Divergent => return Err(Error::InvalidInput("∫ψ dν diverges".into())),
        };
        let rows = mc::try_map_paths(n_exact, |i| -> Result<Vec<(f64, f64, f64)>> {
            let p = src.path(i);
            let (w, j) = (&p.wiener, &p.jumps);
            let konst = |cyl: &crate::functional::Cylinder, t: f64| cyl.value_on(t, w, j);
            nodes
                .iter()
                .map(|&k| {
                    let t = c.b.grid.node(k);
                    let (x0, b, a, cv) = (konst(&coeffs.x0, 0.0), konst(&coeffs.b, 0.0), konst(&coeffs.a.cyl, 0.0), konst(&coeffs.v.factor, 0.0));
                    let jumps: f64 = j.jumps().iter().filter(|x| x.time <= t).map(|x| 1.0 + coeffs.v.psi(x.size) * cv).product();
                    let exact = x0 * ((b - 0.5 * a * a) * t + a * w.value_at(k) - jump_mass * cv * t).exp() * jumps;
                    let got = solver.full_solution(&p, k)?.sample.value;
                    Ok((t, got, exact))
                })
                .collect()
        })?;
        let worst = rows.iter().flatten().map(|&(_, g, e)| rel_diff(g, e)).fold(0.0, f64::max);
        checks.push(Check::below("Doléans-Dade closed form", worst, tol));
        if let Some(w) = c.artifact("doleans_oracle.csv")? {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["path", "t", "value", "closed_form", "rel_err"])?;
            for (i, r) in rows.iter().enumerate() {
                for &(t, g, e) in r {
                    w.write_record([i.to_string(), format!("{t}"), format!("{g:.15e}"), format!("{e:.15e}"), format!("{:.3e}", rel_diff(g, e))])?;
                }
            }
            w.flush()?;
        }
    }

    if let Some(constant) = solver.dominating_constant(m)? {
        let bad = mc::try_map_paths(c.s.verify.bound_paths, |i| -> Result<usize> {
            let p = src.path(i);
            let x = solver.full_solution(&p, m)?.sample;
            let (lhs, rhs) = dominating_bound(&x, constant, &p.jumps, &coeffs.v.bound);
            Ok(usize::from(lhs > rhs * (1.0 + BOUND_SLACK)))
        })?;
        checks.push(Check::below("dominating bound violations", bad.iter().sum::<usize>() as f64, 0.5));
    }
    let bad_jumps: usize = (0..c.s.verify.bound_paths.min(200) as u64).map(|i| coeffs.domination_violations(&src.path(i))).sum();
    checks.push(Check::below("|v| <= g violations at sampled jumps", bad_jumps as f64, 0.5));

    let eps_list = &c.s.verify.convergence_eps;
    if !eps_list.is_empty() {
        let table = eps_convergence_table(&solver, &src, m, eps_list, c.s.mc.paths)?;
        let mut sorted = table.clone();
        sorted.sort_by(|x, y| y.eps.total_cmp(&x.eps));
        let worst_rise = sorted
            .windows(2)
            .map(|w| (w[1].mean_abs_error - w[0].mean_abs_error) / w[0].se.hypot(w[1].se).max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::below("E|X^ε − X| rise as ε decreases (se units)", worst_rise, 2.0));
        let (first, last) = (&sorted[0], &sorted[sorted.len() - 1]);
        checks.push(Check::at_least("E|X^ε − X| reduction factor", first.mean_abs_error / last.mean_abs_error, 2.0));
        if let Some(w) = c.artifact("convergence.csv")? {
            write_convergence_table(w, &table)?;
        }
    }

    if let Some(w) = c.artifact("samples.csv")? {
        let mut rows = Vec::new();
        for i in 0..c.s.mc.paths.min(100) as u64 {
            rows.push((i, solver.full_solution(&src.path(i), m)?.sample));
        }
        write_samples(w, &rows)?;
    }
    Ok(checks)
}

fn verify_suite(c: &Ctx) -> Result<Vec<Check>> {
    let s = c.s;
    let b = c.b;
    let m = c.m();
    let solver = Solver::new(&b.coeffs, Some(&b.model), s.mc.solver)?;
    let src = c.source(mc::suite::VERIFY);
    let mut checks = Vec::new();
    let mut duality = Vec::new();

    for &eps in &s.verify.duality_eps {
        let reports = if eps == 0.0 && !s.verify.convergence_eps.is_empty() {
            let full = full_duality_residual(&solver, &src, &b.functionals, m, s.mc.paths, &s.verify.convergence_eps)?;
            let d = &full.decomposition;
            for (what, pick) in [("I1", (|x: &crate::verify::Decomposition| x.i1) as fn(&_) -> MeanSe), ("I2", |x| x.i2)] {
                let rise = d
                    .windows(2)
                    .map(|w| (pick(&w[1]).mean - pick(&w[0]).mean) / pick(&w[0]).se.hypot(pick(&w[1]).se).max(f64::MIN_POSITIVE))
                    .fold(f64::NEG_INFINITY, f64::max);
                checks.push(Check::below(format!("{what} rise as ε decreases (se units)"), rise, 2.0));
                let (first, last) = (pick(&d[0]).mean, pick(&d[d.len() - 1]).mean);
                checks.push(Check::holds(format!("{what} decreases overall"), last < first));
            }
            if let Some(w) = c.artifact("decomposition.csv")? {
                write_decomposition(w, d)?;
            }
            full.duality
        } else {
            duality_residual(&solver, &src, &b.functionals, m, eps, s.mc.paths)?
        };
        for r in reports {
            checks.push(Check::below(format!("duality z, {} ε={}", r.functional, eps), r.z_score(), c.z()));
            duality.push((s.name.clone(), r));
        }
    }
    if let Some(w) = c.artifact("duality.csv")? {
        write_duality_rows(w, &duality)?;
    }

    if !s.verify.refinement_levels.is_empty() {
        let finest = *s.verify.refinement_levels.iter().max().unwrap_or(&m);
        let fine = Arc::new(crate::grid::TimeGrid::uniform(b.grid.horizon(), finest)?);
        let fine_src = PathSource::with_jumps(fine, b.model.clone(), s.eps_cut(), s.mc.seed, mc::suite::VERIFY);
        let eps = s.verify.duality_eps.first().copied().unwrap_or(0.0);
        let build = |g: &Arc<crate::grid::TimeGrid>| s.build_on(g);
        let reports = duality_refinement(&build, Some(&b.model), &fine_src, &s.verify.refinement_levels, eps, s.verify.refinement_paths, s.mc.solver)?;
        let mut resolved = 0;
        for r in &reports {
            if r.bias_resolved(c.z()) {
                resolved += 1;
                checks.push(Check::at_least(format!("refinement slope, {}", r.functional), r.slope, s.tolerances.slope_min));
            } else {
                checks.push(Check::holds(format!("refinement residual consistent with 0, {}", r.functional), r.passed(s.tolerances.slope_min, c.z())));
            }
        }
        checks.push(Check::at_least("functionals with a resolved refinement bias", resolved as f64, 1.0));
        if let Some(w) = c.artifact("refinement.csv")? {
            let rows: Vec<_> = reports.into_iter().map(|r| (s.name.clone(), r)).collect();
            write_refinement(w, &rows)?;
        }
    }

    if s.verify.continuity_paths > 0 && m >= 16 {
        let half = m / 2;
        let pairs: Vec<(usize, usize)> = [m / 16, m / 8, m / 4, m / 2].iter().map(|&d| (half - d / 2, half + d / 2)).collect();
        let cont = wiener_continuity(c, &pairs)?;
        checks.push(Check::holds(format!("continuity slope {:.3} >= p − 1 − slack", cont.slope), cont.passed(s.tolerances.continuity_slack)));
        if let Some(w) = c.artifact("continuity.csv")? {
            let mut w = csv::Writer::from_writer(w);
            w.write_record(["s", "t", "moment", "se", "N"])?;
            for r in &cont.rows {
                w.write_record([format!("{}", r.s), format!("{}", r.t), format!("{:.12e}", r.moment.mean), format!("{:.6e}", r.moment.se), r.moment.n.to_string()])?;
            }
            w.flush()?;
        }
    }
    Ok(checks)
}

fn wiener_continuity(c: &Ctx, pairs: &[(usize, usize)]) -> Result<crate::verify::ContinuityReport> {
    let src = PathSource::wiener_only(c.b.grid.clone(), c.s.mc.seed, mc::suite::VERIFY);
    continuity_diagnostic(&c.b.coeffs.a, pairs, c.s.verify.continuity_p, &src, c.s.verify.continuity_paths, &c.s.mc.solver)
}
