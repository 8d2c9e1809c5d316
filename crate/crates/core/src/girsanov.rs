//! Girsanov densities of the anticipating transformations.
//!
//! On the grid, with `y_k = a_k(A_{k-1,t} ω)`, `V_k` the sensitivity rows and
//! `G_k` the drift gradient at `A_{k-1,t} ω`,
//!
//! `log L_{s,t} = Σ y_k ΔW_k − Σ (V_k·H_k) Δ_k − ½ Σ y_k² Δ_k
//!              − Σ_{k<l} (R_k·H_l)(V_l·H_k) Δ_k Δ_l − ½ Σ_k (R_k·H_k)² Δ_k²`,
//!
//! where `R_k = G_k / (1 + Δ_k G_k·H_k)`,
//!
//! and `𝓛_{s,t}` is built the same way from the drift `w_k = a_k(T_{k-1} A_s ω)`
//! of `A_{s,t}^{-1} = T_t A_s`, with the opposite sign on the Skorohod term and
//! the double sum over `u < r`.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functional::GridFunctional;
use crate::grid::WienerPath;
use crate::grid_malliavin::divergence;
use crate::levy_space::JumpSet;
use crate::mc::{self, Comparison, PathSource};
use crate::orbit::{orbit_applies, DensityTerms, TerminalOrbit};
use crate::transform::{solve_backward, DriftCoefficient, PathTransform, Sensitivity, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityRecord {
    pub s: usize,
    pub t: usize,
    /// `Σ y_k ΔW_k` over the window.
    pub wiener_sum: f64,
    /// `Σ d_k(y_k) Δ_k`.
    pub trace: f64,
    pub skorohod: f64,
    pub quadratic: f64,
    pub correction: f64,
    pub log_value: f64,
    pub value: f64,
}

impl DensityRecord {
    fn build(s: usize, t: usize, terms: DensityTerms, sign: f64) -> Self {
        let skorohod = terms.skorohod();
        let log_value = sign * skorohod - terms.quadratic - terms.correction;
        Self {
            s,
            t,
            wiener_sum: terms.wiener_sum,
            trace: terms.trace,
            skorohod,
            quadratic: terms.quadratic,
            correction: terms.correction,
            log_value,
            value: log_value.exp(),
        }
    }

    pub fn of_l(s: usize, t: usize, terms: DensityTerms) -> Self {
        Self::build(s, t, terms, 1.0)
    }

    pub fn of_lcal(s: usize, t: usize, terms: DensityTerms) -> Self {
        Self::build(s, t, terms, -1.0)
    }
}

/// How per-path densities are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Engine {
    /// Shared orbits when the drift is a time-homogeneous function of `W_T`
    /// on a uniform grid, the general solver otherwise.
    #[default]
    Auto,
    Generic,
}

impl Engine {
    pub fn use_orbit(self, a: &DriftCoefficient) -> bool {
        self == Engine::Auto && orbit_applies(&a.cyl)
    }
}

fn weights_at(a: &DriftCoefficient, k: usize, h: &mut [f64]) {
    for (hi, f) in h.iter_mut().zip(&a.cyl.features) {
        *hi = f.weight(k);
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `Σ_{k<l} (R_k·H_l)(V_l·H_k) Δ_k Δ_l + ½ Σ_k (R_k·H_k)² Δ_k²` over cells `s+1..=t`,
/// with `R_k = G_k / (1 + Δ_k G_k·H_k)` the kernel of the resolved Volterra system.
/// In one dimension this agrees with the exact Jacobian density up to `O(Σ β_k³)`.
fn l_correction(a: &DriftCoefficient, sens: &Sensitivity) -> f64 {
    let (s, t) = (sens.s, sens.t);
    let p = a.cyl.arity();
    let grid = a.cyl.grid();
    // P_ij = Σ_{k<l} R_ki H_kj Δ_k
    let mut prefix = vec![0.0; p * p];
    let mut h = vec![0.0; p];
    let mut r = vec![0.0; p];
    let mut acc = 0.0;
    for k in s + 1..=t {
        let dt = grid.width(k);
        weights_at(a, k, &mut h);
        let (g, v) = (sens.grad_row(k), sens.row(k));
        let beta = dt * dot(g, &h);
        for (ri, gi) in r.iter_mut().zip(g) {
            *ri = gi / (1.0 + beta);
        }
        let mut off = 0.0;
        for i in 0..p {
            for j in 0..p {
                off += h[i] * v[j] * prefix[i * p + j];
            }
        }
        let rh = dot(&r, &h);
        acc += dt * off + 0.5 * dt * dt * rh * rh;
        for i in 0..p {
            for j in 0..p {
                prefix[i * p + j] += r[i] * h[j] * dt;
            }
        }
    }
    acc
}

/// Terms of `L_{s,t}` from a solved backward transform and its sensitivities.
pub fn density_l_terms(a: &DriftCoefficient, tr: &PathTransform, sens: &Sensitivity) -> DensityTerms {
    let (s, t) = (tr.s, tr.t);
    let path = tr.base();
    let grid = path.grid();
    let m = grid.steps();
    let p = a.cyl.arity();
    let mut own = vec![0.0; m];
    let mut h = vec![0.0; p];
    if p > 0 {
        for k in s + 1..=t {
            weights_at(a, k, &mut h);
            own[k - 1] = dot(sens.row(k), &h);
        }
    }
    let (wiener_sum, trace) = if s < t { divergence(&tr.drift, &own, path, s + 1, t) } else { (0.0, 0.0) };
    let quadratic = 0.5 * (s + 1..=t).map(|k| tr.drift_at(k).powi(2) * grid.width(k)).sum::<f64>();
    let correction = if p == 0 || a.cyl.is_deterministic() {
        0.0
    } else {
        l_correction(a, sens)
    };
    DensityTerms { wiener_sum, trace, quadratic, correction }
}

/// `L_{s,t}(ω)` by the general solver.
pub fn density_l(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize, opts: &SolverOptions) -> Result<DensityRecord> {
    let tr = solve_backward(a, path, jumps, s, t, opts)?;
    let sens = Sensitivity::compute(a, &tr, jumps)?;
    Ok(DensityRecord::of_l(s, t, density_l_terms(a, &tr, &sens)))
}

/// Forward recursion from node `s` with its sensitivities: `w_k = a_k(T_{k-1} A_s ω)`,
/// `G̃_k` the drift gradient there and `W_k = N_{k-1}ᵀ G̃_k` with
/// `N_k = (I + Δ_k H_k G̃_kᵀ) N_{k-1}`, so that `D_θ w_k = W_k · H_θ`.
struct ForwardSweep {
    w: Vec<f64>,
    grad: Vec<f64>,
    sens: Vec<f64>,
}

fn forward_sweep(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize) -> Result<ForwardSweep> {
    let grid = path.grid();
    if s > t || t > grid.steps() {
        return Err(Error::InvalidInput(format!("window ({s}, {t}] outside the grid")));
    }
    let cyl = &a.cyl;
    let p = cyl.arity();
    let n = t - s;
    let deterministic = p == 0 || cyl.is_deterministic();
    let mut z: Vec<f64> = cyl.features.iter().map(|f| f.value(path)).collect();
    let mut w = vec![0.0; grid.steps()];
    let mut grad = vec![0.0; n * p];
    let mut sens = vec![0.0; n * p];
    let mut nmat = vec![0.0; p * p];
    for i in 0..p {
        nmat[i * p + i] = 1.0;
    }
    let mut h = vec![0.0; p];
    let mut g = vec![0.0; p];
    for k in s + 1..=t {
        let dt = grid.width(k);
        weights_at(a, k, &mut h);
        let r = k - s - 1;
        let wk = if deterministic {
            cyl.eval(a.time_of(k), &z, jumps)
        } else {
            let wk = cyl.eval_grad(a.time_of(k), &z, jumps, &mut g);
            let row = &mut sens[r * p..(r + 1) * p];
            for c in 0..p {
                row[c] = (0..p).map(|i| g[i] * nmat[i * p + c]).sum();
            }
            grad[r * p..(r + 1) * p].copy_from_slice(&g);
            for i in 0..p {
                for c in 0..p {
                    nmat[i * p + c] += dt * h[i] * row[c];
                }
            }
            wk
        };
        w[k - 1] = wk;
        for (zi, hi) in z.iter_mut().zip(&h) {
            *zi += hi * wk * dt;
        }
    }
    Ok(ForwardSweep { w, grad, sens })
}

/// `𝓛_{s,t}(ω)` by the general solver.
pub fn density_lcal(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize) -> Result<DensityRecord> {
    let sw = forward_sweep(a, path, jumps, s, t)?;
    let grid = path.grid();
    let p = a.cyl.arity();
    let deterministic = p == 0 || a.cyl.is_deterministic();
    let mut own = vec![0.0; grid.steps()];
    let mut h = vec![0.0; p];
    if !deterministic {
        for k in s + 1..=t {
            weights_at(a, k, &mut h);
            let r = k - s - 1;
            own[k - 1] = dot(&sw.sens[r * p..(r + 1) * p], &h);
        }
    }
    let (wiener_sum, trace) = if s < t { divergence(&sw.w, &own, path, s + 1, t) } else { (0.0, 0.0) };
    let quadratic = 0.5 * (s + 1..=t).map(|k| sw.w[k - 1].powi(2) * grid.width(k)).sum::<f64>();
    let correction = if deterministic { 0.0 } else { lcal_correction(a, s, t, &sw.grad, &sw.sens) };
    Ok(DensityRecord::of_lcal(s, t, DensityTerms { wiener_sum, trace, quadratic, correction }))
}

/// `log` of the exact change-of-variables density of the law of `A_{s,t} ω`:
/// `−Σ w_k ΔW_k − ½ Σ w_k² Δ_k + Σ log(1 + Δ_k G̃_k·H_k)`.
pub fn log_jacobian_density_lcal(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize) -> Result<f64> {
    let sw = forward_sweep(a, path, jumps, s, t)?;
    let grid = path.grid();
    let p = a.cyl.arity();
    let mut h = vec![0.0; p];
    let mut acc = 0.0;
    for k in s + 1..=t {
        let dt = grid.width(k);
        let w = sw.w[k - 1];
        acc -= w * path.increment(k) + 0.5 * w * w * dt;
        if p > 0 && !a.cyl.is_deterministic() {
            weights_at(a, k, &mut h);
            let r = k - s - 1;
            acc += (dt * dot(&sw.grad[r * p..(r + 1) * p], &h)).ln_1p();
        }
    }
    Ok(acc)
}

/// `Σ_{l<k} (G̃_k·H_l)(W_l·H_k) Δ_k Δ_l + ½ Σ_k (G̃_k·H_k)² Δ_k²`.
fn lcal_correction(a: &DriftCoefficient, s: usize, t: usize, gt: &[f64], vt: &[f64]) -> f64 {
    let p = a.cyl.arity();
    let grid = a.cyl.grid();
    // Q_ij = Σ_{l<k} H_li Ṽ_lj Δ_l, then the pair term is Σ_ij G̃_ki H_kj Q_ij Δ_k.
    let mut q = vec![0.0; p * p];
    let mut h = vec![0.0; p];
    let mut acc = 0.0;
    for k in s + 1..=t {
        let dt = grid.width(k);
        weights_at(a, k, &mut h);
        let r = k - s - 1;
        let (g, v) = (&gt[r * p..(r + 1) * p], &vt[r * p..(r + 1) * p]);
        let mut off = 0.0;
        for i in 0..p {
            for j in 0..p {
                off += g[i] * h[j] * q[i * p + j];
            }
        }
        let gh = dot(g, &h);
        acc += dt * off + 0.5 * dt * dt * gh * gh;
        for i in 0..p {
            for j in 0..p {
                q[i * p + j] += h[i] * v[j] * dt;
            }
        }
    }
    acc
}

/// `log` of the exact change-of-variables density of the grid map `A_{s,t}`:
/// `Σ y_k ΔW_k − ½ Σ y_k² Δ_k − Σ log(1 + Δ_k G_k·H_k)`.
pub fn log_jacobian_density(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize, opts: &SolverOptions) -> Result<f64> {
    let tr = solve_backward(a, path, jumps, s, t, opts)?;
    let sens = Sensitivity::compute(a, &tr, jumps)?;
    let grid = path.grid();
    let p = a.cyl.arity();
    let mut h = vec![0.0; p];
    let mut acc = 0.0;
    for k in s + 1..=t {
        let dt = grid.width(k);
        let y = tr.drift_at(k);
        acc += y * path.increment(k) - 0.5 * y * y * dt;
        if p > 0 && !a.cyl.is_deterministic() {
            weights_at(a, k, &mut h);
            acc -= (dt * dot(sens.grad_row(k), &h)).ln_1p();
        }
    }
    Ok(acc)
}

/// `|L_{s,t}(ω) 𝓛_{s,t}(A_{s,t} ω) − 1|`.
pub fn inverse_relation_residual(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize, opts: &SolverOptions) -> Result<f64> {
    let tr = solve_backward(a, path, jumps, s, t, opts)?;
    let sens = Sensitivity::compute(a, &tr, jumps)?;
    let l = DensityRecord::of_l(s, t, density_l_terms(a, &tr, &sens));
    let lcal = density_lcal(a, &tr.transformed(), jumps, s, t)?;
    Ok((l.log_value + lcal.log_value).exp_m1().abs())
}

/// Relative residual of `L_{0,t}(ω) = L_{0,s}(A_{s,t} ω) L_{s,t}(ω)`.
pub fn cocycle_test(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, s: usize, t: usize, opts: &SolverOptions) -> Result<f64> {
    if s > t {
        return Err(Error::InvalidInput(format!("cocycle needs s <= t, got {s} > {t}")));
    }
    let full = density_l(a, path, jumps, 0, t, opts)?;
    let tr = solve_backward(a, path, jumps, s, t, opts)?;
    let sens = Sensitivity::compute(a, &tr, jumps)?;
    let outer = DensityRecord::of_l(s, t, density_l_terms(a, &tr, &sens));
    let inner = density_l(a, &tr.transformed(), jumps, 0, s, opts)?;
    Ok((inner.log_value + outer.log_value - full.log_value).exp_m1().abs())
}

/// Per-path pieces of the identity tests.
#[derive(Clone, Copy, Debug)]
struct IdentitySample {
    f: f64,
    f_shifted: f64,
    l: f64,
    lcal: f64,
}

fn identity_sample(
    a: &DriftCoefficient,
    f: &dyn GridFunctional,
    path: &WienerPath,
    jumps: &JumpSet,
    s: usize,
    t: usize,
    opts: &SolverOptions,
    engine: Engine,
) -> Result<IdentitySample> {
    let fv = f.value(path, jumps);
    if engine.use_orbit(a) {
        let orbit = TerminalOrbit::new(a, path, jumps, opts.tol, opts.max_iter)?;
        let shifted = WienerPath::from_increments(path.grid().clone(), orbit.transformed_increments(s, t))?;
        return Ok(IdentitySample {
            f: fv,
            f_shifted: f.value(&shifted, jumps),
            l: orbit.density_l(s, t).log_l().exp(),
            lcal: orbit.density_lcal(s, t).log_lcal().exp(),
        });
    }
    let tr = solve_backward(a, path, jumps, s, t, opts)?;
    let sens = Sensitivity::compute(a, &tr, jumps)?;
    let l = DensityRecord::of_l(s, t, density_l_terms(a, &tr, &sens));
    let lcal = density_lcal(a, path, jumps, s, t)?;
    Ok(IdentitySample { f: fv, f_shifted: f.value(&tr.transformed(), jumps), l: l.value, lcal: lcal.value })
}

/// Monte Carlo estimates of `E[F(A_{s,t}ω) L_{s,t}] = E[F]` and `E[F(A_{s,t}ω)] = E[F 𝓛_{s,t}]`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityReport {
    pub s: usize,
    pub t: usize,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// `lhs = F(Aω)L`, `rhs = F`.
    pub first: Comparison,
    /// `lhs = F(Aω)`, `rhs = F𝓛`.
    pub second: Comparison,
    /// `E[L_{s,t}]`.
    pub normalization: mc::MeanSe,
}

#[allow(clippy::too_many_arguments)]
pub fn girsanov_identity_test(
    a: &DriftCoefficient,
    f: &dyn GridFunctional,
    s: usize,
    t: usize,
    n: usize,
    source: &PathSource,
    opts: &SolverOptions,
    engine: Engine,
) -> Result<IdentityReport> {
    let samples = mc::try_map_paths(n, |i| {
        let p = source.path(i);
        identity_sample(a, f, &p.wiener, &p.jumps, s, t, opts, engine)
    })?;
    let col = |g: fn(&IdentitySample) -> f64| samples.iter().map(g).collect::<Vec<f64>>();
    let first = Comparison::new(&col(|x| x.f_shifted * x.l), &col(|x| x.f));
    let second = Comparison::new(&col(|x| x.f_shifted), &col(|x| x.f * x.lcal));
    Ok(IdentityReport {
        s,
        t,
        n,
        m: source.grid.steps(),
        seed: source.seed,
        first,
        second,
        normalization: mc::MeanSe::of(&col(|x| x.l)),
    })
}

/// `E[L_{s,t}]` alone.
pub fn normalization_test(a: &DriftCoefficient, s: usize, t: usize, n: usize, source: &PathSource, opts: &SolverOptions, engine: Engine) -> Result<mc::MeanSe> {
    let values = mc::try_map_paths(n, |i| {
        let p = source.path(i);
        if engine.use_orbit(a) {
            let orbit = TerminalOrbit::new(a, &p.wiener, &p.jumps, opts.tol, opts.max_iter)?;
            Ok(orbit.density_l(s, t).log_l().exp())
        } else {
            density_l(a, &p.wiener, &p.jumps, s, t, opts).map(|r| r.value)
        }
    })?;
    Ok(mc::MeanSe::of(&values))
}

/// Write identity reports as `(test, s, t, lhs, rhs, se_lhs, se_rhs, N, m, seed)` rows.
pub fn write_identity_rows<W: Write>(out: W, rows: &[(String, IdentityReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["test", "s", "t", "lhs", "rhs", "se_lhs", "se_rhs", "N", "m", "seed"])?;
    for (name, r) in rows {
        for (suffix, c) in [("first", &r.first), ("second", &r.second)] {
            w.write_record([
                format!("{name}/{suffix}"),
                r.s.to_string(),
                r.t.to_string(),
                format!("{:.12e}", c.lhs.mean),
                format!("{:.12e}", c.rhs.mean),
                format!("{:.6e}", c.lhs.se),
                format!("{:.6e}", c.rhs.se),
                r.n.to_string(),
                r.m.to_string(),
                r.seed.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shared handle for functionals in test banks.
pub type FunctionalRef = Arc<dyn GridFunctional>;

#[cfg(test)]
mod tests;
