//! Shared orbits for drifts that depend on `ω′` only through `W_T`.
//!
//! When `a = f(W_T)` is time-homogeneous and the grid is uniform, the scalar
//! `U = W_T(A_{r,t} ω)` obeys `U_{k-1} + f(U_{k-1}) Δ = U_k` whatever the anchor
//! `t`, so `W_T(A_{r,t} ω) = O[t − r]` for the single backward orbit
//! `O[0] = W_T`. The forward transforms started at any node likewise follow
//! one explicit orbit `F[j+1] = F[j] + f(F[j]) Δ`. Every density and shift in
//! a window then costs one convolution with the increments.

use crate::error::{Error, Result};
use crate::functional::Cylinder;
use crate::grid::WienerPath;
use crate::levy_space::JumpSet;
use crate::transform::DriftCoefficient;

/// Whether [`TerminalOrbit`] applies to this drift on this grid.
pub fn orbit_applies(a: &Cylinder) -> bool {
    a.grid().is_uniform() && a.is_terminal() && a.is_time_homogeneous()
}

fn prefix(xs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for x in xs {
        acc += x;
        out.push(acc);
    }
    out
}

/// The three exponents of a density on a window.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DensityTerms {
    pub wiener_sum: f64,
    pub trace: f64,
    pub quadratic: f64,
    pub correction: f64,
}

impl DensityTerms {
    pub fn skorohod(&self) -> f64 {
        self.wiener_sum - self.trace
    }
    /// Exponent of `L`: `δ − ½∫a² − correction`.
    pub fn log_l(&self) -> f64 {
        self.skorohod() - self.quadratic - self.correction
    }
    /// Exponent of `𝓛`: `−δ − ½∫a² − correction`.
    pub fn log_lcal(&self) -> f64 {
        -self.skorohod() - self.quadratic - self.correction
    }
}

#[derive(Clone, Debug)]
pub struct TerminalOrbit {
    pub dt: f64,
    pub m: usize,
    increments: Vec<f64>,
    deterministic: bool,
    /// Backward orbit `O[0..=m]`.
    pub back: Vec<f64>,
    /// `Y[i] = f(O[i+1])`: the shift on cell `t − i` for anchor `t`.
    pub y: Vec<f64>,
    g: Vec<f64>,
    v: Vec<f64>,
    cum_y: Vec<f64>,
    cum_y2: Vec<f64>,
    cum_v: Vec<f64>,
    cum_gv: Vec<f64>,
    cum_g_prev: Vec<f64>,
    cum_log_jac: Vec<f64>,
    /// Forward orbit `F[0..=m]`.
    pub fwd: Vec<f64>,
    u: Vec<f64>,
    gt: Vec<f64>,
    vt: Vec<f64>,
    cum_u2: Vec<f64>,
    cum_vt: Vec<f64>,
    cum_gtv: Vec<f64>,
    cum_gt_prevv: Vec<f64>,
    cum_log_jac_fwd: Vec<f64>,
    /// Prefix sums of the increments.
    cum_x: Vec<f64>,
}

impl TerminalOrbit {
    pub fn new(a: &DriftCoefficient, path: &WienerPath, jumps: &JumpSet, tol: f64, max_iter: usize) -> Result<Self> {
        let cyl = &a.cyl;
        if !orbit_applies(cyl) {
            return Err(Error::InvalidInput("drift is not a time-homogeneous function of W_T on a uniform grid".into()));
        }
        let grid = path.grid();
        let m = grid.steps();
        let dt = grid.width(1);
        let f = |u: f64| cyl.eval_scalar(0.0, u, jumps);
        let deterministic = cyl.is_deterministic();

        let mut back = Vec::with_capacity(m + 1);
        back.push(path.terminal());
        let (mut y, mut g, mut v) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        let mut log_jac = Vec::with_capacity(m);
        let mut mprod = 1.0;
        for i in 0..m {
            let target = back[i];
            let (fv, _) = f(target);
            let mut u = target - fv * dt;
            let mut it = 0;
            let (fu, du) = loop {
                it += 1;
                let (fu, du) = f(u);
                let slope = 1.0 + du * dt;
                if !(slope > 0.0) {
                    return Err(Error::NoConvergence { iterations: it, defect: f64::INFINITY });
                }
                let step = (u + fu * dt - target) / slope;
                u -= step;
                if step.abs() <= (tol * 0.01).max(4.0 * f64::EPSILON * (1.0 + u.abs())) {
                    break f(u);
                }
                if it >= max_iter || !u.is_finite() {
                    return Err(Error::NoConvergence { iterations: it, defect: step.abs() });
                }
            };
            back.push(u);
            y.push(fu);
            g.push(du);
            let beta = du * dt;
            let r = du / (1.0 + beta);
            v.push(r * mprod);
            mprod *= 1.0 - dt * r;
            log_jac.push(beta.ln_1p());
        }
        let cum_y = prefix(&y);
        let cum_y2 = prefix(&y.iter().map(|x| x * x).collect::<Vec<_>>());
        let cum_v = prefix(&v);
        let rk: Vec<f64> = g.iter().map(|g| g / (1.0 + g * dt)).collect();
        let cum_gv = prefix(&rk.iter().map(|r| r * r).collect::<Vec<_>>());
        let cum_g_prev = prefix(&(0..m).map(|i| rk[i] * cum_v[i]).collect::<Vec<_>>());
        let cum_log_jac = prefix(&log_jac);

        let mut fwd = Vec::with_capacity(m + 1);
        fwd.push(path.terminal());
        let mut fwd_d = Vec::with_capacity(m + 1);
        for j in 0..m {
            let (fv, dv) = f(fwd[j]);
            fwd_d.push(dv);
            fwd.push(fwd[j] + fv * dt);
        }
        // Cell s+q+1 of a window starting at s sees the forward features F[q].
        let (mut u, mut gt, mut vt) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        let mut log_jac_fwd = Vec::with_capacity(m);
        let mut nprod = 1.0;
        for q in 0..m {
            let (fv, dv) = f(fwd[q]);
            u.push(fv);
            gt.push(dv);
            vt.push(dv * nprod);
            nprod *= 1.0 + dv * dt;
            log_jac_fwd.push((dv * dt).ln_1p());
        }
        let cum_u2 = prefix(&u.iter().map(|x| x * x).collect::<Vec<_>>());
        let cum_vt = prefix(&vt);
        let cum_gtv = prefix(&gt.iter().map(|g| g * g).collect::<Vec<_>>());
        let cum_gt_prevv = prefix(&(0..m).map(|q| gt[q] * cum_vt[q]).collect::<Vec<_>>());
        let cum_log_jac_fwd = prefix(&log_jac_fwd);

        Ok(Self {
            dt,
            m,
            increments: path.increments().to_vec(),
            deterministic,
            back,
            y,
            g,
            v,
            cum_y,
            cum_y2,
            cum_v,
            cum_gv,
            cum_g_prev,
            cum_log_jac,
            fwd,
            u,
            gt,
            vt,
            cum_u2,
            cum_vt,
            cum_gtv,
            cum_gt_prevv,
            cum_log_jac_fwd,
            cum_x: prefix(path.increments()),
        })
    }

    /// `W_T(A_{r,t} ω)`.
    pub fn terminal_at(&self, r: usize, t: usize) -> f64 {
        self.back[t - r]
    }

    /// Shift `a_k(A_{k-1,t} ω)` on cell `k <= t`.
    pub fn shift(&self, k: usize, t: usize) -> f64 {
        self.y[t - k]
    }

    /// `D_θ[a_k(A_{k-1,t})]`; the same for every `θ` since `D_θ W_T = 1`.
    pub fn sensitivity(&self, k: usize, t: usize) -> f64 {
        self.v[t - k]
    }

    /// `Σ_{k in (s,t]} c_k x_k` with `c_k = coeffs[k − s − 1]`.
    fn window_sum_forward(&self, coeffs: &[f64], s: usize, t: usize) -> f64 {
        if self.deterministic {
            return coeffs.first().copied().unwrap_or(0.0) * (self.cum_x[t] - self.cum_x[s]);
        }
        let x = &self.increments[s..t];
        coeffs.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// `Σ_{k in (s,t]} c_k x_k` with `c_k = coeffs[t − k]`.
    fn window_sum(&self, coeffs: &[f64], s: usize, t: usize) -> f64 {
        if self.deterministic {
            // Constant shift: a prefix difference of the increments.
            return coeffs.first().copied().unwrap_or(0.0) * (self.cum_x[t] - self.cum_x[s]);
        }
        let x = &self.increments;
        let mut acc = 0.0;
        for i in 0..t - s {
            acc += coeffs[i] * x[t - i - 1];
        }
        acc
    }

    /// Terms of `L_{s,t}`.
    pub fn density_l(&self, s: usize, t: usize) -> DensityTerms {
        let w = t - s;
        let dt = self.dt;
        DensityTerms {
            wiener_sum: self.window_sum(&self.y, s, t),
            trace: dt * self.cum_v[w],
            quadratic: 0.5 * dt * self.cum_y2[w],
            correction: dt * dt * (self.cum_g_prev[w] + 0.5 * self.cum_gv[w]),
        }
    }

    /// `log` of the exact change-of-variables density of `A_{s,t}`.
    pub fn log_jacobian_density(&self, s: usize, t: usize) -> f64 {
        let w = t - s;
        self.window_sum(&self.y, s, t) - 0.5 * self.dt * self.cum_y2[w] - self.cum_log_jac[w]
    }

    /// Terms of `𝓛_{s,t}`, built on the drift `a_k(T_{k-1} A_s ω)` of `A_{s,t}^{-1}`.
    pub fn density_lcal(&self, s: usize, t: usize) -> DensityTerms {
        let w = t - s;
        let dt = self.dt;
        DensityTerms {
            wiener_sum: self.window_sum_forward(&self.u, s, t),
            trace: dt * self.cum_vt[w],
            quadratic: 0.5 * dt * self.cum_u2[w],
            correction: dt * dt * (self.cum_gt_prevv[w] + 0.5 * self.cum_gtv[w]),
        }
    }

    /// `log` of the exact change-of-variables density of the law of `A_{s,t} ω`.
    pub fn log_jacobian_density_lcal(&self, s: usize, t: usize) -> f64 {
        let w = t - s;
        -self.window_sum_forward(&self.u, s, t) - 0.5 * self.dt * self.cum_u2[w] + self.cum_log_jac_fwd[w]
    }

    /// `∫_{t_s}^{t_t} a_r(A_{r,t}) dr`.
    pub fn shift_integral(&self, s: usize, t: usize) -> f64 {
        self.dt * self.cum_y[t - s]
    }

    /// Increments of `A_{s,t} ω`.
    pub fn transformed_increments(&self, s: usize, t: usize) -> Vec<f64> {
        let mut inc = self.increments.clone();
        for k in s + 1..=t {
            inc[k - 1] -= self.y[t - k] * self.dt;
        }
        inc
    }

    pub fn forward_orbit(&self) -> &[f64] {
        &self.fwd
    }

    #[doc(hidden)]
    pub fn forward_parts(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.u, &self.gt, &self.vt)
    }
    #[doc(hidden)]
    pub fn backward_parts(&self) -> (&[f64], &[f64], &[f64]) {
        (&self.y, &self.g, &self.v)
    }
}
