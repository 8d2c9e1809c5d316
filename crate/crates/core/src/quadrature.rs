//! Adaptive Gauss–Kronrod (7/15) integration.
//!
//! Infinite endpoints are mapped onto a finite interval with `x = a + u/(1-u)`.
//! [`integrate_near_zero`] handles integrands that may blow up at the origin by
//! summing dyadic shells and flags numerical divergence.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureOptions {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_max_intervals")]
    pub max_intervals: usize,
}

fn default_rel_tol() -> f64 {
    1e-8
}
fn default_abs_tol() -> f64 {
    1e-14
}
fn default_max_intervals() -> usize {
    4000
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            abs_tol: default_abs_tol(),
            max_intervals: default_max_intervals(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integrate `f` over `[a, b]`; either endpoint may be infinite.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: &QuadratureOptions) -> Result<Estimate> {
    integrate_dyn(&f, a, b, opts)
}

fn integrate_dyn(f: &dyn Fn(f64) -> f64, a: f64, b: f64, opts: &QuadratureOptions) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    if a > b {
        let e = integrate_dyn(f, b, a, opts)?;
        return Ok(Estimate { value: -e.value, error: e.error });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adapt(f, a, b, opts),
        (true, false) => adapt(
            &|u: f64| {
                let w = 1.0 - u;
                f(a + u / w) / (w * w)
            },
            0.0,
            1.0,
            opts,
        ),
        (false, true) => adapt(
            &|u: f64| {
                let w = 1.0 - u;
                f(b - u / w) / (w * w)
            },
            0.0,
            1.0,
            opts,
        ),
        (false, false) => {
            let l = integrate_dyn(f, f64::NEG_INFINITY, 0.0, opts)?;
            let r = integrate_dyn(f, 0.0, f64::INFINITY, opts)?;
            Ok(Estimate { value: l.value + r.value, error: l.error + r.error })
        }
    }
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, opts: &QuadratureOptions) -> Result<Estimate> {
    // (a, b, value, error)
    let mut parts: Vec<(f64, f64, f64, f64)> = Vec::with_capacity(64);
    let (v, e) = gk15(f, a, b);
    parts.push((a, b, v, e));
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if !total.is_finite() || !err.is_finite() {
            return Err(Error::QuadratureFailure(format!("non-finite integrand on [{a}, {b}]")));
        }
        if err <= opts.abs_tol.max(opts.rel_tol * total.abs()) {
            return Ok(Estimate { value: total, error: err });
        }
        if parts.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailure(format!(
                "tolerance not met on [{a}, {b}] after {} subintervals (value {total:e}, error {err:e})",
                parts.len()
            )));
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::QuadratureFailure(format!("interval collapsed near {lo}")));
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// Outcome of an integral that may diverge.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub enum Integral {
    Finite(f64),
    Divergent,
}

impl Integral {
    pub fn is_finite(&self) -> bool {
        matches!(self, Integral::Finite(_))
    }
    pub fn value(&self) -> f64 {
        match self {
            Integral::Finite(v) => *v,
            Integral::Divergent => f64::INFINITY,
        }
    }
}

const SHELLS: usize = 160;

/// Integrate `f` over `(0, upper]` by dyadic shells `(upper 2^{-j-1}, upper 2^{-j}]`.
///
/// The sum is declared divergent when the last shells still carry a
/// non-negligible share of the total, or when a shell fails to integrate.
pub fn integrate_near_zero<F: Fn(f64) -> f64>(f: F, upper: f64, opts: &QuadratureOptions) -> Result<Integral> {
    let mut total = 0.0;
    let mut hi = upper;
    let mut tail_shells = [0.0f64; 4];
    for j in 0..SHELLS {
        let lo = 0.5 * hi;
        let shell = match integrate(&f, lo, hi, opts) {
            Ok(e) => e.value,
            Err(_) => return Ok(Integral::Divergent),
        };
        total += shell;
        if !total.is_finite() {
            return Ok(Integral::Divergent);
        }
        tail_shells[j % 4] = shell.abs();
        hi = lo;
    }
    let tail: f64 = tail_shells.iter().sum();
    if tail > 1e-10 * total.abs().max(1e-300) && tail > 1e-300 {
        Ok(Integral::Divergent)
    } else {
        Ok(Integral::Finite(total))
    }
}
