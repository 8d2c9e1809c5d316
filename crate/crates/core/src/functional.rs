//! Cylindrical functionals `f(t, ⟨h_1, ω′⟩, …, ⟨h_p, ω′⟩, ω″)` on a time grid.
//!
//! Each feature `⟨h, ω′⟩ = Σ_j h_j ΔW_j` has a weight that is constant on grid
//! cells, so `D_s` of a feature is the cell weight and derivatives are exact.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{TimeGrid, WienerPath};
use crate::levy_space::JumpSet;

/// Which Wiener integral a feature computes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureSpec {
    /// `"terminal"` for `W_T`, `"half"` for `W_{T/2}`.
    Named(String),
    /// `∫ 1_{[from, to]}(s) dW_s`.
    Window { from: f64, to: f64 },
}

impl FeatureSpec {
    pub fn terminal() -> Self {
        FeatureSpec::Named("terminal".into())
    }
    pub fn half() -> Self {
        FeatureSpec::Named("half".into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feature {
    pub spec: FeatureSpec,
    weights: Vec<f64>,
    /// `|h|_2 = (Σ h_j² Δ_j)^{1/2}`.
    pub l2_norm: f64,
    /// Weight 1 on every cell, i.e. the feature is `W_T`.
    pub terminal: bool,
}

impl Feature {
    pub fn build(spec: &FeatureSpec, grid: &TimeGrid) -> Result<Self> {
        let t = grid.horizon();
        let (from, to) = match spec {
            FeatureSpec::Named(n) if n == "terminal" => (0.0, t),
            FeatureSpec::Named(n) if n == "half" => (0.0, 0.5 * t),
            FeatureSpec::Named(n) => return Err(Error::Config(format!("unknown feature `{n}`"))),
            FeatureSpec::Window { from, to } => (*from, *to),
        };
        if !(from >= 0.0 && to <= t * (1.0 + 1e-12) && to > from) {
            return Err(Error::Config(format!("feature window [{from}, {to}] outside [0, {t}]")));
        }
        let weights: Vec<f64> = (1..=grid.steps())
            .map(|k| {
                let (a, b) = (grid.node(k - 1), grid.node(k));
                let overlap = (b.min(to) - a.max(from)).max(0.0);
                let w = overlap / (b - a);
                // Snap round-off so windows on nodes give exact 0/1 weights.
                if (w - 1.0).abs() < 1e-9 {
                    1.0
                } else if w < 1e-9 {
                    0.0
                } else {
                    w
                }
            })
            .collect();
        Ok(Self::from_weights(spec.clone(), grid, weights))
    }

    pub fn from_weights(spec: FeatureSpec, grid: &TimeGrid, weights: Vec<f64>) -> Self {
        let l2 = weights.iter().zip(grid.widths()).map(|(w, d)| w * w * d).sum::<f64>().sqrt();
        let terminal = weights.iter().all(|&w| w == 1.0);
        Self { spec, weights, l2_norm: l2, terminal }
    }

    /// Weight on cell `k` (1-based).
    #[inline]
    pub fn weight(&self, k: usize) -> f64 {
        self.weights[k - 1]
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn value(&self, path: &WienerPath) -> f64 {
        self.weights.iter().zip(path.increments()).map(|(w, x)| w * x).sum()
    }
}

/// Scalar building blocks with analytic first and second derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Identity,
    Tanh(f64),
    Sin(f64),
    Cos(f64),
    Exp(f64),
    Square,
    /// Smooth compactly supported bump `exp(1 - 1/(1 - (z/w)²))` on `|z| < w`.
    Bump(f64),
    /// `exp(-z²/(2w²))`.
    Gauss(f64),
}

impl Shape {
    /// `(f, f′, f″)` at `z`.
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64, f64) {
        match *self {
            Shape::Identity => (z, 1.0, 0.0),
            Shape::Tanh(c) => {
                let t = (c * z).tanh();
                let s = 1.0 - t * t;
                (t, c * s, -2.0 * c * c * t * s)
            }
            Shape::Sin(w) => {
                let (s, c) = (w * z).sin_cos();
                (s, w * c, -w * w * s)
            }
            Shape::Cos(w) => {
                let (s, c) = (w * z).sin_cos();
                (c, -w * s, -w * w * c)
            }
            Shape::Exp(r) => {
                let e = (r * z).exp();
                (e, r * e, r * r * e)
            }
            Shape::Square => (z * z, 2.0 * z, 2.0),
            Shape::Bump(w) => {
                let s = z / w;
                let q = 1.0 - s * s;
                if q <= 0.0 {
                    return (0.0, 0.0, 0.0);
                }
                let f = (1.0 - 1.0 / q).exp();
                let g = -2.0 * s / (w * q * q);
                let dg = -2.0 / (w * w * q * q) - 8.0 * s * s / (w * w * q * q * q);
                (f, f * g, f * (g * g + dg))
            }
            Shape::Gauss(w) => {
                let f = (-0.5 * z * z / (w * w)).exp();
                (f, -z / (w * w) * f, (z * z / w.powi(4) - 1.0 / (w * w)) * f)
            }
        }
    }

    /// Sup norms of `(f, f′, f″)`; `None` when unbounded.
    pub fn sup(&self) -> [Option<f64>; 3] {
        match *self {
            Shape::Identity => [None, Some(1.0), Some(0.0)],
            Shape::Tanh(c) => [Some(1.0), Some(c.abs()), Some(c * c * 4.0 / (3.0 * 3f64.sqrt()))],
            Shape::Sin(w) | Shape::Cos(w) => [Some(1.0), Some(w.abs()), Some(w * w)],
            Shape::Exp(r) if r == 0.0 => [Some(1.0), Some(0.0), Some(0.0)],
            Shape::Exp(_) => [None, None, None],
            Shape::Square => [None, None, Some(2.0)],
            Shape::Gauss(w) => [Some(1.0), Some(1.0 / (w.abs() * 1f64.exp().sqrt())), Some(1.0 / (w * w))],
            Shape::Bump(w) => {
                // Scan for the derivative maxima; 1% headroom covers the grid spacing.
                let (mut d1, mut d2) = (0.0f64, 0.0f64);
                let n = 20_000;
                for i in 0..=n {
                    let z = -w + 2.0 * w * i as f64 / n as f64;
                    let (_, a, b) = self.eval(z);
                    d1 = d1.max(a.abs());
                    d2 = d2.max(b.abs());
                }
                [Some(1.0), Some(1.01 * d1), Some(1.01 * d2)]
            }
        }
    }
}

/// `coef · (1 + time_slope·t) · Π shape_i(z_{feature_i}) · exp(-jump_decay · #jumps)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub coef: f64,
    pub time_slope: f64,
    pub jump_decay: f64,
    pub factors: Vec<(usize, Shape)>,
}

/// Declared sup bounds `‖F‖_∞`, `‖|DF|_2‖_∞`, `‖|D²F|_2‖_∞`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FunctionalBounds {
    pub sup: Option<f64>,
    pub grad: Option<f64>,
    pub hess: Option<f64>,
}

fn mul_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Some(0.0),
        (Some(x), Some(y)) => Some(x * y),
        _ => None,
    }
}

fn add_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? + b?)
}

/// A cylindrical functional bound to a grid.
#[derive(Clone, Debug)]
pub struct Cylinder {
    grid: Arc<TimeGrid>,
    pub features: Vec<Feature>,
    pub profile: Profile,
    /// Time argument used when the cylinder is evaluated as a plain functional.
    pub eval_time: f64,
}

impl Cylinder {
    pub fn new(grid: Arc<TimeGrid>, features: Vec<Feature>, profile: Profile) -> Result<Self> {
        if profile.factors.iter().any(|(i, _)| *i >= features.len()) {
            return Err(Error::InvalidInput("factor refers to a missing feature".into()));
        }
        let eval_time = grid.horizon();
        Ok(Self { grid, features, profile, eval_time })
    }

    pub fn constant(grid: Arc<TimeGrid>, value: f64) -> Self {
        let profile = Profile { coef: value, time_slope: 0.0, jump_decay: 0.0, factors: vec![] };
        Self::new(grid, vec![], profile).expect("no factors")
    }

    /// `coef · shape(W_T)`.
    pub fn of_terminal(grid: Arc<TimeGrid>, coef: f64, shape: Shape) -> Self {
        let f = Feature::build(&FeatureSpec::terminal(), &grid).expect("terminal feature");
        let profile = Profile { coef, time_slope: 0.0, jump_decay: 0.0, factors: vec![(0, shape)] };
        Self::new(grid, vec![f], profile).expect("one feature")
    }

    /// `coef · shape(⟨h, ω′⟩)` for a single feature.
    pub fn of_feature(grid: Arc<TimeGrid>, coef: f64, spec: FeatureSpec, shape: Shape) -> Result<Self> {
        let f = Feature::build(&spec, &grid)?;
        let profile = Profile { coef, time_slope: 0.0, jump_decay: 0.0, factors: vec![(0, shape)] };
        Self::new(grid, vec![f], profile)
    }

    pub fn with_time_slope(mut self, slope: f64) -> Self {
        self.profile.time_slope = slope;
        self
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }
    pub fn arity(&self) -> usize {
        self.features.len()
    }
    /// No dependence on ω′.
    pub fn is_deterministic(&self) -> bool {
        self.profile.factors.is_empty() || self.profile.coef == 0.0
    }
    /// Depends on ω′ only through `W_T`.
    pub fn is_terminal(&self) -> bool {
        self.features.iter().all(|f| f.terminal)
    }
    pub fn is_time_homogeneous(&self) -> bool {
        self.profile.time_slope == 0.0
    }

    pub fn feature_values(&self, path: &WienerPath, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.features.iter().map(|f| f.value(path)));
    }

    #[inline]
    fn scale(&self, time: f64, jumps: &JumpSet) -> f64 {
        let mut c = self.profile.coef * (1.0 + self.profile.time_slope * time);
        if self.profile.jump_decay != 0.0 {
            c *= (-self.profile.jump_decay * jumps.len() as f64).exp();
        }
        c
    }

    #[inline]
    pub fn eval(&self, time: f64, z: &[f64], jumps: &JumpSet) -> f64 {
        let mut v = self.scale(time, jumps);
        for &(i, s) in &self.profile.factors {
            v *= s.eval(z[i]).0;
        }
        v
    }

    /// Value of the profile with every feature set to `u`.
    #[inline]
    pub fn eval_scalar(&self, time: f64, u: f64, jumps: &JumpSet) -> (f64, f64) {
        let c = self.scale(time, jumps);
        match self.profile.factors.as_slice() {
            [] => (c, 0.0),
            [(_, s)] => {
                let (f, d, _) = s.eval(u);
                (c * f, c * d)
            }
            fs => {
                let mut v = 1.0;
                let mut d = 0.0;
                for &(_, s) in fs {
                    let (f, df, _) = s.eval(u);
                    d = d * f + v * df;
                    v *= f;
                }
                (c * v, c * d)
            }
        }
    }

    /// Value and gradient with respect to the features.
    #[inline]
    pub fn eval_grad(&self, time: f64, z: &[f64], jumps: &JumpSet, grad: &mut [f64]) -> f64 {
        let c = self.scale(time, jumps);
        grad.iter_mut().for_each(|g| *g = 0.0);
        match self.profile.factors.as_slice() {
            [] => c,
            [(i, s)] => {
                let (f, d, _) = s.eval(z[*i]);
                grad[*i] = c * d;
                c * f
            }
            fs => {
                let vals: Vec<(f64, f64, f64)> = fs.iter().map(|&(i, s)| s.eval(z[i])).collect();
                let total: f64 = vals.iter().map(|v| v.0).product();
                for (a, &(i, _)) in fs.iter().enumerate() {
                    let others: f64 = vals.iter().enumerate().filter(|(b, _)| *b != a).map(|(_, v)| v.0).product();
                    grad[i] += c * vals[a].1 * others;
                }
                c * total
            }
        }
    }

    /// Hessian with respect to the features, row-major `p × p`.
    pub fn hessian(&self, time: f64, z: &[f64], jumps: &JumpSet, hess: &mut [f64]) {
        let p = self.arity();
        let c = self.scale(time, jumps);
        hess.iter_mut().for_each(|h| *h = 0.0);
        let fs = &self.profile.factors;
        let vals: Vec<(f64, f64, f64)> = fs.iter().map(|&(i, s)| s.eval(z[i])).collect();
        for a in 0..fs.len() {
            for b in 0..fs.len() {
                let rest: f64 = vals.iter().enumerate().filter(|(k, _)| *k != a && *k != b).map(|(_, v)| v.0).product();
                let term = if a == b { vals[a].2 } else { vals[a].1 * vals[b].1 };
                hess[fs[a].0 * p + fs[b].0] += c * term * rest;
            }
        }
    }

    /// Features of `path`, then value.
    pub fn value_on(&self, time: f64, path: &WienerPath, jumps: &JumpSet) -> f64 {
        let z: Vec<f64> = self.features.iter().map(|f| f.value(path)).collect();
        self.eval(time, &z, jumps)
    }

    /// Sup bounds at a given time, with `|DF|_2 <= Σ_i ‖∂_i f‖ |h_i|_2` and similarly for `D²F`.
    pub fn bounds_at(&self, time: f64) -> FunctionalBounds {
        let scale = (self.profile.coef * (1.0 + self.profile.time_slope * time)).abs();
        if self.is_deterministic() {
            return FunctionalBounds { sup: Some(scale), grad: Some(0.0), hess: Some(0.0) };
        }
        let sups: Vec<[Option<f64>; 3]> = self.profile.factors.iter().map(|(_, s)| s.sup()).collect();
        let prod_except = |skip: &[usize]| -> Option<f64> {
            let mut v = Some(scale);
            for (k, s) in sups.iter().enumerate() {
                if !skip.contains(&k) {
                    v = mul_opt(v, s[0]);
                }
            }
            v
        };
        let sup = prod_except(&[]);
        let mut grad = Some(0.0);
        let mut hess = Some(0.0);
        let fs = &self.profile.factors;
        for a in 0..fs.len() {
            let ha = self.features[fs[a].0].l2_norm;
            grad = add_opt(grad, mul_opt(mul_opt(prod_except(&[a]), sups[a][1]), Some(ha)));
            for b in 0..fs.len() {
                let hb = self.features[fs[b].0].l2_norm;
                let term = if a == b {
                    mul_opt(prod_except(&[a]), sups[a][2])
                } else {
                    mul_opt(mul_opt(prod_except(&[a, b]), sups[a][1]), sups[b][1])
                };
                hess = add_opt(hess, mul_opt(term, Some(ha * hb)));
            }
        }
        FunctionalBounds { sup, grad, hess }
    }
}

/// A random variable on a sample path with optional analytic derivatives.
pub trait GridFunctional: Send + Sync {
    fn grid(&self) -> &Arc<TimeGrid>;
    fn value(&self, path: &WienerPath, jumps: &JumpSet) -> f64;
    /// `d_j F`: the value of `D_s F` on cell `j`.
    fn analytic_derivative(&self, _path: &WienerPath, _jumps: &JumpSet, _cell: usize) -> Option<f64> {
        None
    }
    fn analytic_second_derivative(&self, _path: &WienerPath, _jumps: &JumpSet, _j: usize, _k: usize) -> Option<f64> {
        None
    }
    fn allows_finite_differences(&self) -> bool {
        false
    }
    fn bounds(&self) -> FunctionalBounds {
        FunctionalBounds::default()
    }
}

impl GridFunctional for Cylinder {
    fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }
    fn value(&self, path: &WienerPath, jumps: &JumpSet) -> f64 {
        self.value_on(self.eval_time, path, jumps)
    }
    fn analytic_derivative(&self, path: &WienerPath, jumps: &JumpSet, cell: usize) -> Option<f64> {
        let z: Vec<f64> = self.features.iter().map(|f| f.value(path)).collect();
        let mut g = vec![0.0; z.len()];
        self.eval_grad(self.eval_time, &z, jumps, &mut g);
        Some(g.iter().zip(&self.features).map(|(g, f)| g * f.weight(cell)).sum())
    }
    fn analytic_second_derivative(&self, path: &WienerPath, jumps: &JumpSet, j: usize, k: usize) -> Option<f64> {
        let p = self.arity();
        let z: Vec<f64> = self.features.iter().map(|f| f.value(path)).collect();
        let mut h = vec![0.0; p * p];
        self.hessian(self.eval_time, &z, jumps, &mut h);
        let mut s = 0.0;
        for a in 0..p {
            for b in 0..p {
                s += h[a * p + b] * self.features[a].weight(j) * self.features[b].weight(k);
            }
        }
        Some(s)
    }
    fn bounds(&self) -> FunctionalBounds {
        self.bounds_at(self.eval_time)
    }
}

type PathFn = dyn Fn(&WienerPath, &JumpSet) -> f64 + Send + Sync;

/// A functional given only by its values; derivatives come from finite differences.
#[derive(Clone)]
pub struct Opaque {
    grid: Arc<TimeGrid>,
    f: Arc<PathFn>,
    pub finite_differences: bool,
}

impl Opaque {
    pub fn new(grid: Arc<TimeGrid>, finite_differences: bool, f: impl Fn(&WienerPath, &JumpSet) -> f64 + Send + Sync + 'static) -> Self {
        Self { grid, f: Arc::new(f), finite_differences }
    }
}

impl GridFunctional for Opaque {
    fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }
    fn value(&self, path: &WienerPath, jumps: &JumpSet) -> f64 {
        (self.f)(path, jumps)
    }
    fn allows_finite_differences(&self) -> bool {
        self.finite_differences
    }
}

/// `Σ c_i F_i`.
#[derive(Clone)]
pub struct LinearCombination {
    pub terms: Vec<(f64, Arc<dyn GridFunctional>)>,
}

impl GridFunctional for LinearCombination {
    fn grid(&self) -> &Arc<TimeGrid> {
        self.terms[0].1.grid()
    }
    fn value(&self, path: &WienerPath, jumps: &JumpSet) -> f64 {
        self.terms.iter().map(|(c, f)| c * f.value(path, jumps)).sum()
    }
    fn analytic_derivative(&self, path: &WienerPath, jumps: &JumpSet, cell: usize) -> Option<f64> {
        let mut s = 0.0;
        for (c, f) in &self.terms {
            s += c * f.analytic_derivative(path, jumps, cell)?;
        }
        Some(s)
    }
    fn analytic_second_derivative(&self, path: &WienerPath, jumps: &JumpSet, j: usize, k: usize) -> Option<f64> {
        let mut s = 0.0;
        for (c, f) in &self.terms {
            s += c * f.analytic_second_derivative(path, jumps, j, k)?;
        }
        Some(s)
    }
    fn allows_finite_differences(&self) -> bool {
        self.terms.iter().all(|(_, f)| f.allows_finite_differences())
    }
}

/// Config-level description of a cylindrical functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalSpec {
    pub family: Family,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub coef: f64,
    /// Shape parameter: tanh scale, sin/cos frequency, exp rate, bump/gauss width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<FeatureSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub factors: Vec<FactorSpec>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub time_slope: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub jump_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSpec {
    pub shape: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    pub feature: FeatureSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Constant,
    Linear,
    Tanh,
    Sin,
    Cos,
    Exp,
    Square,
    Bump,
    Gauss,
    Product,
}

fn one() -> f64 {
    1.0
}
fn is_one(x: &f64) -> bool {
    *x == 1.0
}
fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn shape_of(family: Family, scale: Option<f64>) -> Result<Shape> {
    let s = scale.unwrap_or(1.0);
    Ok(match family {
        Family::Linear => Shape::Identity,
        Family::Tanh => Shape::Tanh(s),
        Family::Sin => Shape::Sin(s),
        Family::Cos => Shape::Cos(s),
        Family::Exp => Shape::Exp(s),
        Family::Square => Shape::Square,
        Family::Bump => Shape::Bump(s),
        Family::Gauss => Shape::Gauss(s),
        Family::Constant | Family::Product => {
            return Err(Error::Config(format!("`{family:?}` cannot be used as a factor shape")));
        }
    })
}

impl FunctionalSpec {
    pub fn constant(value: f64) -> Self {
        Self::simple(Family::Constant, value, None, None)
    }

    pub fn simple(family: Family, coef: f64, scale: Option<f64>, feature: Option<FeatureSpec>) -> Self {
        Self { family, coef, scale, feature, factors: vec![], time_slope: 0.0, jump_decay: 0.0 }
    }

    pub fn build(&self, grid: &Arc<TimeGrid>) -> Result<Cylinder> {
        let mut features: Vec<Feature> = Vec::new();
        let mut specs: Vec<FeatureSpec> = Vec::new();
        let mut factor = |fs: &FeatureSpec, shape: Shape, features: &mut Vec<Feature>| -> Result<(usize, Shape)> {
            let idx = match specs.iter().position(|s| s == fs) {
                Some(i) => i,
                None => {
                    features.push(Feature::build(fs, grid)?);
                    specs.push(fs.clone());
                    specs.len() - 1
                }
            };
            Ok((idx, shape))
        };
        let factors = match self.family {
            Family::Constant => vec![],
            Family::Product => {
                if self.factors.is_empty() {
                    return Err(Error::Config("`product` needs at least one entry in `factors`".into()));
                }
                let mut v = Vec::new();
                for f in &self.factors {
                    v.push(factor(&f.feature, shape_of(f.shape, f.scale)?, &mut features)?);
                }
                v
            }
            fam => {
                let fs = self
                    .feature
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("family `{fam:?}` requires `feature`")))?;
                vec![factor(fs, shape_of(fam, self.scale)?, &mut features)?]
            }
        };
        let profile = Profile { coef: self.coef, time_slope: self.time_slope, jump_decay: self.jump_decay, factors };
        Cylinder::new(grid.clone(), features, profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Arc<TimeGrid> {
        Arc::new(TimeGrid::uniform(1.0, 8).unwrap())
    }

    #[test]
    fn shape_derivatives_match_finite_differences() {
        let shapes = [
            Shape::Identity,
            Shape::Tanh(0.7),
            Shape::Sin(1.3),
            Shape::Cos(2.0),
            Shape::Exp(0.4),
            Shape::Square,
            Shape::Bump(1.5),
            Shape::Gauss(0.8),
        ];
        let h = 1e-5;
        for s in shapes {
            for z in [-1.1, -0.3, 0.0, 0.45, 1.2] {
                let (_, d1, d2) = s.eval(z);
                let fd1 = (s.eval(z + h).0 - s.eval(z - h).0) / (2.0 * h);
                let fd2 = (s.eval(z + h).1 - s.eval(z - h).1) / (2.0 * h);
                assert!((d1 - fd1).abs() < 1e-7 * (1.0 + d1.abs()), "{s:?} f' at {z}");
                assert!((d2 - fd2).abs() < 1e-6 * (1.0 + d2.abs()), "{s:?} f'' at {z}");
            }
        }
    }

    #[test]
    fn shape_sup_bounds_hold() {
        for s in [Shape::Tanh(1.7), Shape::Sin(2.0), Shape::Bump(0.9), Shape::Gauss(0.6)] {
            let [b0, b1, b2] = s.sup();
            for i in 0..4001 {
                let z = -4.0 + 8.0 * i as f64 / 4000.0;
                let (f, d1, d2) = s.eval(z);
                assert!(f.abs() <= b0.unwrap() + 1e-12);
                assert!(d1.abs() <= b1.unwrap() + 1e-12, "{s:?}");
                assert!(d2.abs() <= b2.unwrap() + 1e-12, "{s:?}");
            }
        }
    }

    #[test]
    fn window_weights() {
        let g = grid();
        let f = Feature::build(&FeatureSpec::half(), &g).unwrap();
        assert_eq!(f.weights(), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((f.l2_norm - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(Feature::build(&FeatureSpec::terminal(), &g).unwrap().terminal);
        let w = Feature::build(&FeatureSpec::Window { from: 0.1, to: 0.3 }, &g).unwrap();
        assert!((w.weight(1) - 0.2).abs() < 1e-12 && w.weight(2) == 1.0 && (w.weight(3) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn product_gradient_and_hessian() {
        let g = grid();
        let spec = FunctionalSpec {
            family: Family::Product,
            coef: 0.8,
            scale: None,
            feature: None,
            factors: vec![
                FactorSpec { shape: Family::Sin, scale: Some(1.2), feature: FeatureSpec::terminal() },
                FactorSpec { shape: Family::Tanh, scale: Some(0.5), feature: FeatureSpec::half() },
                FactorSpec { shape: Family::Cos, scale: None, feature: FeatureSpec::terminal() },
            ],
            time_slope: 0.3,
            jump_decay: 0.0,
        };
        let c = spec.build(&g).unwrap();
        assert_eq!(c.arity(), 2);
        let z = [0.4, -0.9];
        let mut grad = [0.0; 2];
        c.eval_grad(0.5, &z, &JumpSet::empty(), &mut grad);
        let mut hess = [0.0; 4];
        c.hessian(0.5, &z, &JumpSet::empty(), &mut hess);
        let h = 1e-5;
        for i in 0..2 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fd = (c.eval(0.5, &zp, &JumpSet::empty()) - c.eval(0.5, &zm, &JumpSet::empty())) / (2.0 * h);
            assert!((fd - grad[i]).abs() < 1e-8);
            let mut gp = [0.0; 2];
            let mut gm = [0.0; 2];
            c.eval_grad(0.5, &zp, &JumpSet::empty(), &mut gp);
            c.eval_grad(0.5, &zm, &JumpSet::empty(), &mut gm);
            for j in 0..2 {
                assert!(((gp[j] - gm[j]) / (2.0 * h) - hess[j * 2 + i]).abs() < 1e-7);
            }
        }
        assert!((hess[1] - hess[2]).abs() < 1e-14);
    }

    #[test]
    fn scalar_evaluation_matches_vector() {
        let g = grid();
        let spec = FunctionalSpec {
            family: Family::Product,
            coef: 1.3,
            scale: None,
            feature: None,
            factors: vec![
                FactorSpec { shape: Family::Tanh, scale: Some(2.0), feature: FeatureSpec::terminal() },
                FactorSpec { shape: Family::Cos, scale: Some(0.5), feature: FeatureSpec::terminal() },
            ],
            time_slope: 0.0,
            jump_decay: 0.2,
        };
        let c = spec.build(&g).unwrap();
        assert!(c.is_terminal());
        let jumps = JumpSet::empty();
        for u in [-1.0, 0.2, 0.9] {
            let mut grad = [0.0];
            let v = c.eval_grad(0.0, &[u], &jumps, &mut grad);
            let (vs, ds) = c.eval_scalar(0.0, u, &jumps);
            assert!((v - vs).abs() < 1e-15 && (grad[0] - ds).abs() < 1e-14);
        }
    }

    #[test]
    fn spec_errors_name_the_problem() {
        let g = grid();
        let e = FunctionalSpec::simple(Family::Tanh, 1.0, None, None).build(&g).unwrap_err();
        assert!(e.to_string().contains("feature"));
        let e = FunctionalSpec::simple(Family::Sin, 1.0, None, Some(FeatureSpec::Named("middle".into())))
            .build(&g)
            .unwrap_err();
        assert!(e.to_string().contains("middle"));
    }

    #[test]
    fn bounds_for_tanh_of_terminal() {
        let g = grid();
        let c = Cylinder::of_terminal(g, 0.3, Shape::Tanh(1.0));
        let b = c.bounds_at(0.0);
        assert_eq!(b.sup, Some(0.3));
        assert!((b.grad.unwrap() - 0.3).abs() < 1e-15);
        let lin = Cylinder::of_terminal(grid(), 0.5, Shape::Identity);
        let b = lin.bounds_at(0.0);
        assert_eq!(b.sup, None);
        assert_eq!(b.grad, Some(0.5));
        assert_eq!(b.hess, Some(0.0));
    }
}
