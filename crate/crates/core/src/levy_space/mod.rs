//! The canonical Lévy space: a layered Lévy measure, its compound-Poisson
//! sampler and pathwise Poisson integrals.
//!
//! Layers are `S_1 = {|y| > 1}` and `S_n = {ε_n < |y| <= ε_{n-1}}`. Sizes inside a
//! layer are drawn by inverting a tabulated CDF built by quadrature.

mod bound;
mod density;

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

pub use bound::BoundFunction;
pub use density::LevyDensity;

use crate::error::{Error, Result};
use crate::grid::{sample_wiener, TimeGrid, WienerPath};
use crate::quadrature::{integrate, integrate_near_zero, Integral, QuadratureOptions};

/// Points per tabulated CDF (per layer and side).
pub const CDF_POINTS: usize = 1024;

#[derive(Clone, Debug)]
struct SideTable {
    sign: f64,
    lo: f64,
    hi: f64,
    mass: f64,
    /// Cumulative mass at `CDF_POINTS` equispaced points of the table coordinate.
    cdf: Vec<f64>,
}

impl SideTable {
    fn coord_to_abs(&self, u: f64) -> f64 {
        if self.hi.is_finite() {
            self.lo + u * (self.hi - self.lo)
        } else {
            let u = u.min(1.0 - 1e-12);
            self.lo + u / (1.0 - u)
        }
    }

    fn invert(&self, target: f64) -> f64 {
        let n = self.cdf.len() - 1;
        let i = self.cdf.partition_point(|&c| c < target).clamp(1, n);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let frac = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        let u = ((i - 1) as f64 + frac) / n as f64;
        // Keep the draw strictly inside the layer.
        let a = self.coord_to_abs(u).clamp(self.lo, self.hi);
        let a = if a <= self.lo { self.lo + (self.lo.abs() + 1.0) * 1e-15 } else { a };
        self.sign * a
    }
}

/// One retained layer of the Lévy measure.
#[derive(Clone, Debug)]
pub struct Layer {
    /// 1-based layer number in the ε-sequence.
    pub index: usize,
    /// Lower edge ε_n (exclusive).
    pub lower: f64,
    /// Upper edge ε_{n-1} (inclusive), infinite for the first layer.
    pub upper: f64,
    pub intensity: f64,
    sides: Vec<SideTable>,
}

impl Layer {
    pub fn contains(&self, y: f64) -> bool {
        let a = y.abs();
        a > self.lower && a <= self.upper
    }

    fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut target = rng.random::<f64>() * self.intensity;
        for side in &self.sides {
            if target < side.mass || std::ptr::eq(side, self.sides.last().expect("sides")) {
                return side.invert(target.min(side.mass));
            }
            target -= side.mass;
        }
        unreachable!("layer without sides")
    }
}

/// A Lévy measure with its layer decomposition and dominating function.
#[derive(Clone, Debug)]
pub struct LevyModel {
    pub density: LevyDensity,
    pub epsilons: Vec<f64>,
    pub layers: Vec<Layer>,
    /// Layers of zero mass that were dropped (1-based indices).
    pub dropped_layers: Vec<usize>,
    pub bound: BoundFunction,
    pub quadrature: QuadratureOptions,
    /// Optional triplet components, carried but not used by the equation.
    pub gamma: f64,
    pub sigma: f64,
    /// `∫ x² ν(dx)`.
    pub second_moment: f64,
}

fn layer_edges(eps: &[f64], n: usize) -> (f64, f64) {
    // n is 1-based
    let lower = eps[n - 1];
    let upper = if n == 1 { f64::INFINITY } else { eps[n - 2] };
    (lower, upper)
}

pub fn build_model(
    density: LevyDensity,
    epsilons: Vec<f64>,
    quadrature: QuadratureOptions,
    bound: BoundFunction,
) -> Result<LevyModel> {
    density.validate().map_err(Error::InvalidInput)?;
    if epsilons.first() != Some(&1.0) {
        return Err(Error::InvalidInput("ε-sequence must start with ε_1 = 1".into()));
    }
    if epsilons.windows(2).any(|w| !(w[1] < w[0])) || epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidInput("ε-sequence must be positive and strictly decreasing".into()));
    }

    let probe = LevyModel {
        density: density.clone(),
        epsilons: epsilons.clone(),
        layers: vec![],
        dropped_layers: vec![],
        bound: bound.clone(),
        quadrature,
        gamma: 0.0,
        sigma: 0.0,
        second_moment: 0.0,
    };
    let second_moment = match probe.integrate_measure(&|y| y * y, 0.0) {
        Ok(Integral::Finite(v)) => v,
        Ok(Integral::Divergent) => {
            return Err(Error::NonIntegrableMeasure("∫x²ν(dx) diverges".into()));
        }
        Err(e) => return Err(Error::NonIntegrableMeasure(e.to_string())),
    };
    let tail_mass = probe.integrate_measure(&|_| 1.0, 1.0)?;
    if !tail_mass.is_finite() {
        return Err(Error::NonIntegrableMeasure("ν({|y| > 1}) is infinite".into()));
    }

    let mut layers = Vec::new();
    let mut dropped = Vec::new();
    for n in 1..=epsilons.len() {
        let (lower, upper) = layer_edges(&epsilons, n);
        let mut sides = Vec::new();
        for sign in [1.0, -1.0] {
            if sign < 0.0 && !density.has_negative_side() {
                continue;
            }
            if let Some(side) = build_side(&density, sign, lower, upper, &quadrature)? {
                sides.push(side);
            }
        }
        let intensity: f64 = sides.iter().map(|s| s.mass).sum();
        if intensity > 0.0 {
            layers.push(Layer { index: n, lower, upper, intensity, sides });
        } else {
            dropped.push(n);
        }
    }
    if layers.is_empty() {
        return Err(Error::EmptyLayer);
    }
    Ok(LevyModel { layers, dropped_layers: dropped, second_moment, ..probe })
}

fn build_side(
    density: &LevyDensity,
    sign: f64,
    lower: f64,
    upper: f64,
    opts: &QuadratureOptions,
) -> Result<Option<SideTable>> {
    let (slo, shi) = density.abs_support();
    let lo = lower.max(slo);
    let hi = upper.min(shi);
    if !(hi > lo) {
        return Ok(None);
    }
    let n = CDF_POINTS - 1;
    let mut cdf = Vec::with_capacity(CDF_POINTS);
    cdf.push(0.0);
    let mut acc = 0.0;
    let table = SideTable { sign, lo, hi, mass: 0.0, cdf: vec![] };
    for i in 0..n {
        let a = table.coord_to_abs(i as f64 / n as f64);
        let b = if i + 1 == n { hi } else { table.coord_to_abs((i + 1) as f64 / n as f64) };
        let piece = integrate(|u| density.eval(sign * u), a, b, opts)?;
        acc += piece.value.max(0.0);
        cdf.push(acc);
    }
    if acc <= 0.0 {
        return Ok(None);
    }
    Ok(Some(SideTable { mass: acc, cdf, ..table }))
}

impl LevyModel {
    /// Layers whose lower edge is at least `eps_cut`.
    pub fn layers_above(&self, eps_cut: f64) -> impl Iterator<Item = &Layer> {
        self.layers.iter().filter(move |l| l.lower >= eps_cut)
    }

    /// Smallest retained ε.
    pub fn eps_min(&self) -> f64 {
        self.layers.last().expect("non-empty").lower
    }

    pub fn layer_of(&self, y: f64) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(y))
    }

    fn breakpoints(&self) -> Vec<f64> {
        let (lo, hi) = self.density.abs_support();
        let mut b: Vec<f64> = self.epsilons.clone();
        b.extend([lo, hi]);
        b.extend(self.bound.breakpoints());
        b.retain(|x| x.is_finite() && *x > 0.0);
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    fn two_sided<'a>(&'a self, phi: &'a dyn Fn(f64) -> f64) -> impl Fn(f64) -> f64 + 'a {
        move |u: f64| {
            let mut s = phi(u) * self.density.eval(u);
            if self.density.has_negative_side() {
                s += phi(-u) * self.density.eval(-u);
            }
            s
        }
    }

    /// `∫_{|y| > eps} φ(y) ν(dy)`; `eps = 0` integrates over ℝ∖{0} and may diverge.
    pub fn integrate_measure(&self, phi: &dyn Fn(f64) -> f64, eps: f64) -> Result<Integral> {
        let f = self.two_sided(phi);
        let (slo, shi) = self.density.abs_support();
        let mut total = 0.0;
        let start = if eps > 0.0 { eps.max(slo) } else { 1.0f64.max(slo) };
        if eps <= 0.0 && slo < 1.0 {
            match integrate_near_zero(|u| if u > slo { f(u) } else { 0.0 }, 1.0, &self.quadrature)? {
                Integral::Finite(v) => total += v,
                Integral::Divergent => return Ok(Integral::Divergent),
            }
        }
        if shi > start {
            let mut cuts: Vec<f64> = vec![start];
            cuts.extend(self.breakpoints().into_iter().filter(|&b| b > start && b < shi));
            cuts.push(shi);
            for w in cuts.windows(2) {
                let e = integrate(&f, w[0], w[1], &self.quadrature)?;
                total += e.value;
            }
        }
        if total.is_finite() {
            Ok(Integral::Finite(total))
        } else {
            Ok(Integral::Divergent)
        }
    }

    /// `ν({|y| > eps})`.
    pub fn mass_above(&self, eps: f64) -> Result<f64> {
        match self.integrate_measure(&|_| 1.0, eps)? {
            Integral::Finite(v) => Ok(v),
            Integral::Divergent => Err(Error::QuadratureFailure(format!("ν(|y| > {eps}) is infinite"))),
        }
    }

    /// Write the per-layer tabulated CDFs as CSV `(layer, side, y, cdf)`.
    pub fn write_cdf_tables<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["layer", "side", "y", "cdf"])?;
        for layer in &self.layers {
            for side in &layer.sides {
                let n = side.cdf.len() - 1;
                for (i, c) in side.cdf.iter().enumerate() {
                    let y = side.sign * side.coord_to_abs(i as f64 / n as f64);
                    w.write_record([
                        layer.index.to_string(),
                        if side.sign > 0.0 { "+" } else { "-" }.to_string(),
                        format!("{y:.12e}"),
                        format!("{:.12e}", c / layer.intensity),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Tabulated (interpolated) CDF of `Q_n` at `y`, as used by the sampler.
    pub fn layer_table_cdf(&self, layer: usize, y: f64) -> f64 {
        let l = &self.layers[layer];
        let mut acc = 0.0;
        for side in &l.sides {
            // mass of this side lying below y
            let below = if side.sign < 0.0 {
                if y >= -side.lo {
                    side.mass
                } else if y <= -side.hi {
                    0.0
                } else {
                    side.mass - side_cdf_abs(side, -y)
                }
            } else if y <= side.lo {
                0.0
            } else {
                side_cdf_abs(side, y)
            };
            acc += below;
        }
        acc / l.intensity
    }
}

fn side_cdf_abs(side: &SideTable, a: f64) -> f64 {
    let n = (side.cdf.len() - 1) as f64;
    let u = if side.hi.is_finite() {
        (a - side.lo) / (side.hi - side.lo)
    } else {
        let d = a - side.lo;
        d / (1.0 + d)
    };
    let x = (u * n).clamp(0.0, n);
    let i = (x.floor() as usize).min(side.cdf.len() - 2);
    let f = x - i as f64;
    side.cdf[i] + f * (side.cdf[i + 1] - side.cdf[i])
}

/// One jump `(τ, y)` of the Poisson random measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    /// 1-based layer number.
    pub layer: usize,
}

/// Time-ordered jumps of one path.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JumpSet {
    jumps: Vec<Jump>,
}

impl JumpSet {
    pub const fn empty() -> Self {
        Self { jumps: Vec::new() }
    }

    /// Build from arbitrary jumps; sorts by time and rejects ties.
    pub fn new(mut jumps: Vec<Jump>) -> Result<Self> {
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
        if jumps.windows(2).any(|w| w[0].time == w[1].time) {
            return Err(Error::InvalidInput("jump times must be distinct".into()));
        }
        Ok(Self { jumps })
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }
    pub fn len(&self) -> usize {
        self.jumps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }
    pub fn count_in_layer(&self, layer: usize) -> usize {
        self.jumps.iter().filter(|j| j.layer == layer).count()
    }
    /// `N_t^ε`: jumps with `τ <= t` and `|y| > eps`.
    pub fn count(&self, eps: f64, t: f64) -> usize {
        self.jumps.iter().filter(|j| j.time <= t && j.size.abs() > eps).count()
    }
    /// Jumps of size above `eps`.
    pub fn above(&self, eps: f64) -> JumpSet {
        JumpSet { jumps: self.jumps.iter().copied().filter(|j| j.size.abs() > eps).collect() }
    }
}

/// One point `ω = (ω′, ω″)` of the canonical space.
#[derive(Clone, Debug)]
pub struct SamplePath {
    pub wiener: WienerPath,
    pub jumps: JumpSet,
}

impl SamplePath {
    pub fn new(wiener: WienerPath, jumps: JumpSet) -> Result<Self> {
        let t = wiener.grid().horizon();
        if jumps.jumps().iter().any(|j| !(j.time > 0.0 && j.time <= t)) {
            return Err(Error::InvalidInput("jump times must lie in (0, T]".into()));
        }
        Ok(Self { wiener, jumps })
    }
    pub fn grid(&self) -> &Arc<TimeGrid> {
        self.wiener.grid()
    }
}

/// Sample the jumps of every layer with `ε_n >= eps_cut` on `(0, T]`.
pub fn sample_jumps<R: Rng + ?Sized>(model: &LevyModel, grid: &TimeGrid, rng: &mut R, eps_cut: f64) -> JumpSet {
    let horizon = grid.horizon();
    let mut jumps = Vec::new();
    for layer in model.layers_above(eps_cut) {
        let mean = layer.intensity * horizon;
        let count = Poisson::new(mean).map(|p| p.sample(rng) as usize).unwrap_or(0);
        for _ in 0..count {
            let time = horizon * (1.0 - rng.random::<f64>());
            let size = layer.sample_size(rng);
            jumps.push(Jump { time, size, layer: layer.index });
        }
    }
    jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    // Ties have probability zero; redraw the later time if one occurs.
    while let Some(i) = jumps.windows(2).position(|w| w[0].time == w[1].time) {
        jumps[i + 1].time = horizon * (1.0 - rng.random::<f64>());
        jumps.sort_by(|a, b| a.time.total_cmp(&b.time));
    }
    JumpSet { jumps }
}

/// Sample `(ω′, ω″)` with jumps down to `eps_cut`.
pub fn sample_path<R: Rng + ?Sized>(model: &LevyModel, grid: &Arc<TimeGrid>, rng: &mut R, eps_cut: f64) -> SamplePath {
    let wiener = sample_wiener(grid, rng);
    let jumps = sample_jumps(model, grid, rng, eps_cut);
    SamplePath { wiener, jumps }
}

/// `Σ_{τ_i <= t, |y_i| > eps} v(τ_i, y_i)`.
pub fn poisson_integral(jumps: &JumpSet, v: &dyn Fn(f64, f64) -> f64, eps: f64, t: f64) -> f64 {
    jumps
        .jumps()
        .iter()
        .filter(|j| j.time <= t && j.size.abs() > eps)
        .map(|j| v(j.time, j.size))
        .sum()
}

/// `∫_0^t ∫_{|y| > eps} v(s, y) ν(dy) ds`; `eps = 0` integrates over all of ℝ∖{0}.
pub fn compensator_integral(model: &LevyModel, v: &dyn Fn(f64, f64) -> f64, eps: f64, t: f64) -> Result<f64> {
    if t <= 0.0 {
        return Ok(0.0);
    }
    let failure = std::cell::RefCell::new(None);
    let inner = |s: f64| -> f64 {
        match model.integrate_measure(&|y| v(s, y), eps) {
            Ok(Integral::Finite(x)) => x,
            Ok(Integral::Divergent) => {
                failure.borrow_mut().get_or_insert(Error::QuadratureFailure(format!(
                    "compensator integrand not ν-integrable above {eps}"
                )));
                0.0
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let outer = integrate(inner, 0.0, t, &model.quadrature);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(outer?.value)
}

/// Quadrature summary of the integrability hypotheses on `g`.
#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    pub int_g: Integral,
    pub int_g2: Integral,
    pub int_exp_g: Integral,
    pub int_exp_2g: Integral,
    /// `max(|g(y)|, |g(-y)|)` at the smallest probe point.
    pub g_near_zero: f64,
    /// `∫g dν < ∞`, `∫g² dν < ∞` and `g(y) → 0` as `y → 0`.
    pub dominated: bool,
    pub exp_integrable: bool,
    pub exp2_integrable: bool,
}

pub fn hypothesis_report(model: &LevyModel) -> Result<HypothesisReport> {
    let g = |y: f64| model.bound.eval(y);
    let int_g = model.integrate_measure(&|y| g(y).abs(), 0.0)?;
    let int_g2 = model.integrate_measure(&|y| g(y) * g(y), 0.0)?;
    let int_exp_g = model.integrate_measure(&|y| g(y).exp_m1(), 0.0)?;
    let int_exp_2g = model.integrate_measure(&|y| (2.0 * g(y)).exp_m1(), 0.0)?;
    let mut g_near_zero = f64::NAN;
    for k in 1..=12 {
        let y = 10f64.powi(-k);
        g_near_zero = g(y).abs().max(g(-y).abs());
    }
    let limit_zero = g_near_zero < 1e-6;
    Ok(HypothesisReport {
        dominated: int_g.is_finite() && int_g2.is_finite() && limit_zero,
        exp_integrable: int_exp_g.is_finite(),
        exp2_integrable: int_exp_2g.is_finite(),
        int_g,
        int_g2,
        int_exp_g,
        int_exp_2g,
        g_near_zero,
    })
}

#[cfg(test)]
mod tests;
