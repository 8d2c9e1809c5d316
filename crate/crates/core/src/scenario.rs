//! Scenario files: the model, coefficients, grid, Monte Carlo budget and
//! tolerances of one experiment, stored as TOML.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{Cylinder, Family, FeatureSpec, FunctionalSpec};
use crate::grid::TimeGrid;
use crate::levy_space::{build_model, BoundFunction, LevyDensity, LevyModel};
use crate::quadrature::QuadratureOptions;
use crate::solution::{CoefficientSet, Hypotheses, JumpCoefficient, SizeProfile};
use crate::transform::{DriftCoefficient, SolverOptions};
use crate::verify::TestFunctional;

pub const TEMPLATES: [&str; 4] = ["adapted-constant", "anticipating-initial", "anticipating-drift", "paper-g-jumps"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Sample,
    Transform,
    Girsanov,
    Solution,
    Verify,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Sample, Suite::Transform, Suite::Girsanov, Suite::Solution, Suite::Verify];

    /// Process exit code when this suite fails.
    pub fn exit_code(self) -> i32 {
        match self {
            Suite::Sample => 10,
            Suite::Transform => 11,
            Suite::Girsanov => 12,
            Suite::Solution => 13,
            Suite::Verify => 14,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sample => "sample",
            Suite::Transform => "transform",
            Suite::Girsanov => "girsanov",
            Suite::Solution => "solution",
            Suite::Verify => "verify",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub steps: usize,
    #[serde(default = "one")]
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub density: LevyDensity,
    pub epsilons: Vec<f64>,
    pub bound: BoundFunction,
    #[serde(default)]
    pub quadrature: QuadratureOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub size: SizeProfile,
    pub factor: FunctionalSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub x0: FunctionalSpec,
    pub b: FunctionalSpec,
    pub a: FunctionalSpec,
    pub v: JumpSpec,
    #[serde(default)]
    pub hypotheses: Hypotheses,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Statistical checks pass when `|lhs − rhs| / pooled se` is below this.
    #[serde(default = "z_limit")]
    pub z_limit: f64,
    /// Exact oracles (closed forms, bookkeeping, representation equivalence).
    #[serde(default = "oracle_rel")]
    pub oracle_rel: f64,
    /// Minimal log-log slope of refinement studies.
    #[serde(default = "slope_min")]
    pub slope_min: f64,
    /// Pathwise inverse and cocycle relations at the scenario grid.
    #[serde(default = "pathwise_rel")]
    pub pathwise_rel: f64,
    /// Continuity diagnostic: slope at least `p − 1 − continuity_slack`.
    #[serde(default = "continuity_slack")]
    pub continuity_slack: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            z_limit: z_limit(),
            oracle_rel: oracle_rel(),
            slope_min: slope_min(),
            pathwise_rel: pathwise_rel(),
            continuity_slack: continuity_slack(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedFunctional {
    pub name: String,
    pub functional: FunctionalSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// Bounded test functionals `G` (also the `F`-bank of the Girsanov identities).
    pub functionals: Vec<NamedFunctional>,
    /// Truncation levels of the duality test; 0 is the full solution.
    pub duality_eps: Vec<f64>,
    /// Truncation levels of the ε-convergence table and of the decomposition.
    #[serde(default)]
    pub convergence_eps: Vec<f64>,
    #[serde(default)]
    pub refinement_levels: Vec<usize>,
    #[serde(default = "refinement_paths")]
    pub refinement_paths: usize,
    #[serde(default = "continuity_p")]
    pub continuity_p: f64,
    #[serde(default = "continuity_paths")]
    pub continuity_paths: usize,
    /// Paths for the pathwise bound checks.
    #[serde(default = "bound_paths")]
    pub bound_paths: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub model: ModelSpec,
    pub coefficients: CoefficientSpec,
    pub mc: McSpec,
    #[serde(default)]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub verify: VerifySpec,
}

fn one() -> f64 {
    1.0
}
fn z_limit() -> f64 {
    3.0
}
fn oracle_rel() -> f64 {
    1e-10
}
fn slope_min() -> f64 {
    0.8
}
fn pathwise_rel() -> f64 {
    1e-4
}
fn continuity_slack() -> f64 {
    0.3
}
fn refinement_paths() -> usize {
    100_000
}
fn continuity_p() -> f64 {
    3.0
}
fn continuity_paths() -> usize {
    10_000
}
fn bound_paths() -> usize {
    1_000
}

/// A scenario with every object built on its grid.
pub struct Built {
    pub grid: Arc<TimeGrid>,
    pub model: Arc<LevyModel>,
    pub coeffs: CoefficientSet,
    pub functionals: Vec<TestFunctional>,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: &str| Err(Error::Config(format!("`{key}`: {why}")));
        if self.grid.steps == 0 {
            return bad("grid.steps", "must be positive");
        }
        if !(self.grid.horizon > 0.0) {
            return bad("grid.horizon", "must be positive");
        }
        if self.mc.paths < 2 {
            return bad("mc.paths", "need at least 2 paths for a standard error");
        }
        if self.verify.duality_eps.iter().any(|&e| !(e >= 0.0)) {
            return bad("verify.duality_eps", "levels must be non-negative");
        }
        if self.verify.convergence_eps.iter().any(|&e| !(e > 0.0)) {
            return bad("verify.convergence_eps", "levels must be positive");
        }
        if self.verify.refinement_levels.iter().any(|&m| m == 0 || self.grid.steps % m != 0) {
            return bad("verify.refinement_levels", "every level must divide grid.steps");
        }
        if self.verify.functionals.is_empty() {
            return bad("verify.functionals", "at least one test functional is required");
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<LevyModel> {
        let m = &self.model;
        build_model(m.density.clone(), m.epsilons.clone(), m.quadrature, m.bound.clone())
    }

    /// Coefficients and test functionals on `grid`.
    pub fn build_on(&self, grid: &Arc<TimeGrid>) -> Result<(CoefficientSet, Vec<TestFunctional>)> {
        let c = &self.coefficients;
        let named = |key: &str, spec: &FunctionalSpec| spec.build(grid).map_err(|e| Error::Config(format!("`coefficients.{key}`: {e}")));
        let coeffs = CoefficientSet {
            x0: named("x0", &c.x0)?,
            b: named("b", &c.b)?,
            a: DriftCoefficient::new(named("a", &c.a)?),
            v: JumpCoefficient { size: c.v.size.clone(), factor: named("v.factor", &c.v.factor)?, bound: self.model.bound.clone() },
            hypotheses: c.hypotheses,
        };
        let functionals = self
            .verify
            .functionals
            .iter()
            .map(|f| Ok((f.name.clone(), f.functional.build(grid).map_err(|e| Error::Config(format!("`verify.functionals.{}`: {e}", f.name)))?)))
            .collect::<Result<Vec<(String, Cylinder)>>>()?;
        Ok((coeffs, functionals))
    }

    pub fn build(&self) -> Result<Built> {
        let grid = Arc::new(TimeGrid::uniform(self.grid.horizon, self.grid.steps)?);
        let model = Arc::new(self.build_model()?);
        let (coeffs, functionals) = self.build_on(&grid)?;
        Ok(Built { grid, model, coeffs, functionals })
    }

    /// The smallest truncation level the sampler must reach.
    pub fn eps_cut(&self) -> f64 {
        self.model.epsilons.iter().copied().fold(1.0, f64::min)
    }
}

fn terminal(family: Family, coef: f64, scale: Option<f64>) -> FunctionalSpec {
    FunctionalSpec::simple(family, coef, scale, Some(FeatureSpec::terminal()))
}

fn standard_functionals() -> Vec<NamedFunctional> {
    vec![
        NamedFunctional { name: "sin_terminal".into(), functional: terminal(Family::Sin, 1.0, None) },
        NamedFunctional { name: "cos_half".into(), functional: FunctionalSpec::simple(Family::Cos, 1.0, None, Some(FeatureSpec::half())) },
        NamedFunctional { name: "bump_half".into(), functional: FunctionalSpec::simple(Family::Bump, 1.0, Some(1.5), Some(FeatureSpec::half())) },
    ]
}

/// A complete scenario for one of [`TEMPLATES`].
pub fn template(name: &str) -> Result<Scenario> {
    let all = Hypotheses { h1: true, h2: true, h3: true, h4: true };
    let band = ModelSpec {
        density: LevyDensity::UniformBand { lo: 1.0, hi: 2.0, mass: 2.0, symmetric: false },
        epsilons: vec![1.0],
        bound: BoundFunction::QuadraticCap { beta: 0.5, k1: 1.2, k2: 0.3 },
        quadrature: QuadratureOptions::default(),
    };
    let constant_coeffs = CoefficientSpec {
        x0: FunctionalSpec::constant(1.0),
        b: FunctionalSpec::constant(0.1),
        a: FunctionalSpec::constant(0.2),
        v: JumpSpec { size: SizeProfile::Indicator { value: 0.3, threshold: 1.0 }, factor: FunctionalSpec::constant(1.0) },
        hypotheses: all,
    };
    let verify = VerifySpec {
        functionals: standard_functionals(),
        duality_eps: vec![1.0],
        convergence_eps: vec![],
        refinement_levels: vec![32, 64, 128, 256],
        refinement_paths: refinement_paths(),
        continuity_p: continuity_p(),
        continuity_paths: continuity_paths(),
        bound_paths: bound_paths(),
    };
    let base = Scenario {
        name: name.to_string(),
        grid: GridSpec { steps: 256, horizon: 1.0 },
        model: band,
        coefficients: constant_coeffs,
        mc: McSpec { paths: 100_000, seed: 20_240_917, solver: SolverOptions::sweep() },
        suites: Suite::ALL.to_vec(),
        tolerances: Tolerances::default(),
        verify,
    };
    let s = match name {
        "adapted-constant" => base,
        "anticipating-initial" => {
            let mut s = base;
            s.coefficients.x0 = terminal(Family::Cos, 1.0, None);
            s.mc.seed += 1;
            s
        }
        "anticipating-drift" => {
            let mut s = base;
            s.coefficients.a = terminal(Family::Linear, 0.2, None);
            s.mc.seed += 2;
            s
        }
        "paper-g-jumps" => {
            let mut s = base;
            s.model = ModelSpec {
                density: LevyDensity::SymmetricPower { coefficient: 1.0, exponent: 1.5, support: 2.0 },
                epsilons: vec![1.0, 0.5, 0.25, 0.1, 0.05, 0.025, 0.01, 0.005],
                bound: BoundFunction::QuadraticCap { beta: 0.5, k1: 1.0, k2: 0.25 },
                quadrature: QuadratureOptions::default(),
            };
            s.coefficients.a = terminal(Family::Tanh, 0.3, None);
            s.coefficients.v = JumpSpec { size: SizeProfile::Bound { scale: 1.0 }, factor: terminal(Family::Cos, 1.0, None) };
            s.verify.duality_eps = vec![0.1, 0.0];
            s.verify.convergence_eps = vec![1.0, 0.5, 0.25, 0.1, 0.05];
            s.mc.seed += 3;
            s
        }
        other => return Err(Error::UnknownTemplate(other.to_string())),
    };
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_round_trip() {
        for name in TEMPLATES {
            let s = template(name).unwrap();
            let text = s.to_toml().unwrap();
            let back = Scenario::from_toml(&text).unwrap();
            assert_eq!(back, s, "{name}");
            assert_eq!(back.to_toml().unwrap(), text);
            back.build().unwrap();
        }
    }

    #[test]
    fn unknown_template_is_rejected() {
        assert!(matches!(template("nope"), Err(Error::UnknownTemplate(_))));
    }

    #[test]
    fn unknown_key_is_named() {
        let mut text = template("adapted-constant").unwrap().to_toml().unwrap();
        text = text.replacen("[grid]\n", "[grid]\nstepz = 3\n", 1);
        match Scenario::from_toml(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("stepz"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_are_named() {
        let mut s = template("adapted-constant").unwrap();
        s.verify.refinement_levels = vec![3];
        match Scenario::from_toml(&s.to_toml().unwrap()) {
            Err(Error::Config(msg)) => assert!(msg.contains("verify.refinement_levels"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn g_jumps_template_bound_function() {
        let s = template("paper-g-jumps").unwrap();
        let g = &s.model.bound;
        assert!((g.eval(0.3) - 0.09).abs() < 1e-15);
        assert_eq!(g.eval(0.7), 0.25);
    }
}
