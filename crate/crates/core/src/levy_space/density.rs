use serde::{Deserialize, Serialize};

/// Named Lévy densities on ℝ∖{0}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevyDensity {
    /// Total mass `mass` spread uniformly over `lo < |y| <= hi`, on the positive
    /// side only unless `symmetric`.
    UniformBand {
        lo: f64,
        hi: f64,
        mass: f64,
        #[serde(default)]
        symmetric: bool,
    },
    /// `coefficient · |y|^{-exponent}` on `0 < |y| <= support`.
    SymmetricPower { coefficient: f64, exponent: f64, support: f64 },
    /// `coefficient · e^{-decay |y|} |y|^{-1-alpha}`, symmetric.
    TemperedStable { coefficient: f64, alpha: f64, decay: f64 },
    /// `mass` times the normal density with the given mean and standard deviation.
    Gaussian { mass: f64, mean: f64, std: f64 },
}

impl LevyDensity {
    pub fn eval(&self, y: f64) -> f64 {
        let a = y.abs();
        match *self {
            LevyDensity::UniformBand { lo, hi, mass, symmetric } => {
                if a <= lo || a > hi || (!symmetric && y < 0.0) {
                    0.0
                } else if symmetric {
                    0.5 * mass / (hi - lo)
                } else {
                    mass / (hi - lo)
                }
            }
            LevyDensity::SymmetricPower { coefficient, exponent, support } => {
                if a == 0.0 || a > support {
                    0.0
                } else {
                    coefficient * a.powf(-exponent)
                }
            }
            LevyDensity::TemperedStable { coefficient, alpha, decay } => {
                if a == 0.0 {
                    0.0
                } else {
                    coefficient * (-decay * a).exp() * a.powf(-1.0 - alpha)
                }
            }
            LevyDensity::Gaussian { mass, mean, std } => {
                let z = (y - mean) / std;
                mass * (-0.5 * z * z).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
            }
        }
    }

    /// Range of `|y|` outside which the density vanishes.
    pub fn abs_support(&self) -> (f64, f64) {
        match *self {
            LevyDensity::UniformBand { lo, hi, .. } => (lo, hi),
            LevyDensity::SymmetricPower { support, .. } => (0.0, support),
            _ => (0.0, f64::INFINITY),
        }
    }

    pub fn has_negative_side(&self) -> bool {
        !matches!(self, LevyDensity::UniformBand { symmetric: false, .. })
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            LevyDensity::UniformBand { lo, hi, mass, .. } => lo >= 0.0 && hi > lo && mass >= 0.0 && hi.is_finite(),
            LevyDensity::SymmetricPower { coefficient, exponent, support } => {
                coefficient >= 0.0 && exponent.is_finite() && support > 0.0
            }
            LevyDensity::TemperedStable { coefficient, alpha, decay } => {
                coefficient >= 0.0 && alpha < 2.0 && decay > 0.0
            }
            LevyDensity::Gaussian { mass, std, mean } => mass >= 0.0 && std > 0.0 && mean.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid density parameters: {self:?}"))
        }
    }
}
