use serde::{Deserialize, Serialize};

/// Dominating function `g` with `|v_s(y, ω)| <= g(y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundFunction {
    Zero,
    Constant { value: f64 },
    /// `k1 y²` on `(-beta, beta)`, `k2` elsewhere.
    QuadraticCap { beta: f64, k1: f64, k2: f64 },
    /// `coefficient · |y|^{-power}`.
    InversePower { coefficient: f64, power: f64 },
}

impl BoundFunction {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            BoundFunction::Zero => 0.0,
            BoundFunction::Constant { value } => value,
            BoundFunction::QuadraticCap { beta, k1, k2 } => {
                if y.abs() < beta {
                    k1 * y * y
                } else {
                    k2
                }
            }
            BoundFunction::InversePower { coefficient, power } => coefficient * y.abs().powf(-power),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            BoundFunction::QuadraticCap { beta, .. } => vec![beta],
            _ => vec![],
        }
    }
}
