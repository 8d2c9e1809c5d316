use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("Lévy measure is not square-integrable: {0}")]
    NonIntegrableMeasure(String),
    #[error("every layer of the Lévy measure has zero mass")]
    EmptyLayer,
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("functional has no derivative evaluator and finite differences are disabled")]
    MissingDerivative,
    #[error("fixed point not reached after {iterations} iterations (defect {defect:e})")]
    NoConvergence { iterations: usize, defect: f64 },
    #[error("paths live on different grids")]
    GridMismatch,
    #[error("jump factor 1 + v = {factor} is not positive at time {time}")]
    ProductDegenerate { time: f64, factor: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
