use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Fock configuration: {0}")]
    InvalidConfig(String),
    #[error("mode index {index} out of range for {n_modes} modes")]
    InvalidModeIndex { index: usize, n_modes: usize },
    #[error("configuration has no mode labelled {0:?}")]
    MissingMode(String),
    #[error("operands live on different Fock spaces")]
    ConfigMismatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot compose an empty operator list")]
    EmptyComposition,
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("system is unstable (r = {r} >= 1)")]
    Unstable { r: f64 },
    #[error("instability parameter zeta is zero")]
    ZetaZero,
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("trace drift {drift:e} exceeds bound {bound:e} at t = {t}")]
    TraceDrift { t: f64, drift: f64, bound: f64 },
    #[error("stationary state is not unique (residual {residual:e})")]
    DegenerateNullSpace { residual: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("population {population:e} below floor {floor:e}; g2 undefined")]
    PopulationBelowFloor { population: f64, floor: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
