use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: partial value {partial} with error estimate {error}")]
    Quadrature { partial: f64, error: f64 },

    #[error("result overflows f64; log-value is {ln_value}")]
    Overflow { ln_value: f64 },

    #[error("({t}, {x}) lies outside the simulation window [0, {t_max}] x [0, {x_max}]")]
    OutsideWindow {
        t: f64,
        x: f64,
        t_max: f64,
        x_max: f64,
    },

    #[error("population was truncated at the atom cap; statistics refuse it")]
    TruncatedPopulation,

    #[error("unknown atom id {0}")]
    UnknownAtom(usize),

    #[error("insufficient samples: got {got}, need {need}")]
    InsufficientSamples { got: usize, need: usize },

    #[error("non-finite sample weight at replica {0}")]
    NonFiniteWeight(usize),

    #[error("functional support exceeds window: {0}")]
    Unsupported(String),

    #[error("infeasible run: expected atom count {expected:.4e} exceeds cap {cap}")]
    Infeasible { expected: f64, cap: usize },

    #[error("censoring fraction {fraction:.3} at generation {generation} exceeds 0.5")]
    Censored { generation: u32, fraction: f64 },

    #[error("unknown experiment `{0}`")]
    UnknownExperiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
