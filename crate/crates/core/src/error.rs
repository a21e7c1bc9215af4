use thiserror::Error;

use crate::model::{Dir, State};

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid random walk: {0}")]
    InvalidWalk(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no intersection of Q with {0} found in (0,1)^2")]
    NoIntersection(&'static str),

    #[error("total mass {0} of the geometric sum is not positive")]
    DegenerateMass(f64),

    #[error("geometric sum is not a probability measure: {0}")]
    NotPositive(String),

    #[error("unsupported reward `{0}`")]
    UnsupportedReward(String),

    #[error("term {index} is not on Q (residual {residual:e})")]
    NotOnQ { index: usize, residual: f64 },

    #[error("negative rate {rate:e} at {state} in direction {dir}")]
    NegativeRate { state: State, dir: Dir, rate: f64 },

    #[error("coefficient c_{index} = {value} is not positive")]
    NegativeCoefficient { index: usize, value: f64 },

    #[error("threshold precondition violated: {0}")]
    ThresholdViolated(String),

    #[error("singular linear system")]
    SingularSystem,

    #[error("iteration did not converge (residual {residual:e} after {iterations} sweeps)")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("bound violated: |F_bar - F| exceeds bound + allowance by {margin:e}")]
    BoundViolated { margin: f64 },

    #[error("ill-posed bias LP: multiplier of {variable} is negative ({value:e})")]
    IllPosed { variable: String, value: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
