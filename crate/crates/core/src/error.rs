use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} requires a positive argument, got {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("particles {i} and {j} coincide")]
    CoincidentParticles { i: usize, j: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("integration diverged at step {step}")]
    Divergence { step: usize },

    #[error("|m0| = {speed} violates the flock speed constraint sqrt(alpha/beta) = {expected}")]
    SpeedConstraint { speed: f64, expected: f64 },

    #[error("stationary state not reached: residual {residual:e} above tolerance {tol:e}")]
    NotStationary { residual: f64, tol: f64 },

    #[error("zero velocity for particle {0}")]
    ZeroVelocity(usize),

    #[error("generalized-eigenvector checks disagree (multiplicity test: {multiplicity}, rank test: {rank}); adjust tolerances")]
    ToleranceDisagreement { multiplicity: bool, rank: bool },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
