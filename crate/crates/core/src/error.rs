use std::path::PathBuf;

use thiserror::Error;

/// Failure of a Krylov solve.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("linear solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("BiCGStab breakdown at iteration {iteration} (rho = {rho:e})")]
    Breakdown { iteration: usize, rho: f64 },
    #[error("right-hand side incompatible with constant null space (volume sum {sum:e})")]
    Incompatible { sum: f64 },
    #[error("non-finite value encountered in linear solve")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("step {step}: {source}")]
    StepSolve { step: u64, source: SolveError },
    #[error("step {step}: Picard iteration did not converge after {iterations} iterations (change {change:e})")]
    PicardNonConvergence { step: u64, iterations: usize, change: f64 },
    #[error("step {step}: non-finite values in field `{field}`")]
    NonFinite { step: u64, field: &'static str },
    #[error("config line {line}: {message}")]
    ConfigSyntax { line: usize, message: String },
    #[error("config: {0}")]
    ConfigInvalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("csv: {0}")]
    Csv(String),
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Grid(_) => "grid",
            Error::Params(_) => "params",
            Error::InitialData(_) => "initial_data",
            Error::Solve(_) => "solve",
            Error::StepSolve { .. } => "step_solve",
            Error::PicardNonConvergence { .. } => "picard_nonconvergence",
            Error::NonFinite { .. } => "non_finite",
            Error::ConfigSyntax { .. } => "config_syntax",
            Error::ConfigInvalid(_) => "config_invalid",
            Error::Io { .. } => "io",
            Error::Checkpoint(_) => "checkpoint",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
