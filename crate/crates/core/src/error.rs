use thiserror::Error;

use crate::levy_model::Regime;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// d̄ > 0 lies outside the regimes handled here.
    #[error("dbar = {dbar:e} is positive; only dbar <= 0 is supported")]
    DbarPositive { dbar: f64 },

    #[error("regime mismatch: operation requires {expected:?}, model is {found:?}")]
    RegimeMismatch { expected: Regime, found: Regime },

    #[error("series truncation failed: {terms} terms leave tail mass {tail:e}")]
    TruncationFailure { terms: usize, tail: f64 },

    #[error("root bracketing failed at theta = {theta:e}: {detail}")]
    RootBracketFailure { theta: f64, detail: String },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("no active exercise node at theta = {theta:e}; grid too coarse")]
    DegenerateBoundary { theta: f64 },

    #[error("unknown obstacle solver '{name}' (registered: {known})")]
    UnknownSolver { name: String, known: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
