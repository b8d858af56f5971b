use thiserror::Error;

/// Errors across the simulation pipeline, grouped by the exit-code contract
/// of the CLI: validation (2), instability (3), non-convergence (4).
#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("invalid parameter `{field}`: {message}")]
    Validation { field: &'static str, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("instability detected at t = {time}: {message}")]
    Instability { time: f64, message: String },

    #[error("system is not stable: eigenvalue real parts {0:?}")]
    NotHurwitz(Vec<f64>),

    #[error("Floquet multipliers on or outside the unit circle: |mu| = {0:?}")]
    FloquetUnstable(Vec<f64>),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("parametric resonance: vanishing zeroth-order denominator at harmonic n = {harmonic}")]
    Singularity { harmonic: i32 },

    #[error("degenerate coupling: |g1| >= |g0| ({g1_abs} >= {g0_abs})")]
    DegenerateCoupling { g0_abs: f64, g1_abs: f64 },

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    /// Exit code for the CLI contract: 2 validation, 3 instability, 4 non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } | Error::Config(_) | Error::Domain(_) => 2,
            Error::Instability { .. }
            | Error::NotHurwitz(_)
            | Error::FloquetUnstable(_)
            | Error::DegenerateCoupling { .. } => 3,
            Error::NonConvergence(_) | Error::Singularity { .. } => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
