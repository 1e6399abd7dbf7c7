//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("mesh: {0}")]
    Mesh(String),

    #[error("assembly: {0}")]
    Assembly(String),

    #[error("linear solver did not reach tolerance {tol:e}: achieved residual {achieved:e} after {iterations} iterations")]
    SolverTolerance {
        tol: f64,
        achieved: f64,
        iterations: usize,
    },

    #[error("linear solver: {0}")]
    Solver(String),

    #[error("cell problem at R = {radius}: {message}")]
    CellProblem { radius: f64, message: String },

    #[error("coefficient table: {0}")]
    Table(String),

    #[error("macro step {step}: {message}")]
    MacroStep { step: usize, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
