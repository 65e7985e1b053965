//! Crate-wide error type.

use std::fmt;

#[derive(Debug)]
pub enum Error {
    /// Invalid mesh input or construction request.
    Mesh(String),
    /// Dimension mismatch or invalid entries in linear algebra routines.
    Linalg(String),
    /// Iterative solver failure (non-convergence, NaN).
    Solver(String),
    /// Model setup problem (missing phase field, bad constants).
    Model(String),
    /// Gradient flow abort (energy increase, solver failure inside the loop).
    Flow(String),
    /// Configuration file problem.
    Config(String),
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Mesh(m) => write!(f, "mesh error: {m}"),
            Error::Linalg(m) => write!(f, "linear algebra error: {m}"),
            Error::Solver(m) => write!(f, "solver error: {m}"),
            Error::Model(m) => write!(f, "model error: {m}"),
            Error::Flow(m) => write!(f, "flow error: {m}"),
            Error::Config(m) => write!(f, "config error: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}
