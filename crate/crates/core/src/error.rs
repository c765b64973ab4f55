use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),

    #[error("CFL condition violated: dt*u0/dx = {ratio} > 1")]
    CflViolation { ratio: f64 },

    #[error("density left the physical range at cell {cell}: {value} (bounds [0, {upper}])")]
    NonPhysical { cell: usize, value: f64, upper: f64 },

    #[error("subproblem is infeasible: {0}")]
    Infeasible(String),

    #[error("linear algebra failure: {0}")]
    Factorization(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerical pipeline (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::CflViolation { .. }
                | Error::NonPhysical { .. }
                | Error::Infeasible(_)
                | Error::Factorization(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
