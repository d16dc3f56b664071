use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite state at step {step}: integration left the domain or blew up")]
    NonFiniteState { step: usize },

    #[error("non-finite observable value in row {row}, column {col}")]
    NonFiniteObservable { row: usize, col: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("k-means could not reseed an empty cluster after {attempts} attempts")]
    DegenerateClustering { attempts: usize },

    #[error("homeomorphism round trip failed: defect {defect:.3e} exceeds {tol:.1e}")]
    InverseRoundTripFailure { defect: f64, tol: f64 },

    #[error("eigensolver failed to converge")]
    EigenSolverFailure,

    #[error("eigenvector matrix is not invertible (condition number {cond:.3e})")]
    NonDiagonalizable { cond: f64 },

    #[error("subspaces `{first}` and `{second}` overlap at {point:?}")]
    OverlappingSubspaces {
        first: String,
        second: String,
        point: Vec<f64>,
    },

    #[error("no subspace claims the point {0:?}")]
    UnclaimedPoint(Vec<f64>),

    #[error("point {point:?} is claimed by several subspaces: {claims:?}")]
    AmbiguousPoint { point: Vec<f64>, claims: Vec<String> },

    #[error("group representation is singular (condition number {cond:.3e})")]
    SingularRepresentation { cond: f64 },

    #[error("dictionary is not invariant under the action `{0}`")]
    NonEquivariantDictionary(String),

    #[error("spectra differ: max sorted eigenvalue gap {gap:.3e} exceeds {tol:.1e}")]
    EigenvalueMismatch { gap: f64, tol: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Process exit code for the command-line driver: 2 for usage or
    /// configuration problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteState { .. }
            | Error::NonFiniteObservable { .. }
            | Error::DegenerateClustering { .. }
            | Error::InverseRoundTripFailure { .. }
            | Error::EigenSolverFailure
            | Error::NonDiagonalizable { .. }
            | Error::SingularRepresentation { .. }
            | Error::EigenvalueMismatch { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}
