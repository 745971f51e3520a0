use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the toolkit.
///
/// Variants are grouped by [`ErrorCategory`], which the command line front end
/// maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("artery and vein overlap: {0}")]
    Overlap(String),
    #[error("geometry under-resolved: {0}")]
    Resolution(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("fluid phase is empty")]
    NoFluid,
    #[error("fluid phase does not percolate along any periodic axis")]
    DisconnectedFluid,
    #[error("{solver} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    Convergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("solutions disagree on {0}")]
    MixedProvenance(String),
    #[error("coefficient violates ellipticity bound {bound} at voxel {voxel} (value {value})")]
    Ellipticity { voxel: usize, value: f64, bound: f64 },
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("negative concentration {value:.3e} in field `{field}` at node {node}")]
    NegativeConcentration {
        field: &'static str,
        node: usize,
        value: f64,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse classification used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Solver,
    Geometry,
    Io,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn category(&self) -> ErrorCategory {
        match self.root() {
            Error::Overlap(_)
            | Error::Resolution(_)
            | Error::Geometry(_)
            | Error::NoFluid
            | Error::DisconnectedFluid => ErrorCategory::Geometry,
            Error::Convergence { .. }
            | Error::MixedProvenance(_)
            | Error::Ellipticity { .. }
            | Error::SingularSystem(_)
            | Error::NegativeConcentration { .. }
            | Error::ShapeMismatch(_) => ErrorCategory::Solver,
            Error::Parse { .. } | Error::Validation(_) | Error::InvalidArgument(_) => {
                ErrorCategory::Config
            }
            Error::Io { .. } => ErrorCategory::Io,
            Error::Context { .. } => unreachable!("root() strips context"),
        }
    }
}
