use thiserror::Error;

/// Errors produced by geometry, dynamics, solvers and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tangent vector is based at a different point than the one supplied")]
    InvalidBasePoint,

    #[error("point violates manifold constraint on factor {factor}: {detail}")]
    ManifoldViolation { factor: usize, detail: String },

    #[error("points are antipodal on sphere factor {factor}; logarithm undefined")]
    AntipodalPoints { factor: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("value outside domain: {0}")]
    DomainError(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at line {line}: {message}")]
    ParseError { line: usize, message: String },

    #[error("validation failed: {0}")]
    ValidationError(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("graph is disconnected")]
    DisconnectedGraph,

    #[error("precision loss: {0}")]
    PrecisionLoss(String),

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("empty series")]
    EmptySeries,

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        match self {
            e @ Error::AtStep { .. } => e,
            e => Error::AtStep {
                step,
                source: Box::new(e),
            },
        }
    }

    /// Step index attached by the integrator, if any.
    pub fn step(&self) -> Option<usize> {
        match self {
            Error::AtStep { step, .. } => Some(*step),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
