//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// Adaptive quadrature hit the subdivision cap before reaching tolerance.
    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}, {subdivisions} subdivisions")]
    NonConvergence {
        estimate: f64,
        error_bound: f64,
        subdivisions: usize,
    },

    /// A statistical routine was handed fewer samples than it needs.
    #[error("insufficient samples for {op}: got {got}, need at least {need}")]
    InsufficientSamples {
        op: &'static str,
        got: usize,
        need: usize,
    },

    /// A pairing grid violated its construction invariants.
    #[error("grid invariant violated: {0}")]
    GridInvariant(String),

    /// Root bracketing failed: the function does not change sign on the bracket.
    #[error("no root in [{lo}, {hi}]: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NoRoot {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// A protocol session aborted before producing a key.
    #[error("session aborted: {0}")]
    SessionAbort(String),

    /// Group digests disagreed after error correction.
    #[error("verification digest mismatch in group {group}")]
    DigestMismatch { group: String },

    /// Invalid run or sweep configuration.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Malformed transcript bytes.
    #[error("transcript decode error at offset {offset}: {msg}")]
    TranscriptDecode { offset: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            op,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
