//! Error type shared by every module.

use serde::Serialize;
use thiserror::Error;

/// Errors raised by parsing, model construction and numerical analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Unknown unit kind, parameter name or similar configuration mistake.
    #[error("configuration error: {0}")]
    Configuration(String),
    /// Operator or matrix dimensions do not match.
    #[error("shape error: {0}")]
    Shape(String),
    /// A size cap was exceeded or a truncation is too small.
    #[error("resource error: {0}")]
    Resource(String),
    /// Netlist syntax error.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    /// Circuit graph violates a structural invariant.
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    /// Model lacks the structure an operation needs.
    #[error("structure error: {0}")]
    Structure(String),
    /// Tree rule cannot be satisfied (junction-only cycle).
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    /// Stationary point is not a single-well minimum.
    #[error("double-well or saddle point: {0}")]
    DoubleWell(String),
    /// Added-inductance branch is not invertible.
    #[error("multivalued potential: {0}")]
    Multivalued(String),
    /// Detuning too small for a perturbative treatment.
    #[error("near resonance: {0}")]
    NearResonance(String),
    /// A sweep produced no valid point.
    #[error("empty result: {0}")]
    EmptyResult(String),
    /// Newton or root search failed to converge.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// Input/output failure (CLI only).
    #[error("io error: {0}")]
    Io(String),
}

/// Machine-readable error report written by the CLI.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorReport {
    pub schema_version: u32,
    pub kind: &'static str,
    pub message: String,
}

impl Error {
    /// Short stable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Configuration(_) => "configuration",
            Error::Shape(_) => "shape",
            Error::Resource(_) => "resource",
            Error::Parse { .. } => "parse",
            Error::InvalidCircuit(_) => "invalid_circuit",
            Error::Structure(_) => "structure",
            Error::UnsupportedTopology(_) => "unsupported_topology",
            Error::DoubleWell(_) => "double_well",
            Error::Multivalued(_) => "multivalued",
            Error::NearResonance(_) => "near_resonance",
            Error::EmptyResult(_) => "empty_result",
            Error::NoConvergence(_) => "no_convergence",
            Error::Io(_) => "io",
        }
    }

    /// JSON-serializable report.
    pub fn report(&self) -> ErrorReport {
        ErrorReport { schema_version: 1, kind: self.kind(), message: self.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
