use alloc::string::String;
use core::fmt;

/// Errors shared across the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// A graph failed a structural invariant at construction.
    InvalidGraph(String),
    /// A node id outside `0..node_count`.
    NodeOutOfRange { node: usize, node_count: usize },
    /// An argument outside its documented domain.
    InvalidArgument(String),
    /// An enumeration or search guard would be exceeded.
    GuardExceeded(String),
    /// Tensor or model dimensions do not line up.
    DimensionMismatch(String),
    /// Training diverged (non-finite loss).
    Diverged { epoch: usize },
    /// A port-reconstruction observation set is not 1-complete.
    NotOneComplete(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            Error::NodeOutOfRange { node, node_count } => {
                write!(f, "node id {node} out of range (node count {node_count})")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::GuardExceeded(msg) => write!(f, "guard exceeded: {msg}"),
            Error::DimensionMismatch(msg) => write!(f, "dimension mismatch: {msg}"),
            Error::Diverged { epoch } => write!(f, "training diverged at epoch {epoch}"),
            Error::NotOneComplete(msg) => write!(f, "observation set not 1-complete: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
