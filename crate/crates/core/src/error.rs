use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed bracketing at byte {pos}: {msg}")]
    MalformedTree { pos: usize, msg: String },

    #[error("node at byte {pos} has {arity} children, expected 2")]
    NonBinaryNode { pos: usize, arity: usize },

    #[error("bracketing has {found} leaves, expected {expected} (at byte {pos})")]
    LeafCountMismatch { expected: usize, found: usize, pos: usize },

    #[error("node index {index} out of range for tree with {len} nodes")]
    NodeOutOfRange { index: usize, len: usize },

    #[error("tree must have at least one leaf")]
    EmptyTree,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid symbol configuration: {0}")]
    InvalidConfig(String),

    #[error("basic alignment mask needs a tree with at least 2 leaves (root and leaf roles coincide)")]
    SingleLeafTree,

    #[error("target sequence is empty")]
    EmptyTarget,

    #[error("token {token} at position {position} is outside the vocabulary of size {vocab}")]
    TokenOutOfRange { token: usize, position: usize, vocab: usize },

    #[error("target has no derivation under this grammar")]
    NoDerivation,

    #[error("enumeration cap exceeded: {0}")]
    CapExceeded(String),

    #[error("distribution required but derivation list is empty")]
    EmptyDerivations,

    #[error("q has support outside p ({0})")]
    SupportMismatch(String),

    #[error("dual solver did not converge after {iterations} iterations (projected gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("memory pre-flight rejected {model} at length {length}: needs ~{needed} bytes, budget {budget}")]
    OverBudget { model: String, length: usize, needed: u64, budget: u64 },

    #[error("grammar file: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
