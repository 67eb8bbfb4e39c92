use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A size limit of an algorithm was exceeded.
    #[error("capacity exceeded: {what} is {got}, limit is {limit}")]
    Capacity {
        what: &'static str,
        got: usize,
        limit: usize,
    },

    /// Arguments violate an operation's preconditions.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A state failed a numerical validity check (symplectic condition,
    /// normalizability).
    #[error("invalid state: {0}")]
    Validity(String),

    /// A vector or quantity that must be nonzero was (numerically) zero.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A heralding event has vanishing probability.
    #[error("degenerate herald: probability {0:e} is unreachable")]
    DegenerateHerald(f64),

    /// The requested layer plan cannot be built.
    #[error("planning failed: {0}")]
    Planning(String),

    /// Target splitting at an interior node stayed below its fidelity floor.
    #[error("split at node {node} reached fidelity {fidelity:.6} below floor {floor}")]
    Split {
        node: String,
        fidelity: f64,
        floor: f64,
        best: Box<crate::backcast::SplitOutcome>,
    },

    /// A first-layer circuit fit stayed below its fidelity floor.
    #[error("first-layer solve at node {node} reached fidelity {fidelity:.6} below floor {floor}")]
    Solver {
        node: String,
        fidelity: f64,
        floor: f64,
        best: Box<crate::backcast::LeafOutcome>,
    },

    /// An objective produced NaN or infinity.
    #[error("objective returned non-finite value {value} at {point:?}")]
    NonFinite { value: f64, point: Vec<f64> },

    /// Forward re-simulation disagrees with the recorded synthesis result.
    #[error("internal consistency check failed: {message} (recorded {recorded}, recomputed {recomputed})")]
    Consistency {
        message: String,
        recorded: f64,
        recomputed: f64,
    },

    /// Malformed text input.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
