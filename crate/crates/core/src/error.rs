use alloc::string::String;

/// Errors raised by the simulation core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("a network needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("node {node} is out of range for a {nodes}-node graph")]
    NodeOutOfRange { node: usize, nodes: usize },
    #[error("node {node} has in-degree {degree}, at least {required} is required")]
    DegreeTooLow {
        node: usize,
        degree: usize,
        required: usize,
    },
    #[error("{tau} filtered graphs exceed the exhaustive budget of {budget}; use sampled mode")]
    BudgetExceeded { tau: String, budget: u64 },
    #[error("link {from}->{to} is not an edge of the graph")]
    UnknownLink { from: usize, to: usize },
    #[error("node {node} would receive {count} compromised links, the cap is {cap}")]
    CapViolated {
        node: usize,
        count: usize,
        cap: usize,
    },
    #[error("could not draw {count} links under per-node cap {cap} after {attempts} attempts")]
    LinkSamplingFailed {
        count: usize,
        cap: usize,
        attempts: usize,
    },
    #[error("attack parameters must be finite")]
    NonFiniteAttack,
    #[error("screening needs at least {required} candidates, got {available}")]
    InsufficientCandidates { required: usize, available: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row {row} is not stochastic (sum {sum}, min entry {min})")]
    NotStochastic { row: usize, sum: f64, min: f64 },
    #[error("node {node}, coordinate {coord}: no honest node in the {side} set while q > 0")]
    MissingHonestExtreme {
        node: usize,
        coord: usize,
        side: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
