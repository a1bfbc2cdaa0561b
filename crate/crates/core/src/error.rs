use thiserror::Error;

/// A condition that halts a simulation: the modelled hardware would be
/// producing wrong data, or the model was wired or driven incorrectly.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimFault {
    #[error("{component}: address {address:#x} is outside an image of depth {depth}")]
    AddressOutOfRange {
        component: String,
        address: usize,
        depth: usize,
    },
    #[error("OR multiplexer at {site}: operands {a:#034x} and {b:#034x} are both nonzero")]
    OrMuxConflict { site: &'static str, a: u128, b: u128 },
    #[error("cycle {cycle}: two valid words collide entering stage {stage}")]
    Collision { cycle: u64, stage: String },
    #[error("key store arbitrary-round port asked for round {round} (valid: 1..=9)")]
    KeyRoundOutOfRange { round: usize },
    #[error("combinational loop through {}", nodes.join(" -> "))]
    CombinationalLoop { nodes: Vec<String> },
    #[error("cycle {cycle}: controller and datapath disagree at {stage}: {detail}")]
    TrackingMismatch {
        cycle: u64,
        stage: String,
        detail: String,
    },
    #[error("invalid component configuration: {0}")]
    InvalidConfig(String),
    #[error("{action} rejected while the controller is in the {state} state")]
    WrongState { state: &'static str, action: &'static str },
    #[error("cycle {cycle}: protocol violation: {detail}")]
    Protocol { cycle: u64, detail: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown {kind} `{name}`; available: {}", available.join(", "))]
    UnknownName {
        kind: &'static str,
        name: String,
        available: Vec<String>,
    },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("catalog: {0}")]
    Catalog(String),
    #[error(transparent)]
    Sim(#[from] SimFault),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
