use alloc::string::String;
use alloc::vec::Vec;

use crate::case::BusId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),

    #[error("branch {from}-{to} refers to unknown bus {missing}")]
    DanglingBranch { from: BusId, to: BusId, missing: BusId },

    #[error("branch {0}-{0} connects a bus to itself")]
    SelfLoop(BusId),

    #[error("generator refers to unknown bus {0}")]
    DanglingGenerator(BusId),

    #[error("network is not connected: component sizes {component_sizes:?}")]
    Disconnected { component_sizes: Vec<usize> },

    #[error("in-service branch {from}-{to} has zero reactance")]
    ZeroReactance { from: BusId, to: BusId },

    #[error("capacity threshold {threshold} MVA leaves no grid-forming bus")]
    NoGridForming { threshold: f64 },

    #[error("unknown bus {0}")]
    UnknownBus(BusId),

    #[error("no GFM parameters for bus {0}")]
    MissingGfmParams(BusId),

    #[error("invalid value for {what}: {value}")]
    InvalidParameter { what: &'static str, value: f64 },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("network has no generator bus")]
    NoGenerators,

    #[error("load block is singular; isolated bus set {buses:?}")]
    SingularLoadBlock { buses: Vec<BusId> },

    #[error("power flow did not converge after {iterations} iterations (mismatch {mismatch:e} pu)")]
    NotConverged { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian block at bus {0}")]
    SingularJacobian(BusId),

    #[error("singular pivot at elimination node {0}")]
    SingularPivot(usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("singular matrix")]
    Singular,
}
