use thiserror::Error;

use crate::topology::QubitId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coupling map has a self-loop on qubit {0}")]
    SelfLoop(usize),
    #[error("coupling map has duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("edge ({a}, {b}) references a qubit outside 0..{n}")]
    EdgeOutOfRange { a: usize, b: usize, n: usize },
    #[error("qubit {qubit} has degree {degree}, expected 1..=3")]
    BadDegree { qubit: usize, degree: usize },
    #[error("coupling map is not connected (qubit {0} unreachable from qubit 0)")]
    Disconnected(usize),
    #[error("qubit {qubit} is out of range for a {n}-qubit device")]
    QubitOutOfRange { qubit: usize, n: usize },

    #[error("qubit {center} has degree {degree}; hammer centers must be degree-2 connectors")]
    NotAConnector { center: QubitId, degree: usize },
    #[error("connector {center} is on the lattice boundary: direct neighbor {direct} has {found} flank(s), need 2")]
    Boundary {
        center: QubitId,
        direct: QubitId,
        found: usize,
    },
    #[error("group size must be at least 1")]
    BadGroupSize,
    #[error("minimum separation must be at least 1 hop")]
    BadSeparation,

    #[error("qubit {0} appears in more than one gate of the same layer")]
    LayerCollision(QubitId),
    #[error("CNOT control and target are both qubit {0}")]
    CnotSelf(QubitId),
    #[error("classical bit {0} is written by more than one measurement")]
    DuplicateClbit(usize),
    #[error("classical bit {clbit} out of range (circuit has {n_clbits})")]
    ClbitOutOfRange { clbit: usize, n_clbits: usize },
    #[error("qubit {0} is used after it was measured")]
    MidCircuitMeasurement(QubitId),
    #[error("cannot compose circuits on {0} and {1} qubits")]
    WidthMismatch(usize, usize),

    #[error("circuit has {circuit} qubits but the device has {device}")]
    DimensionMismatch { circuit: usize, device: usize },
    #[error("probability `{name}` = {value} is outside [0, 0.5]")]
    BadProbability { name: String, value: f64 },
    #[error("noise model invariant violated: {0}")]
    BadNoiseModel(String),
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dense oracle supports at most {max} qubits, circuit has {n}")]
    TooManyQubits { n: usize, max: usize },

    #[error("neighborhoods of centers {a} and {b} overlap on qubits {shared:?}")]
    OverlappingNeighborhoods {
        a: QubitId,
        b: QubitId,
        shared: Vec<QubitId>,
    },
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("qubit {qubit} is not idle in layer {layer}; cannot insert decoupling there")]
    NotIdle { qubit: QubitId, layer: usize },

    #[error("zero shots recorded for classical bit {0}")]
    ZeroShots(usize),
    #[error("flip table is missing cycle {0}")]
    MissingCycle(usize),
    #[error("malformed table: {0}")]
    MalformedTable(String),

    #[error("channel configuration: {0}")]
    Channel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
