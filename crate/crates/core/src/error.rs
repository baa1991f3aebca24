use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (max deviation {0:e})")]
    NotUnitary(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("channel is not trace preserving (deviation {0:e})")]
    NotTracePreserving(f64),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("circuit with {0} qubits is too large for dense unitary construction")]
    TooManyQubits(usize),
    #[error("job holds {len} circuits, the backend accepts at most {max}")]
    JobTooLarge { len: usize, max: usize },
    #[error("no noise strength defined for entangling-gate slot {0}")]
    NoiseSlotOutOfRange(usize),
    #[error("calibrating observable is uninformative (rescaled ideal value {0:e})")]
    Uninformative(f64),
    #[error("contamination {0} is not positive; the noise floor has been reached")]
    NoiseFloor(f64),
    #[error("every calibration point was dropped")]
    CalibrationFailed,
    #[error("shot record is empty")]
    EmptyRecord,
    #[error("polynomial of order {order} needs at least {} points, got {points}", order + 1)]
    Underdetermined { points: usize, order: usize },
    #[error("duplicate scale factor {0}")]
    DuplicateScale(f64),
    #[error("time evolution did not converge (change {0:e} on refinement)")]
    NotConverged(f64),
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config { field: field.to_string(), message: message.into() }
    }
}
