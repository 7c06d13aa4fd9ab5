use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit target {target} out of range for {n_qubits} qubits")]
    TargetOutOfRange { target: usize, n_qubits: usize },

    #[error("duplicate qubit target {0}")]
    DuplicateTarget(usize),

    #[error("operator is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no basis state satisfies all constraints")]
    EmptyPhysicalSector,

    #[error("off-block leakage {0:.3e} exceeds tolerance")]
    BlockLeakage(f64),

    #[error("bitstring {0:#b} lies outside the physical support of the subsystem")]
    UnphysicalBitstring(u64),

    #[error("outcome {bitstring:#b} classified as {found} but drawn from block {expected}")]
    SectorMismatch {
        bitstring: u64,
        expected: String,
        found: String,
    },

    #[error("operation undefined on a sector of dimension {0}")]
    TrivialSector(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no crossing of threshold {threshold:e} in sector {sector}")]
    NoCrossing { sector: String, threshold: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),
}
