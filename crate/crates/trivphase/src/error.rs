use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("label mismatch: {0}")]
    LabelMismatch(String),
    #[error("support {support:?} is not contained in the state's sites {sites:?}")]
    SupportNotContained { support: Vec<usize>, sites: Vec<usize> },
    #[error("regions belong to different lattices")]
    LatticeMismatch,
    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),
    #[error("reference state is singular beyond regularization (smallest eigenvalue {0:e})")]
    PetzSingular(f64),
    #[error("combined register of {qubits} qubits exceeds the cap of {cap}")]
    DimensionCap { qubits: usize, cap: usize },
    #[error("{qubits} qubits exceeds the simulation cap of {cap}")]
    SimulationCap { qubits: usize, cap: usize },
    #[error("dataset has no shots")]
    EmptyDataset,
    #[error("region of {size} sites exceeds the estimation cap of {cap}")]
    RegionTooLarge { size: usize, cap: usize },
    #[error("bound violated: {0}")]
    BoundViolated(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
