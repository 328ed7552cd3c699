use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measurement Bloch vector must be unit norm, got |T| = {0}")]
    NonUnitMeasurement(f64),

    #[error("state Bloch vector lies outside the Bloch ball, |S| = {0}")]
    StateOutsideBall(f64),

    #[error("no events in cell (x={x}, y={y})")]
    EmptyCell { x: usize, y: usize },

    #[error("witness {0} exceeds the qubit bound of 1")]
    BeyondQubitBound(f64),

    #[error("qubit fraction {0} must exceed 1/2 for certification")]
    QubitFractionTooLow(f64),

    #[error("{name} must lie in {range}, got {value}")]
    OutOfRange {
        name: &'static str,
        range: &'static str,
        value: f64,
    },

    #[error("sample count must be at least 1")]
    ZeroSamples,

    #[error("LFSR state must be non-zero")]
    ZeroLfsrState,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("insufficient seed material: need {needed} bits, have {available}")]
    SeedExhausted { needed: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(name: &'static str, range: &'static str, value: f64) -> Self {
        Error::OutOfRange { name, range, value }
    }
}
