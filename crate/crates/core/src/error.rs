use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("probability {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("taus must be {0} for this head")]
    TausRequired(&'static str),
    #[error("non-finite gradient entry at index {0}")]
    NonFiniteGradient(usize),
    #[error(
        "parameter layout mismatch: snapshot hash {actual:#018x}, network hash {expected:#018x}"
    )]
    SpecHashMismatch { expected: u64, actual: u64 },
    #[error("invalid risk parameter: {0}")]
    InvalidRisk(String),
    #[error("count must be at least 1: {0}")]
    EmptyCount(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("object placement failed after {attempts} rejections")]
    PlacementFailed { attempts: usize },
    #[error("episode already finished")]
    EpisodeDone,
}
