use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error("dimension mismatch: expected {what} = {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("out-of-order chunk: issued_at {issued_at} is not after newest retained {newest}")]
    OutOfOrderChunk { issued_at: u64, newest: u64 },
    #[error("no prediction covers timestep {0}")]
    NoCoverage(u64),
    #[error("joint {joint} angle {angle} outside limits [{lo}, {hi}]")]
    JointLimit {
        joint: usize,
        angle: f64,
        lo: f64,
        hi: f64,
    },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("scripted expert failed: {0}")]
    ExpertFailure(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
}

impl Error {
    pub fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            found,
        }
    }
}
