use thiserror::Error;

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("initial state {index} out of range (scenario has {count})")]
    UnknownInitialState { index: usize, count: usize },

    #[error("session has ended")]
    SessionEnded,

    #[error("join a scenario first")]
    NotJoined,

    #[error("already joined scenario {0:?}")]
    AlreadyJoined(String),

    #[error("input must be finite, got {0:?}")]
    NonFiniteInput([f64; 2]),

    #[error("malformed message: {0}")]
    BadMessage(String),

    #[error(transparent)]
    Core(#[from] barrier_guard::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TeleopError>;
