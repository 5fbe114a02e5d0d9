use thiserror::Error;

/// Errors raised by the barrier library and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kappa evaluated outside [0, a]: h = {h}, a = {a}")]
    KappaDomain { h: f64, a: f64 },

    #[error("input {input:?} lies outside the input box")]
    InputOutsideBox { input: Vec<f64> },

    #[error("state lies in the annuli of barriers {first} and {second} at the same time")]
    AnnuliOverlap { first: usize, second: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid ellipsoid: {0}")]
    InvalidEllipsoid(String),

    #[error("invalid annulus shell: {0}")]
    InvalidShell(String),

    #[error("invalid input box: {0}")]
    InvalidBox(String),

    #[error("degenerate shell: {0}")]
    DegenerateShell(String),

    #[error("constraint row vanishes inside the annulus (|L_g h| = {norm:e})")]
    DegenerateConstraint { norm: f64 },

    #[error("no positive gain keeps the safety input inside the box")]
    NoAdmissibleGain,

    #[error("integration produced a non-finite state {state:?}")]
    Integration { state: Vec<f64> },

    #[error("qp: {0}")]
    QpShape(String),

    #[error("scenario validation failed:\n{0}")]
    Validation(crate::sim::ValidationReport),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
