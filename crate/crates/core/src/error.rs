use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid trace: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("rate plan exceeds {direction} capacity of port {port} at t={time_ms} ms: {used} > {capacity} B/ms")]
    Capacity { direction: &'static str, port: u32, time_ms: f64, used: f64, capacity: f64 },

    #[error("internal simulation error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
