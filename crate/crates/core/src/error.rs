use thiserror::Error;

use crate::cqmle::CqmleError;
use crate::inference::InferenceError;
use crate::simulator::SimError;
use crate::student_levy::LawError;
use crate::tqmle::TqmleError;

/// Any library error, tagged with the module it came from.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("student_levy: {0}")]
    Law(#[from] LawError),
    #[error("simulator: {0}")]
    Sim(#[from] SimError),
    #[error("cqmle: {0}")]
    Cqmle(#[from] CqmleError),
    #[error("tqmle: {0}")]
    Tqmle(#[from] TqmleError),
    #[error("inference: {0}")]
    Inference(#[from] InferenceError),
    #[error("mc: {0}")]
    Mc(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Law(_) => "student_levy",
            Error::Sim(_) => "simulator",
            Error::Cqmle(_) => "cqmle",
            Error::Tqmle(_) => "tqmle",
            Error::Inference(_) => "inference",
            Error::Mc(_) => "mc_harness",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
