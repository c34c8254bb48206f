use thiserror::Error;

use crate::construct::GateReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("degenerate measure: level {0} has no selected intervals")]
    DegenerateMeasure(usize),
    #[error("insufficient depth: {0}")]
    InsufficientDepth(String),
    #[error("level out of range: {0}")]
    LevelOutOfRange(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("arithmetic overflow: {0}")]
    Overflow(String),
    #[error("empty sample: {0}")]
    EmptySample(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("construction failed at level {level} after {attempts} attempts")]
    ConstructionFailure {
        level: usize,
        attempts: u32,
        transcript: Vec<GateReport>,
    },
    #[error("demo inconclusive: {0}")]
    DemoInconclusive(String),
    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
