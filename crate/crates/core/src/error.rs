use thiserror::Error;

/// Every failure the library reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("dimension mismatch on `{context}`: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        context: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("graph contains a cycle through `{0}`")]
    Cyclic(String),
    #[error("non-finite state in `{0}`")]
    NonFiniteState(String),
    #[error("no path from goal `{goal}` to `{terminal}`")]
    NoPath { goal: String, terminal: String },
    #[error("non-finite gradient along `{0}`")]
    NonFiniteGradient(String),
    #[error("gradient norm {0:e} is below the projection threshold")]
    DegenerateGradient(f64),
    #[error("no gradients to resolve")]
    EmptyInput,
    #[error("non-finite action at tick {0}")]
    NonFiniteAction(usize),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no feasible scenario after {0} attempts")]
    InfeasibleScenario(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("parse failure: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
