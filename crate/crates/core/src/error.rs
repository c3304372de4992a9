use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("conditioning window has zero mass")]
    ZeroMassWindow,
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(String),
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("target mean is {0}, expected 0")]
    NonZeroMeanTarget(String),
    #[error("no tail constant C0 found below the search cap {0}")]
    UnboundedTarget(u64),
    #[error("no denominator q <= {q_max} reaches eps; best distance {best}")]
    QuantizationInfeasible { q_max: u64, best: f64 },
    #[error("refinement infeasible: {0}")]
    RefinementInfeasible(String),
    #[error("castle invariant violated: {0}")]
    CastleInvariant(String),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("not enough free levels for stage {stage} in column {column} cell {cell} subtower {subtower}")]
    DisjointnessInfeasible {
        stage: usize,
        column: usize,
        cell: usize,
        subtower: u64,
    },
    #[error("correction infeasible for stage {stage}: {detail}")]
    RepairInfeasible { stage: usize, detail: String },
    #[error("stage sets overlap: stages {0} and {1}")]
    OverlapDetected(usize, usize),
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
