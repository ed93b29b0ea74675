use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PodError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("assembly failure: {0}")]
    AssemblyFailure(String),
    #[error("singular matrix at pivot {pivot}")]
    SingularMatrix { pivot: usize },
    #[error("Newton iteration failed at t = {time}: residual {residual:e} after {iterations} iterations")]
    StepFailure { time: f64, residual: f64, iterations: usize },
    #[error("time {t} outside trajectory span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("derivative energy vanishes on the whole trajectory")]
    DegenerateDensity,
    #[error("all correlation eigenvalues are below the rank tolerance")]
    EmptyBasis,
    #[error("unsupported audit: {0}")]
    UnsupportedAudit(String),
    #[error("{stage}: {source}")]
    Stage { stage: &'static str, source: Box<PodError> },
}

pub type Result<T, E = PodError> = std::result::Result<T, E>;

impl PodError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::InvalidArgument(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Self::Stage { stage, source: Box::new(self) }
    }
}
