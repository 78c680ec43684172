use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite sample: {0}")]
    NonFinite(String),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("kernel evaluated at its singular point")]
    SingularPoint,
    #[error("heat kernel evaluated at zero elapsed time")]
    ZeroTime,
    #[error("convolution engines disagree: {diff:e} > {tol:e}")]
    EngineMismatch { diff: f64, tol: f64 },
    #[error("expansion depth {requested} exceeds maximum {max}")]
    DepthExceeded { requested: usize, max: usize },
    #[error("advection CFL {cfl:.3} exceeds 0.5")]
    CflViolation { cfl: f64 },
    #[error("backends disagree: {diff:e} > {tol:e}")]
    BackendDisagreement { diff: f64, tol: f64 },
    #[error("threshold sets touch (distance {0:e})")]
    EmptyDistance(f64),
    #[error("ledger violation: {0}")]
    LedgerViolation(String),
    #[error("ledger breach at step {step}: {what}")]
    LedgerBreach { step: usize, what: String },
    #[error("step-size cap collapsed to {cap:e}")]
    CapCollapse { cap: f64 },
    #[error("no contraction at step {step} after {retries} retries")]
    NoContraction { step: usize, retries: usize },
    #[error("maximum principle violated at step {step}: {sup:e} > {bound:e}")]
    MaxPrincipleViolation { step: usize, sup: f64, bound: f64 },
    #[error("Neumann series diverging (ratio {ratio:.3})")]
    SeriesDiverging { ratio: f64 },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable snake_case name of the variant, used in single-line CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "invalid_grid",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::TopologyMismatch(_) => "topology_mismatch",
            Error::SingularPoint => "singular_point",
            Error::ZeroTime => "zero_time",
            Error::EngineMismatch { .. } => "engine_mismatch",
            Error::DepthExceeded { .. } => "depth_exceeded",
            Error::CflViolation { .. } => "cfl_violation",
            Error::BackendDisagreement { .. } => "backend_disagreement",
            Error::EmptyDistance(_) => "empty_distance",
            Error::LedgerViolation(_) => "ledger_violation",
            Error::LedgerBreach { .. } => "ledger_breach",
            Error::CapCollapse { .. } => "cap_collapse",
            Error::NoContraction { .. } => "no_contraction",
            Error::MaxPrincipleViolation { .. } => "max_principle_violation",
            Error::SeriesDiverging { .. } => "series_diverging",
            Error::Parse { .. } => "parse_error",
            Error::Validation(_) => "validation_error",
            Error::Io(_) => "io_error",
        }
    }
}
