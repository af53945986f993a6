use thiserror::Error;

/// Progress captured when a validation run hits its evaluation budget.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PartialProgress {
    pub states_total: usize,
    pub c_star_total: usize,
    pub c_star_processed: usize,
    pub psi_evaluations: u64,
    pub max_evals: u64,
    /// Minimum of the per-state sup over the processed states, if any.
    pub zeta_so_far: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{what} = {value} is out of range ({expected})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("empty grid")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("input component {axis} = {value} outside [{lo}, {hi}]")]
    InputOutOfBounds {
        axis: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("grid resolution {0} is too small (need at least 2)")]
    ResolutionTooSmall(usize),
    #[error("invalid box on axis {axis}: lo {lo} > hi {hi}")]
    InvalidBox { axis: usize, lo: f64, hi: f64 },
    #[error("level {level} out of range for recursion depth {depth}")]
    LevelOutOfRange { level: usize, depth: usize },
    #[error("invalid class-K function: {0}")]
    InvalidClassK(String),
    #[error("state box is empty")]
    EmptyStateBox,
    #[error("evaluation budget of {} exceeded after {} of {} inner-safe-set states", .0.max_evals, .0.c_star_processed, .0.c_star_total)]
    PartialReport(Box<PartialProgress>),
    #[error("no admissible input on the grid at this state")]
    InfeasibleAtState,
    #[error("current state is outside the inner safe set of the active candidate")]
    NoAdmissibleCandidate,
    #[error("certified set must be non-empty and contain only certified candidates")]
    InvalidCertifiedSet,
    #[error("trajectory log is empty")]
    EmptyLog,
    #[error("invalid parameter {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
