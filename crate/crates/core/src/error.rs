use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid group construction (odd `m`, `ell < 2`, ...).
    #[error("group construction error: {0}")]
    Construction(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("degenerate orbit: base point is zero")]
    DegenerateOrbit,
    /// Grid and group are incompatible (non origin-centred grid, angular
    /// resolution not divisible by the rotation order, ...).
    #[error("symmetry mismatch: {0}")]
    SymmetryMismatch(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    /// Numerical failure; carries a human readable report.
    #[error("solver error: {0}")]
    Solver(String),
    #[error("decay fit error: {0}")]
    Fit(String),
    /// The Nehari projection does not exist for this state.
    #[error("infeasible projection: component {component} has non-positive denominator {value:e}")]
    InfeasibleProjection { component: usize, value: f64 },
    /// Cutoff supports of different components intersect.
    #[error("infeasible cutoff: {0}")]
    InfeasibleCutoff(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("empty partition: no node above threshold")]
    EmptyPartition,
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
