use thiserror::Error;

/// Errors surfaced by the solver layers.
///
/// Numerical routines refuse to return garbage: every failure mode that a
/// caller can act on (invalid interface, folded map, stalled solver,
/// inconsistent data) gets its own variant.
#[derive(Debug, Error)]
pub enum Error {
    /// Height field left the validity neighborhood of the reference chart.
    #[error("chart violation: {0}")]
    ChartViolation(String),

    /// Interface metric lost positive definiteness.
    #[error("degenerate metric: min eigenvalue {min_eig:.3e} at node ({i}, {j})")]
    DegenerateMetric { min_eig: f64, i: usize, j: usize },

    /// Harmonic coordinate map folded (non-positive Jacobian determinant).
    #[error("folded map on {side:?} side: min det(J) = {min_det:.3e}")]
    FoldedMap { side: crate::bulk::Side, min_det: f64 },

    /// An iterative linear solver failed to reach tolerance.
    #[error("solver divergence: {0}")]
    SolverDivergence(String),

    /// Integral compatibility conditions of a div-curl system do not hold.
    #[error("compatibility violation: {0}")]
    CompatibilityViolation(String),

    /// Fixed-point iteration exhausted its iteration budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Picard refinement iterates moved apart for several sweeps.
    #[error("no contraction: {0}")]
    NoContraction(String),

    /// Semi-Lagrangian characteristic left the slab by more than one cell.
    #[error("CFL violation: {0}")]
    CflViolation(String),

    /// Plus/minus velocity traces disagree on the interface.
    #[error("trace mismatch: normal traces differ by {0:.3e}")]
    TraceMismatch(f64),

    /// Too few time levels for a finite-difference-in-time diagnostic.
    #[error("insufficient samples: need at least {need}, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    /// Dispersion relation queried at k = 0.
    #[error("zero wavevector")]
    ZeroWavevector,

    /// Growth-rate fit rejected: amplitude outside the linear regime.
    #[error("nonlinear contamination: fit residual {0:.3e} exceeds 10% of signal")]
    NonlinearContamination(f64),

    /// Invalid parameter or state configuration.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
