use thiserror::Error;

/// Failure modes of the toolkit.
///
/// Variants are grouped by what a caller can do about them: fix the input
/// ([`ErrorKind::Validation`]), change numerical parameters
/// ([`ErrorKind::Convergence`]), or fix the environment ([`ErrorKind::Io`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("theta = {theta} violates the sector condition |theta| < {bound} for m = {m}")]
    SectorViolation { m: f64, theta: f64, bound: f64 },

    #[error("unsupported exponent m = {0}: only m = 1 and even m = 2k are supported")]
    UnsupportedExponent(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("Newton iteration did not converge for {what} after {iterations} iterations")]
    ConvergenceFailure { what: String, iterations: usize },

    #[error("quadrature tolerance {tol:e} not met (estimate {err_estimate:e}) after {panels} panels")]
    ToleranceNotMet { tol: f64, err_estimate: f64, panels: usize },

    #[error("integrand shows no decay after {doublings} doublings of the truncation point")]
    NoDecayDetected { doublings: usize },

    #[error("eigenvalue {index} not converged under basis refinement (relative change {change:e})")]
    NotConverged { index: usize, change: f64 },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error(
        "bilinear denominator underflow for n = {index}: |sum c^2| / sum |c|^2 = {ratio:e}; \
         use a cancellation-free method"
    )]
    DenominatorUnderflow { index: usize, ratio: f64 },

    #[error("rotated Hermite sum did not stabilize for n = {index} (relative change {change:e})")]
    RayDivergence { index: usize, change: f64 },

    #[error("integration segment passes within {distance:e} of a branch point")]
    BranchPointOnPath { distance: f64 },

    #[error("argument {0} lies on the branch cut [-1, 1]")]
    BranchCut(f64),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("component hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("t grid does not straddle the convergence threshold (slopes {first:e} .. {last:e})")]
    NoSignChange { first: f64, last: f64 },

    #[error("series tail does not decay: {0}")]
    InsufficientDecay(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Convergence,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use Error::*;
        match self {
            SectorViolation { .. }
            | UnsupportedExponent(_)
            | Config(_)
            | BranchCut(_)
            | BranchPointOnPath { .. }
            | DegenerateFit(_)
            | HypothesisViolated(_)
            | NoSignChange { .. } => ErrorKind::Validation,
            ConvergenceFailure { .. }
            | ToleranceNotMet { .. }
            | NoDecayDetected { .. }
            | NotConverged { .. }
            | Eigensolver(_)
            | DenominatorUnderflow { .. }
            | RayDivergence { .. }
            | InsufficientDecay(_) => ErrorKind::Convergence,
            Io(_) | Json(_) => ErrorKind::Io,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
