//! Numerical spectral analysis of the non-selfadjoint anharmonic oscillators
//! `A(m, θ) = -d²/dx² + e^{iθ}|x|^m` on `L²(ℝ)`.
//!
//! The crate computes eigenvalues, instability indices `κₙ = ‖Πₙ‖` (norms of
//! the rank-one spectral projections), ε-pseudospectra of truncated
//! discretizations, and the closed-form asymptotic constants that govern the
//! exponential growth of `κₙ`.
//!
//! Module map:
//!
//! - [`model`]: validated operator parameters and shared record types.
//! - [`airy`]: `Ai`, `Ai'` on the complex plane, real zeros and critical points.
//! - [`quad`]: adaptive Gauss–Kronrod quadrature on intervals, rays and segments.
//! - [`linalg`]: banded complex matrices and their LU factorization.
//! - [`spectra`]: discretizations, eigenpairs and every route to `κₙ`.
//! - [`asym`]: asymptotic constants, predictions and growth-rate fits.
//! - [`pseudo`]: resolvent-norm grids, ε-contours, perimeter checks, scatter.
//! - [`semigroup`]: normal-convergence analysis of `Σ e^{-tλₙ} Πₙ`.

pub mod airy;
pub mod asym;
pub mod error;
pub mod linalg;
pub mod model;
pub mod pseudo;
pub mod quad;
pub mod semigroup;
pub mod spectra;

pub use error::{Error, ErrorKind, Result};
pub use num_complex::Complex64;
