//! Operator parameters and the record types shared across modules.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent of the potential `|x|^m`, restricted to the cases the toolkit
/// supports: the complex Airy operator (`m = 1`) and even oscillators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Exponent {
    Airy,
    Even(u32),
}

impl Exponent {
    pub fn m(self) -> u32 {
        match self {
            Exponent::Airy => 1,
            Exponent::Even(k) => 2 * k,
        }
    }

    /// `k = m/2` for even exponents.
    pub fn k(self) -> Option<u32> {
        match self {
            Exponent::Airy => None,
            Exponent::Even(k) => Some(k),
        }
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.m())
    }
}

/// A validated `(m, θ)` pair defining `A(m, θ) = -d²/dx² + e^{iθ}|x|^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    exponent: Exponent,
    theta: f64,
}

/// `min{(m+2)π/4, (m+2)π/(2m)}`: the half-opening of the admissible θ sector.
pub fn sector_bound(m: f64) -> f64 {
    let a = (m + 2.0) * PI / 4.0;
    let b = (m + 2.0) * PI / (2.0 * m);
    a.min(b)
}

/// Validates `(m, θ)`.
///
/// `m` must be 1 or an even positive integer; `θ` must lie strictly inside
/// the sector where the quadratic form is sectorial. `θ = 0` (the selfadjoint
/// reference case) is accepted.
pub fn validate_spec(m: f64, theta: f64) -> Result<OperatorSpec> {
    if !m.is_finite() || m <= 0.0 || m.fract() != 0.0 || m > f64::from(u32::MAX) {
        return Err(Error::UnsupportedExponent(m));
    }
    let exponent = if m == 1.0 {
        Exponent::Airy
    } else if (m as u64).is_multiple_of(2) {
        Exponent::Even((m as u64 / 2) as u32)
    } else {
        return Err(Error::UnsupportedExponent(m));
    };
    let bound = sector_bound(m);
    if !theta.is_finite() || theta.abs() >= bound {
        return Err(Error::SectorViolation { m, theta, bound });
    }
    Ok(OperatorSpec { exponent, theta })
}

impl OperatorSpec {
    pub fn exponent(&self) -> Exponent {
        self.exponent
    }

    pub fn m(&self) -> u32 {
        self.exponent.m()
    }

    pub fn k(&self) -> Option<u32> {
        self.exponent.k()
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sector_bound(&self) -> f64 {
        sector_bound(f64::from(self.m()))
    }

    /// The same operator with `θ` negated (complex conjugate operator).
    pub fn conjugate(&self) -> OperatorSpec {
        OperatorSpec { exponent: self.exponent, theta: -self.theta }
    }

    pub fn is_selfadjoint(&self) -> bool {
        self.theta == 0.0
    }
}

/// Boundary condition of a half-line realization of `A(1, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    /// `u(0) = 0`; odd eigenfunctions on the full line.
    Dirichlet,
    /// `u'(0) = 0`; even eigenfunctions on the full line.
    Neumann,
}

/// How an eigenfunction is represented.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Representation {
    /// Coefficients in the basis `√s·h_j(s·x)`, unit Euclidean norm.
    HermiteCoeffs { coeffs: Vec<Complex64>, scale: f64 },
    /// `x ↦ Ai(μ + e^{iθ/3}|x|)` with `μ` a zero of `Ai` or `Ai'`.
    AiryParam { mu: f64, bc: Boundary },
    /// `x ↦ h_{n-1}(e^{iθ/4}x)`.
    ClosedFormHarmonic { n: usize },
    /// Nodal values of a finite-difference eigenvector on a uniform grid,
    /// unit Euclidean norm.
    GridValues { values: Vec<Complex64>, spacing: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenRecord {
    /// 1-based position in nondecreasing `|λ|` order.
    pub n: usize,
    pub lambda: Complex64,
    pub representation: Representation,
}

/// Ordering on eigenvalues: modulus first, ties broken by ascending argument.
pub fn eigenvalue_order(a: &Complex64, b: &Complex64) -> Ordering {
    a.norm()
        .total_cmp(&b.norm())
        .then_with(|| a.arg().total_cmp(&b.arg()))
}

/// Sorts by [`eigenvalue_order`] and renumbers from 1.
pub fn sort_records(records: &mut [EigenRecord]) {
    records.sort_by(|a, b| eigenvalue_order(&a.lambda, &b.lambda));
    for (i, r) in records.iter_mut().enumerate() {
        r.n = i + 1;
    }
}

/// True when records are numbered `1, 2, …` without gaps and sorted.
pub fn records_well_ordered(records: &[EigenRecord]) -> bool {
    records.iter().enumerate().all(|(i, r)| r.n == i + 1)
        && records
            .windows(2)
            .all(|w| eigenvalue_order(&w[0].lambda, &w[1].lambda) != Ordering::Greater)
}

/// Which route produced an instability index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMethod {
    Galerkin,
    Airy,
    HarmonicExact,
    Ray,
}

impl KappaMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            KappaMethod::Galerkin => "galerkin",
            KappaMethod::Airy => "airy",
            KappaMethod::HarmonicExact => "harmonic_exact",
            KappaMethod::Ray => "ray",
        }
    }
}

impl fmt::Display for KappaMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An instability index `κₙ = ‖Πₙ‖`.
///
/// `log_kappa` is authoritative: for the Airy operator at large `n`, `κₙ`
/// exceeds the `f64` range and `kappa` saturates to infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstabilityRecord {
    pub n: usize,
    pub kappa: f64,
    pub log_kappa: f64,
    pub method: KappaMethod,
    /// Relative error estimate of `kappa`.
    pub err_estimate: f64,
}

impl InstabilityRecord {
    /// Builds a record from `log κ`, clipping at `κ = 1` (`log κ = 0`).
    pub fn from_log(n: usize, log_kappa: f64, method: KappaMethod, err_estimate: f64) -> Self {
        let log_kappa = if log_kappa < 0.0 {
            if log_kappa < -10.0 * err_estimate.max(1e-12) {
                log::warn!("kappa_{n} = exp({log_kappa:e}) < 1 by more than its error; clipped to 1");
            }
            0.0
        } else {
            log_kappa
        };
        InstabilityRecord { n, kappa: log_kappa.exp(), log_kappa, method, err_estimate }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn airy_sector_is_three_quarters_pi() {
        let s = validate_spec(1.0, PI / 3.0).unwrap();
        assert_eq!(s.exponent(), Exponent::Airy);
        assert!((s.sector_bound() - 3.0 * PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn selfadjoint_case_is_accepted() {
        let s = validate_spec(2.0, 0.0).unwrap();
        assert!(s.is_selfadjoint());
        assert_eq!(s.k(), Some(1));
    }

    #[test]
    fn theta_beyond_sector_is_rejected() {
        // min{3π/4, 3π/2} = 3π/4 ≈ 2.356 < 2.5
        match validate_spec(1.0, 2.5) {
            Err(Error::SectorViolation { bound, .. }) => {
                assert!((bound - 3.0 * PI / 4.0).abs() < 1e-15)
            }
            other => panic!("expected SectorViolation, got {other:?}"),
        }
        assert!(validate_spec(2.0, -PI).is_err());
        assert!(validate_spec(2.0, f64::NAN).is_err());
    }

    #[test]
    fn odd_and_fractional_exponents_are_rejected() {
        for m in [3.0, 0.5, 1.5, 0.0, -2.0, f64::INFINITY] {
            assert!(matches!(validate_spec(m, 0.1), Err(Error::UnsupportedExponent(_))), "m = {m}");
        }
    }

    #[test]
    fn even_sector_bound_simplifies() {
        for k in 1..=10u32 {
            let m = f64::from(2 * k);
            let kf = f64::from(k);
            let direct = ((kf + 1.0) * PI / 2.0).min((kf + 1.0) * PI / (2.0 * kf));
            assert!((sector_bound(m) - direct).abs() < 1e-15);
            assert!((sector_bound(m) - (kf + 1.0) * PI / (2.0 * kf)).abs() < 1e-15);
        }
    }

    #[test]
    fn ties_broken_by_argument() {
        let mut recs: Vec<EigenRecord> = [Complex64::new(0.0, 1.0), Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)]
            .into_iter()
            .map(|lambda| EigenRecord { n: 0, lambda, representation: Representation::ClosedFormHarmonic { n: 1 } })
            .collect();
        sort_records(&mut recs);
        assert!(records_well_ordered(&recs));
        assert_eq!(recs[1].lambda, Complex64::new(1.0, 0.0));
        assert_eq!(recs[2].lambda, Complex64::new(0.0, 1.0));
    }

    #[test]
    fn kappa_is_clipped_at_one() {
        let r = InstabilityRecord::from_log(3, -1e-14, KappaMethod::Galerkin, 1e-12);
        assert_eq!(r.kappa, 1.0);
        assert_eq!(r.log_kappa, 0.0);
    }

    proptest::proptest! {
        #[test]
        fn validation_is_total(m in -10.0f64..10.0, theta in -10.0f64..10.0) {
            let _ = validate_spec(m, theta);
        }

        #[test]
        fn valid_specs_respect_the_sector(k in 1u32..20, frac in -0.999f64..0.999) {
            let m = f64::from(2 * k);
            let theta = frac * sector_bound(m);
            let s = validate_spec(m, theta).unwrap();
            proptest::prop_assert!(s.theta().abs() < s.sector_bound());
        }
    }
}
