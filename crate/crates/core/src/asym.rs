//! Asymptotic constants governing the growth of `κₙ`, their predictions, and
//! least-squares growth-rate fits.
//!
//! For `m = 1`: `log κₙ ≈ C(θ)(n − ½) + log K(θ) − ½ log n`.
//! For `m = 2k`: `log κₙ ≈ c_k(θ)·n` to leading order, with
//! `c_k = 2(k+1)√π Γ((k+1)/(2k)) φ_k(ξ_k) / Γ(1/(2k))`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sector_bound;
use crate::quad::integrate_segment;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Grid used to unwrap the phase of `1 − t^{2k}` along the φ_k segment.
const BRANCH_TRACK_POINTS: usize = 4096;
const BRANCH_POINT_TOL: f64 = 1e-12;
const PHI_TOL: f64 = 1e-13;

/// `Γ(x)` for real `x`, Lanczos approximation with reflection below ½.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        PI / ((PI * x).sin() * gamma(1.0 - x))
    } else {
        let x = x - 1.0;
        let mut a = LANCZOS_COEFFS[0];
        let t = x + LANCZOS_G + 0.5;
        for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AiryConstants {
    pub theta: f64,
    pub m_theta: f64,
    /// Exponential rate `C(θ) = π m_θ^{3/2}|sin θ|` per index.
    pub c: f64,
    /// Prefactor `K(θ) = 1/(2√(3|sin θ|) m_θ^{1/4})`.
    pub k_prefactor: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvenConstants {
    pub k: u32,
    pub theta: f64,
    pub xi: f64,
    pub phi_at_xi: f64,
    /// Exponential rate `c_k(θ)` per index.
    pub c_k: f64,
    /// Semigroup threshold `c₁/cos(θ/2)`; `k = 1` only.
    pub t_threshold: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AsymptoticConstants {
    Airy(AiryConstants),
    Even(EvenConstants),
}

fn check_nonzero_in_sector(m: f64, theta: f64) -> Result<()> {
    let bound = sector_bound(m);
    if !theta.is_finite() || theta == 0.0 || theta.abs() >= bound {
        return Err(Error::SectorViolation { m, theta, bound });
    }
    Ok(())
}

/// `m_θ`, `C(θ)` and `K(θ)` for `m = 1`, `0 < |θ| < 3π/4`.
pub fn airy_constants(theta: f64) -> Result<AiryConstants> {
    check_nonzero_in_sector(1.0, theta)?;
    let t = theta.abs();
    let (s1, s2, c3) = (t.sin(), (2.0 * t / 3.0).sin(), (t / 3.0).cos());
    let m_theta = (1.0 + s2 * s2 / (s1 * s1) - 2.0 * c3 * s2 / s1).sqrt();
    let c = PI * m_theta.powf(1.5) * s1;
    let k_prefactor = 1.0 / (2.0 * (3.0 * s1).sqrt() * m_theta.powf(0.25));
    Ok(AiryConstants { theta, m_theta, c, k_prefactor })
}

/// Leading-order prediction of `κₙ(1, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaPrediction {
    pub n: usize,
    pub log_kappa: f64,
    /// Saturates to infinity beyond the `f64` range; `log_kappa` does not.
    pub kappa: f64,
}

/// `e^{C(θ)(n−½)} K(θ)/√n`, evaluated in log space.
pub fn airy_kappa_prediction(theta: f64, n: usize) -> Result<KappaPrediction> {
    if n == 0 {
        return Err(Error::Config("indices start at 1".into()));
    }
    let c = airy_constants(theta)?;
    let nf = n as f64;
    let log_kappa = c.c * (nf - 0.5) + c.k_prefactor.ln() - 0.5 * nf.ln();
    Ok(KappaPrediction { n, log_kappa, kappa: log_kappa.exp() })
}

fn even_sector(k: u32) -> f64 {
    sector_bound(f64::from(2 * k))
}

/// `ξ_k(θ)`, the turning-point scale of the rotated ray.
pub fn xi_k(k: u32, theta: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::UnsupportedExponent(0.0));
    }
    check_nonzero_in_sector(f64::from(2 * k), theta)?;
    let kf = f64::from(k);
    let t = theta.abs();
    let a = t / (kf + 1.0);
    let ta = a.tan();
    let base = ta / ((kf * a).sin() + (kf * a).cos() * ta);
    Ok(base.powf(1.0 / (2.0 * kf)))
}

fn distance_to_segment(p: Complex64, b: Complex64) -> f64 {
    // segment from 0 to b
    let s = ((p * b.conj()).re / b.norm_sqr()).clamp(0.0, 1.0);
    (p - b * s).norm()
}

/// `φ_k(ξ) = Im ∫₀^{ξ e^{iθ/(2(k+1))}} √(1 − t^{2k}) dt`, with the branch of the
/// root continued from `1` at the origin.
pub fn phi_k(k: u32, theta: f64, xi: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::UnsupportedExponent(0.0));
    }
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::Config(format!("xi must be finite and nonnegative, got {xi}")));
    }
    let kf = f64::from(k);
    let end = Complex64::from_polar(xi, theta / (2.0 * (kf + 1.0)));
    let two_k = 2 * k as i32;
    let distance = (0..2 * k)
        .map(|j| distance_to_segment(Complex64::from_polar(1.0, PI * f64::from(j) / kf), end))
        .fold(f64::INFINITY, f64::min);
    if distance < BRANCH_POINT_TOL {
        return Err(Error::BranchPointOnPath { distance });
    }
    let g = |s: f64| Complex64::new(1.0, 0.0) - (end * s).powi(two_k);
    // unwrapped arg of g on a uniform grid in s
    let mut unwrapped = Vec::with_capacity(BRANCH_TRACK_POINTS + 1);
    let mut prev = 0.0;
    for j in 0..=BRANCH_TRACK_POINTS {
        let a = g(j as f64 / BRANCH_TRACK_POINTS as f64).arg();
        let a = a + 2.0 * PI * ((prev - a) / (2.0 * PI)).round();
        unwrapped.push(a);
        prev = a;
    }
    let branch_sqrt = |s: f64| {
        let v = g(s);
        let pos = s * BRANCH_TRACK_POINTS as f64;
        let i = (pos.floor() as usize).min(BRANCH_TRACK_POINTS - 1);
        let w = pos - i as f64;
        let guide = unwrapped[i] * (1.0 - w) + unwrapped[i + 1] * w;
        let a = v.arg();
        let a = a + 2.0 * PI * ((guide - a) / (2.0 * PI)).round();
        Complex64::from_polar(v.norm().sqrt(), 0.5 * a)
    };
    let r = integrate_segment(|t| branch_sqrt((t / end).re.clamp(0.0, 1.0)), Complex64::new(0.0, 0.0), end, PHI_TOL)?;
    Ok(r.value.im)
}

/// `c_k(θ)`; even in θ.
pub fn c_k(k: u32, theta: f64) -> Result<f64> {
    Ok(even_constants(k, theta)?.c_k)
}

/// `ξ_k`, `φ_k(ξ_k)`, `c_k` and (for `k = 1`) the threshold `T(θ)`.
pub fn even_constants(k: u32, theta: f64) -> Result<EvenConstants> {
    let xi = xi_k(k, theta)?;
    let t = theta.abs();
    let phi = phi_k(k, t, xi)?;
    let kf = f64::from(k);
    let c_k = 2.0 * (kf + 1.0) * PI.sqrt() * gamma((kf + 1.0) / (2.0 * kf)) * phi / gamma(1.0 / (2.0 * kf));
    let t_threshold = (k == 1).then(|| c_k / (t / 2.0).cos());
    Ok(EvenConstants { k, theta, xi, phi_at_xi: phi, c_k, t_threshold })
}

/// Constants for either family. `k = 1` carries `T(θ)`.
pub fn asymptotic_constants(m: u32, theta: f64) -> Result<AsymptoticConstants> {
    match m {
        1 => airy_constants(theta).map(AsymptoticConstants::Airy),
        m if m >= 2 && m % 2 == 0 => even_constants(m / 2, theta).map(AsymptoticConstants::Even),
        m => Err(Error::UnsupportedExponent(f64::from(m))),
    }
}

/// `f(z) = log(z + √(z²−1)) − z√(z²−1)` with `√(z²−1) = √(z−1)√(z+1)`,
/// analytic off `[−1, 1]`.
pub fn davies_f(z: Complex64) -> Result<Complex64> {
    if z.im == 0.0 && z.re.abs() <= 1.0 {
        return Err(Error::BranchCut(z.re));
    }
    let one = Complex64::new(1.0, 0.0);
    let r = (z - one).sqrt() * (z + one).sqrt();
    Ok((z + r).ln() - z * r)
}

/// `c₁(θ) = 2 Re f(e^{i|θ|/4}/√(2cos(θ/2)))`, independent of the contour
/// integral behind [`c_k`].
pub fn c1_closed_form(theta: f64) -> Result<f64> {
    check_nonzero_in_sector(2.0, theta)?;
    let t = theta.abs();
    let z = Complex64::from_polar(1.0 / (2.0 * (t / 2.0).cos()).sqrt(), t / 4.0);
    Ok(2.0 * davies_f(z)?.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub residual: f64,
}

/// Least-squares line through `(x, y)`.
pub fn fit_line(points: &[(f64, f64)]) -> Result<GrowthFit> {
    if points.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} points, need at least 3", points.len())));
    }
    if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
        return Err(Error::DegenerateFit("abscissae must increase strictly".into()));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::DegenerateFit("non-finite point".into()));
    }
    let len = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / len;
    let my = points.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum::<f64>() / len).sqrt();
    Ok(GrowthFit { slope, intercept, residual })
}

/// Fits `log κₙ + ½ log n` against `n`; the slope estimates the exponential rate.
pub fn fit_growth_rate(points: &[(usize, f64)]) -> Result<GrowthFit> {
    let shifted: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, lk)| {
            let nf = n as f64;
            (nf, lk + 0.5 * nf.ln())
        })
        .collect();
    if points.iter().any(|p| p.0 == 0) {
        return Err(Error::DegenerateFit("indices start at 1".into()));
    }
    fit_line(&shifted)
}

/// Upper end of the admissible `|θ|` for `m = 2k`.
pub fn even_theta_bound(k: u32) -> f64 {
    even_sector(k)
}
