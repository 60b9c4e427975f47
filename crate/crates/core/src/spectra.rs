//! Discretizations of `A(m, θ)`, eigenpairs, and every route to `κₙ`.
//!
//! Routes to `κₙ = ‖uₙ‖²/|⟨uₙ, ūₙ⟩|`:
//!
//! - [`kappa_galerkin`]: from eigenvectors of a discretization (Hermite
//!   basis for even `m`, finite differences for `m = 1`).
//! - [`kappa_airy`]: `m = 1` via `Ai(μ + e^{iθ/3}x)`; the denominator is
//!   `Ai'(μ)² − μAi(μ)²` in closed form.
//! - [`kappa_harmonic_exact`]: `m = 2` via `h_{n−1}(e^{iθ/4}x)`; the
//!   denominator is exactly 1.
//! - [`kappa_ray`]: `m = 2k` via the selfadjoint eigenfunction evaluated on
//!   the ray `e^{iθ/(2(k+1))}ℝ`.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::airy::{ai, airy_point};
use crate::asym::gamma;
use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::model::{
    eigenvalue_order, validate_spec, Boundary, EigenRecord, Exponent, InstabilityRecord, KappaMethod, OperatorSpec,
    Representation,
};
use crate::quad::integrate_log_profile;

/// Relative eigenvalue change allowed between `N` and `2N` (Hermite basis).
pub const CERTIFY_TOL: f64 = 1e-8;
/// Relative eigenvalue change allowed between `M` and `2M` intervals
/// (second-order finite differences).
pub const FD_CERTIFY_TOL: f64 = 1e-3;
/// `|Σ c_j²| / Σ |c_j|²` below which the Galerkin denominator is noise.
pub const DENOMINATOR_FLOOR: f64 = 1e-13;
/// Relative change of the ray integral allowed between `N` and `2N`.
pub const RAY_TOL: f64 = 1e-6;
const KAPPA_QUAD_TOL: f64 = 1e-13;
/// Expansion coefficients below this fraction of the largest are eigensolver
/// round-off; at complex arguments they are amplified by `|h_j|` and dropped.
const RAY_COEFF_FLOOR: f64 = 1e-14;
const FD_COARSE_INTERVALS: usize = 400;
const INVERSE_ITERATION_MAX: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig {
    /// Hermite basis size `N`.
    pub basis_size: usize,
    /// Scale `s` of the basis `√s·h_j(s·x)`; `None` picks it from the
    /// kinetic/potential balance at index `N/4`.
    pub hermite_scale: Option<f64>,
    /// Finite differences run on `[−L, L]`.
    pub fd_domain: f64,
    /// Number of grid intervals `M` (even, so `x = 0` is a node).
    pub fd_points: usize,
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        DiscretizationConfig { basis_size: 300, hermite_scale: None, fd_domain: 12.0, fd_points: 2000 }
    }
}

impl DiscretizationConfig {
    pub fn with_basis_size(mut self, n: usize) -> Self {
        self.basis_size = n;
        self
    }

    pub fn with_scale(mut self, s: f64) -> Self {
        self.hermite_scale = Some(s);
        self
    }

    fn validate(&self) -> Result<()> {
        if let Some(s) = self.hermite_scale {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("hermite scale must be positive, got {s}")));
            }
        }
        if self.basis_size < 4 {
            return Err(Error::Config(format!("basis size {} below 4", self.basis_size)));
        }
        if !(self.fd_domain > 0.0 && self.fd_domain.is_finite()) {
            return Err(Error::Config(format!("fd domain must be positive, got {}", self.fd_domain)));
        }
        if self.fd_points < 8 || !self.fd_points.is_multiple_of(2) {
            return Err(Error::Config(format!("fd points must be even and at least 8, got {}", self.fd_points)));
        }
        Ok(())
    }
}

/// WKB estimate of the `n`-th eigenvalue of `−d²/dx² + x^{2k}`.
pub fn wkb_energy(k: u32, n: usize) -> f64 {
    let kf = f64::from(k);
    let a = 1.0 / (2.0 * kf);
    // ∫₀¹ √(1 − t^{2k}) dt
    let area = PI.sqrt() * gamma(1.0 + a) / (2.0 * gamma(1.5 + a));
    (PI * (n as f64 - 0.5) / (2.0 * area)).powf(2.0 * kf / (kf + 1.0))
}

/// Scale balancing the basis's position and momentum reach at energy `E`:
/// `s = E^{(k−1)/(4k)}`.
pub fn balanced_scale(k: u32, energy: f64) -> f64 {
    let kf = f64::from(k);
    energy.powf((kf - 1.0) / (4.0 * kf))
}

fn resolve_scale(k: u32, config: &DiscretizationConfig) -> f64 {
    config
        .hermite_scale
        .unwrap_or_else(|| balanced_scale(k, wkb_energy(k, (config.basis_size / 4).max(1))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MatrixKind {
    Hermite { scale: f64 },
    FiniteDifference { spacing: f64 },
}

/// A truncated discretization of `A(m, θ)`. Stored banded; [`to_dense`]
/// gives the full matrix.
///
/// [`to_dense`]: OperatorMatrix::to_dense
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: BandMatrix,
    pub spec: OperatorSpec,
    pub config: DiscretizationConfig,
    pub kind: MatrixKind,
}

impl OperatorMatrix {
    pub fn size(&self) -> usize {
        self.entries.n()
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        self.entries.to_dense()
    }

    pub fn is_transpose_symmetric(&self) -> bool {
        self.entries.is_transpose_symmetric()
    }
}

/// Real band matrix used while assembling ladder polynomials.
struct RealBand {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl RealBand {
    fn zeros(n: usize, p: usize) -> Self {
        RealBand { n, p, data: vec![0.0; n * (2 * p + 1)] }
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.p || i >= self.n || j >= self.n {
            0.0
        } else {
            self.data[i * (2 * self.p + 1) + (j + self.p - i)]
        }
    }

    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * (2 * self.p + 1) + (j + self.p - i)] = v;
    }
}

/// `(X/s)^{2k}` and `s²T` on the first `n` Hermite functions, where `X` is
/// the position ladder matrix and `T` the kinetic matrix of the unit-scale
/// basis. Entries are exact (the power is formed on `n + 2k` functions).
fn hermite_parts(k: u32, n: usize, s: f64) -> (RealBand, RealBand) {
    let k2 = 2 * k as usize;
    let big = n + k2;
    let x = |i: usize, j: usize| -> f64 {
        if j == i + 1 {
            ((i + 1) as f64 / 2.0).sqrt() / s
        } else if i == j + 1 {
            ((j + 1) as f64 / 2.0).sqrt() / s
        } else {
            0.0
        }
    };
    // power = I, then multiply by X on the right 2k times
    let mut power = RealBand::zeros(big, k2);
    for i in 0..big {
        power.set(i, i, 1.0);
    }
    for r in 0..k2 {
        let mut next = RealBand::zeros(big, k2);
        for i in 0..big {
            let lo = i.saturating_sub(r + 1);
            let hi = (i + r + 1).min(big - 1);
            for j in lo..=hi {
                let mut v = 0.0;
                if j > 0 {
                    v += power.get(i, j - 1) * x(j - 1, j);
                }
                if j + 1 < big {
                    v += power.get(i, j + 1) * x(j + 1, j);
                }
                next.set(i, j, v);
            }
        }
        power = next;
    }
    let mut pot = RealBand::zeros(n, k2);
    for i in 0..n {
        // mirror the upper triangle so the band is exactly symmetric
        for j in i..=(i + k2).min(n - 1) {
            let v = power.get(i, j);
            pot.set(i, j, v);
            pot.set(j, i, v);
        }
    }
    let mut kin = RealBand::zeros(n, 2);
    let s2 = s * s;
    for j in 0..n {
        kin.set(j, j, s2 * (2 * j + 1) as f64 / 2.0);
        if j + 2 < n {
            let off = -s2 * (((j + 1) * (j + 2)) as f64).sqrt() / 2.0;
            kin.set(j, j + 2, off);
            kin.set(j + 2, j, off);
        }
    }
    (kin, pot)
}

fn hermite_band(k: u32, theta: f64, n: usize, s: f64) -> BandMatrix {
    let (kin, pot) = hermite_parts(k, n, s);
    let p = pot.p.max(kin.p);
    let phase = Complex64::from_polar(1.0, theta);
    let mut a = BandMatrix::zeros(n, p);
    for i in 0..n {
        for j in a.row_range(i) {
            a.set(i, j, Complex64::new(kin.get(i, j), 0.0) + phase * pot.get(i, j));
        }
    }
    a
}

fn hermite_real_dense(k: u32, n: usize, s: f64) -> Mat<f64> {
    let (kin, pot) = hermite_parts(k, n, s);
    Mat::from_fn(n, n, |i, j| kin.get(i, j) + pot.get(i, j))
}

fn fd_band(theta: f64, domain: f64, intervals: usize) -> (BandMatrix, f64) {
    let h = 2.0 * domain / intervals as f64;
    let n = intervals - 1;
    let phase = Complex64::from_polar(1.0, theta);
    let inv_h2 = 1.0 / (h * h);
    let mut a = BandMatrix::zeros(n, 1);
    for i in 0..n {
        let x = -domain + (i + 1) as f64 * h;
        a.set(i, i, Complex64::new(2.0 * inv_h2, 0.0) + phase * x.abs());
        if i + 1 < n {
            a.set(i, i + 1, Complex64::new(-inv_h2, 0.0));
            a.set(i + 1, i, Complex64::new(-inv_h2, 0.0));
        }
    }
    (a, h)
}

/// Assembles the Hermite–Galerkin matrix (even `m`) or the finite-difference
/// matrix (`m = 1`).
pub fn build_matrix(spec: &OperatorSpec, config: &DiscretizationConfig) -> Result<OperatorMatrix> {
    config.validate()?;
    match spec.exponent() {
        Exponent::Even(k) => {
            let s = resolve_scale(k, config);
            Ok(OperatorMatrix {
                entries: hermite_band(k, spec.theta(), config.basis_size, s),
                spec: *spec,
                config: *config,
                kind: MatrixKind::Hermite { scale: s },
            })
        }
        Exponent::Airy => {
            let (entries, h) = fd_band(spec.theta(), config.fd_domain, config.fd_points);
            Ok(OperatorMatrix { entries, spec: *spec, config: *config, kind: MatrixKind::FiniteDifference { spacing: h } })
        }
    }
}

fn check_nmax(n_max: usize, size: usize) -> Result<()> {
    if n_max == 0 {
        return Err(Error::Config("n_max must be at least 1".into()));
    }
    if 4 * n_max > size {
        return Err(Error::Config(format!("n_max = {n_max} exceeds a quarter of the discretization size {size}")));
    }
    Ok(())
}

fn normalize(v: &mut [Complex64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= norm);
}

/// Dense eigendecomposition, sorted by [`eigenvalue_order`], first `count`
/// pairs with unit-norm vectors.
fn dense_eigen(a: &Mat<Complex64>, count: usize) -> Result<Vec<(Complex64, Vec<Complex64>)>> {
    let e = a.eigen().map_err(|err| Error::Eigensolver(format!("{err:?}")))?;
    let s = e.S();
    let u = e.U();
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eigenvalue_order(&s[i], &s[j]).then(i.cmp(&j)));
    Ok(order
        .into_iter()
        .take(count)
        .map(|c| {
            let mut v: Vec<Complex64> = (0..n).map(|r| u[(r, c)]).collect();
            normalize(&mut v);
            (s[c], v)
        })
        .collect())
}

fn certify(coarse: &[Complex64], fine: &[Complex64], tol: f64) -> Result<()> {
    for (i, (a, b)) in coarse.iter().zip(fine).enumerate() {
        let change = (a - b).norm() / b.norm().max(f64::MIN_POSITIVE);
        if !(change <= tol) {
            return Err(Error::NotConverged { index: i + 1, change });
        }
    }
    Ok(())
}

/// Refines an eigenvalue estimate of a band matrix by shifted inverse
/// iteration; the eigenvalue is the bilinear Rayleigh quotient `vᵀAv/vᵀv`.
fn inverse_iteration(a: &BandMatrix, seed: Complex64) -> Result<(Complex64, Vec<Complex64>)> {
    let n = a.n();
    let lu = BandLu::factor(a, seed);
    let mut v: Vec<Complex64> =
        (0..n).map(|i| Complex64::new(1.0 + 0.37 * (i as f64 * 1.3).sin(), 0.21 * (i as f64 * 0.7).cos())).collect();
    normalize(&mut v);
    let mut lambda = seed;
    for it in 0..INVERSE_ITERATION_MAX {
        if lu.is_singular() {
            // the seed is an eigenvalue to machine precision
            break;
        }
        lu.solve(&mut v);
        normalize(&mut v);
        let av = a.mul_vec(&v);
        let num: Complex64 = v.iter().zip(&av).map(|(x, y)| x * y).sum();
        let den: Complex64 = v.iter().map(|x| x * x).sum();
        let next = num / den;
        let change = (next - lambda).norm();
        lambda = next;
        if it > 2 && change <= 1e-15 * lambda.norm() {
            return Ok((lambda, v));
        }
    }
    // residual decides whether a stalled iteration is nonetheless converged
    let av = a.mul_vec(&v);
    let res = av.iter().zip(&v).map(|(x, y)| (x - lambda * y).norm_sqr()).sum::<f64>().sqrt();
    if res <= 1e-8 * lambda.norm().max(1.0) {
        Ok((lambda, v))
    } else {
        Err(Error::ConvergenceFailure { what: "inverse iteration".into(), iterations: INVERSE_ITERATION_MAX })
    }
}

/// Finite-difference eigenpairs at two levels `M` and `2M`.
struct FdLevels {
    coarse: Vec<(Complex64, Vec<Complex64>)>,
    fine: Vec<(Complex64, Vec<Complex64>)>,
    fine_spacing: f64,
}

fn fd_levels(theta: f64, config: &DiscretizationConfig, n_max: usize) -> Result<FdLevels> {
    let m = config.fd_points;
    check_nmax(n_max, m - 1)?;
    let seed_intervals = FD_COARSE_INTERVALS.max(8 * n_max).min(m);
    let (seed_mat, _) = fd_band(theta, config.fd_domain, seed_intervals);
    let seeds = dense_eigen(&seed_mat.to_dense(), n_max)?;
    let (a1, _) = fd_band(theta, config.fd_domain, m);
    let coarse = seeds.iter().map(|(z, _)| inverse_iteration(&a1, *z)).collect::<Result<Vec<_>>>()?;
    let (a2, h2) = fd_band(theta, config.fd_domain, 2 * m);
    let fine = coarse.iter().map(|(z, _)| inverse_iteration(&a2, *z)).collect::<Result<Vec<_>>>()?;
    for w in coarse.windows(2) {
        if (w[0].0 - w[1].0).norm() <= 1e-10 * w[1].0.norm() {
            return Err(Error::Eigensolver("inverse iteration converged twice to the same eigenvalue".into()));
        }
    }
    Ok(FdLevels { coarse, fine, fine_spacing: h2 })
}

fn richardson(coarse: f64, fine: f64) -> f64 {
    (4.0 * fine - coarse) / 3.0
}

/// Eigenpairs `1..=n_max` of a discretization, sorted by modulus and
/// certified by refinement.
///
/// Hermite matrices are refined to `2N` (same scale) and must agree to
/// [`CERTIFY_TOL`]. Finite-difference eigenvalues are Richardson
/// extrapolated from `M` and `2M` intervals, must agree to
/// [`FD_CERTIFY_TOL`], and carry the `2M`-grid eigenvector.
pub fn eigenpairs(matrix: &OperatorMatrix, n_max: usize) -> Result<Vec<EigenRecord>> {
    match (matrix.spec.exponent(), matrix.kind) {
        (Exponent::Even(k), MatrixKind::Hermite { scale }) => {
            let n = matrix.size();
            check_nmax(n_max, n)?;
            let pairs = dense_eigen(&matrix.to_dense(), n_max)?;
            let fine = dense_eigen(&hermite_band(k, matrix.spec.theta(), 2 * n, scale).to_dense(), n_max)?;
            let a: Vec<Complex64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<Complex64> = fine.iter().map(|p| p.0).collect();
            certify(&a, &b, CERTIFY_TOL)?;
            Ok(pairs
                .into_iter()
                .enumerate()
                .map(|(i, (lambda, coeffs))| EigenRecord {
                    n: i + 1,
                    lambda,
                    representation: Representation::HermiteCoeffs { coeffs, scale },
                })
                .collect())
        }
        (Exponent::Airy, MatrixKind::FiniteDifference { .. }) => {
            let levels = fd_levels(matrix.spec.theta(), &matrix.config, n_max)?;
            let a: Vec<Complex64> = levels.coarse.iter().map(|p| p.0).collect();
            let b: Vec<Complex64> = levels.fine.iter().map(|p| p.0).collect();
            certify(&a, &b, FD_CERTIFY_TOL)?;
            let mut records: Vec<EigenRecord> = levels
                .fine
                .into_iter()
                .zip(a)
                .map(|((fine, values), coarse)| EigenRecord {
                    n: 0,
                    lambda: (fine * 4.0 - coarse) / 3.0,
                    representation: Representation::GridValues { values, spacing: levels.fine_spacing },
                })
                .collect();
            crate::model::sort_records(&mut records);
            Ok(records)
        }
        _ => Err(Error::Config("matrix kind does not match the exponent".into())),
    }
}

fn galerkin_kappa_of(index: usize, v: &[Complex64]) -> Result<f64> {
    let num: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let den: Complex64 = v.iter().map(|z| z * z).sum();
    let ratio = den.norm() / num;
    if ratio < DENOMINATOR_FLOOR {
        return Err(Error::DenominatorUnderflow { index, ratio });
    }
    Ok(1.0 / ratio)
}

/// `κ₁ … κ_{n_max}` from discretization eigenvectors: `Σ|c_j|² / |Σ c_j²|`.
///
/// Hermite route: the error estimate is the relative change between `N` and
/// `2N`. Finite-difference route: `κ` is Richardson extrapolated from `M`
/// and `2M` intervals and the error estimate is the size of the correction.
/// Fails as a whole on the first index whose κ cannot be trusted.
pub fn kappa_galerkin_range(
    spec: &OperatorSpec,
    config: &DiscretizationConfig,
    n_max: usize,
) -> Result<Vec<InstabilityRecord>> {
    kappa_galerkin_rows(spec, config, n_max)?.into_iter().collect()
}

/// Like [`kappa_galerkin_range`], but a per-index failure (such as
/// [`Error::DenominatorUnderflow`]) is reported in its row instead of
/// aborting; the outer error covers the eigensolve and its certification.
pub fn kappa_galerkin_rows(
    spec: &OperatorSpec,
    config: &DiscretizationConfig,
    n_max: usize,
) -> Result<Vec<Result<InstabilityRecord>>> {
    config.validate()?;
    let (coarse, fine, extrapolate) = match spec.exponent() {
        Exponent::Even(k) => {
            let n = config.basis_size;
            check_nmax(n_max, n)?;
            let s = resolve_scale(k, config);
            let coarse = dense_eigen(&hermite_band(k, spec.theta(), n, s).to_dense(), n_max)?;
            let fine = dense_eigen(&hermite_band(k, spec.theta(), 2 * n, s).to_dense(), n_max)?;
            (coarse, fine, false)
        }
        Exponent::Airy => {
            let levels = fd_levels(spec.theta(), config, n_max)?;
            (levels.coarse, levels.fine, true)
        }
    };
    let a: Vec<Complex64> = coarse.iter().map(|p| p.0).collect();
    let b: Vec<Complex64> = fine.iter().map(|p| p.0).collect();
    certify(&a, &b, if extrapolate { FD_CERTIFY_TOL } else { CERTIFY_TOL })?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .enumerate()
        .map(|(i, ((_, u), (_, w)))| {
            let k1 = galerkin_kappa_of(i + 1, u)?;
            let k2 = galerkin_kappa_of(i + 1, w)?;
            let (kappa, err) = if extrapolate {
                let kr = richardson(k1, k2);
                (kr, (kr - k2).abs() / kr)
            } else {
                (k1, (k1 - k2).abs() / k1)
            };
            Ok(InstabilityRecord::from_log(i + 1, kappa.ln(), KappaMethod::Galerkin, err))
        })
        .collect())
}

/// `κₙ` from discretization eigenvectors; see [`kappa_galerkin_range`].
pub fn kappa_galerkin(spec: &OperatorSpec, config: &DiscretizationConfig, n: usize) -> Result<InstabilityRecord> {
    let needed = match spec.exponent() {
        Exponent::Even(_) => config.basis_size,
        Exponent::Airy => config.fd_points - 1,
    };
    check_nmax(n, needed)?;
    Ok(kappa_galerkin_range(spec, config, n)?.pop().expect("n >= 1"))
}

/// Maps a full-line index of `A(1, θ)` to the half-line problem: odd `n` is
/// Neumann `⌈n/2⌉`, even `n` is Dirichlet `n/2`.
pub fn airy_half_line_index(n: usize) -> (usize, Boundary) {
    if n % 2 == 1 {
        (n.div_ceil(2), Boundary::Neumann)
    } else {
        (n / 2, Boundary::Dirichlet)
    }
}

/// `λ = −e^{2iθ/3} μ` for the half-line point `μ`.
pub fn airy_eigenvalue(theta: f64, n_halfline: usize, bc: Boundary) -> Result<Complex64> {
    let p = airy_point(n_halfline, bc)?;
    Ok(-Complex64::from_polar(1.0, 2.0 * theta / 3.0) * p.mu)
}

/// Exact eigenrecords `1..=n_max` of `A(1, θ)` on the full line.
pub fn airy_eigenrecords(theta: f64, n_max: usize) -> Result<Vec<EigenRecord>> {
    validate_spec(1.0, theta)?;
    (1..=n_max)
        .map(|n| {
            let (j, bc) = airy_half_line_index(n);
            let p = airy_point(j, bc)?;
            Ok(EigenRecord {
                n,
                lambda: -Complex64::from_polar(1.0, 2.0 * theta / 3.0) * p.mu,
                representation: Representation::AiryParam { mu: p.mu, bc },
            })
        })
        .collect()
}

/// Exact eigenrecords `1..=n_max` of `A(2, θ)`: `λₙ = e^{iθ/2}(2n − 1)`.
pub fn harmonic_eigenrecords(theta: f64, n_max: usize) -> Result<Vec<EigenRecord>> {
    validate_spec(2.0, theta)?;
    Ok((1..=n_max)
        .map(|n| EigenRecord {
            n,
            lambda: Complex64::from_polar((2 * n - 1) as f64, theta / 2.0),
            representation: Representation::ClosedFormHarmonic { n },
        })
        .collect())
}

/// `κ` of the half-line problem with boundary `bc` at `μ = μ_{n}^{bc}`.
///
/// Numerator `∫₀^∞ |Ai(μ + e^{iθ/3}x)|² dx` by log-profile quadrature;
/// denominator `|∫₀^∞ Ai(μ + e^{iθ/3}x)² dx| = Ai'(μ)² − μAi(μ)²`.
pub fn kappa_airy(theta: f64, n_halfline: usize, bc: Boundary) -> Result<InstabilityRecord> {
    validate_spec(1.0, theta)?;
    let p = airy_point(n_halfline, bc)?;
    let (a0, ap0) = crate::airy::ai_real(p.mu);
    let denominator = ap0 * ap0 - p.mu * a0 * a0;
    let dir = Complex64::from_polar(1.0, theta / 3.0);
    let mu = Complex64::new(p.mu, 0.0);
    let ln_f = |x: f64| 2.0 * ai(mu + dir * x).ln_abs_ai();
    // resolves the oscillation near x = 0 (wavelength about 2π/√|μ|); for
    // large |μ| that region is negligible and the peak is far wider
    let step = (0.25 / (1.0 + p.mu.abs()).sqrt()).max(1e-3 * p.mu.abs());
    let num = integrate_log_profile(ln_f, 0.0, step, KAPPA_QUAD_TOL)?;
    Ok(InstabilityRecord::from_log(n_halfline, num.ln_value - denominator.ln(), KappaMethod::Airy, num.rel_err))
}

/// Full-line `κₙ(1, θ)` through [`airy_half_line_index`]; both integrals
/// double, so the ratio is the half-line one.
pub fn kappa_airy_full_line(theta: f64, n: usize) -> Result<InstabilityRecord> {
    let (j, bc) = airy_half_line_index(n);
    let mut r = kappa_airy(theta, j, bc)?;
    r.n = n;
    Ok(r)
}

/// `Σ_j c_j h_j(z)` for orthonormal Hermite functions `h_j`, as
/// `(value, ln_scale)` with the sum equal to `value·e^{ln_scale}`.
pub fn hermite_sum(coeffs: &[Complex64], z: Complex64) -> (Complex64, f64) {
    const BIG: f64 = 1e150;
    let z2 = z * z;
    let mut ln_scale = -0.5 * z2.re;
    let mut prev = Complex64::new(0.0, 0.0);
    let mut cur = Complex64::from_polar(PI.powf(-0.25), -0.5 * z2.im);
    let mut acc = Complex64::new(0.0, 0.0);
    for (j, &c) in coeffs.iter().enumerate() {
        acc += c * cur;
        if j + 1 == coeffs.len() {
            break;
        }
        let jf = j as f64;
        let next = cur * z * (2.0 / (jf + 1.0)).sqrt() - prev * (jf / (jf + 1.0)).sqrt();
        prev = cur;
        cur = next;
        let m = cur.norm().max(acc.norm());
        if m > BIG {
            prev /= BIG;
            cur /= BIG;
            acc /= BIG;
            ln_scale += BIG.ln();
        }
    }
    (acc, ln_scale)
}

/// `ln|h_j(z)|` by the scaled three-term recurrence.
pub fn ln_abs_hermite_function(j: usize, z: Complex64) -> f64 {
    const BIG: f64 = 1e150;
    let z2 = z * z;
    let mut ln_scale = -0.5 * z2.re;
    let mut prev = Complex64::new(0.0, 0.0);
    let mut cur = Complex64::from_polar(PI.powf(-0.25), -0.5 * z2.im);
    for i in 0..j {
        let f = i as f64;
        let next = cur * z * (2.0 / (f + 1.0)).sqrt() - prev * (f / (f + 1.0)).sqrt();
        prev = cur;
        cur = next;
        if cur.norm() > BIG {
            prev /= BIG;
            cur /= BIG;
            ln_scale += BIG.ln();
        }
    }
    cur.norm().ln() + ln_scale
}

/// `κₙ(2, θ) = ∫_ℝ |h_{n−1}(e^{iθ/4}x)|² dx`.
pub fn kappa_harmonic_exact(theta: f64, n: usize) -> Result<InstabilityRecord> {
    validate_spec(2.0, theta)?;
    if n == 0 {
        return Err(Error::Config("indices start at 1".into()));
    }
    let dir = Complex64::from_polar(1.0, theta / 4.0);
    let j = n - 1;
    let step = 0.25 / (1.0 + 2.0 * j as f64).sqrt();
    let r = integrate_log_profile(|x| 2.0 * ln_abs_hermite_function(j, dir * x), 0.0, step, KAPPA_QUAD_TOL)?;
    Ok(InstabilityRecord::from_log(n, std::f64::consts::LN_2 + r.ln_value, KappaMethod::HarmonicExact, r.rel_err))
}

/// Result of the ray route: `κₙ(2k, θ)`, `λₙ = e^{iθ/(k+1)}Eₙ` and `Eₙ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayResult {
    pub record: InstabilityRecord,
    pub lambda: Complex64,
    pub energy: f64,
}

fn selfadjoint_eigen(k: u32, n: usize, s: f64, count: usize) -> Result<Vec<(f64, Vec<Complex64>)>> {
    let a = hermite_real_dense(k, n, s);
    let e = a.self_adjoint_eigen(Side::Lower).map_err(|err| Error::Eigensolver(format!("{err:?}")))?;
    let (vals, vecs) = (e.S(), e.U());
    // ascending already; eigenvalues of the selfadjoint problem are positive
    Ok((0..count).map(|c| (vals[c], (0..n).map(|r| Complex64::new(vecs[(r, c)], 0.0)).collect())).collect())
}

fn ray_ln_integral(k: u32, alpha: f64, s: f64, energy: f64, coeffs: &[Complex64]) -> Result<(f64, f64)> {
    let dir = Complex64::from_polar(1.0, alpha) * s;
    let step = (0.25 / energy.max(1.0).sqrt()).min(0.1);
    let _ = k;
    let peak = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let keep = coeffs.iter().rposition(|c| c.norm() > RAY_COEFF_FLOOR * peak).map_or(0, |j| j + 1);
    let coeffs = &coeffs[..keep];
    let r = integrate_log_profile(
        |x| {
            let (v, ln_scale) = hermite_sum(coeffs, dir * x);
            2.0 * (v.norm().ln() + ln_scale)
        },
        0.0,
        step,
        KAPPA_QUAD_TOL,
    )?;
    // both halves of ℝ contribute equally (eigenfunctions have parity)
    Ok((std::f64::consts::LN_2 + s.ln() + r.ln_value, r.rel_err))
}

/// `κ₁ … κ_{n_max}` of `A(2k, θ)` via `∫_ℝ |ψₙ(e^{iθ/(2(k+1))}x)|² dx` for the
/// selfadjoint eigenfunctions `ψₙ`, certified by comparing bases `N` and `2N`.
pub fn kappa_ray_range(k: u32, theta: f64, n_max: usize, config: &DiscretizationConfig) -> Result<Vec<RayResult>> {
    config.validate()?;
    validate_spec(f64::from(2 * k), theta)?;
    let n = config.basis_size;
    check_nmax(n_max, n)?;
    let s = resolve_scale(k, config);
    let kf = f64::from(k);
    let alpha = theta / (2.0 * (kf + 1.0));
    let coarse = selfadjoint_eigen(k, n, s, n_max)?;
    let fine = selfadjoint_eigen(k, 2 * n, s, n_max)?;
    coarse
        .iter()
        .zip(&fine)
        .enumerate()
        .map(|(i, ((e1, u), (e2, w)))| {
            let index = i + 1;
            let e_change = (e1 - e2).abs() / e2;
            if e_change > CERTIFY_TOL {
                return Err(Error::NotConverged { index, change: e_change });
            }
            let (l1, q1) = ray_ln_integral(k, alpha, s, *e1, u)?;
            let (l2, _) = ray_ln_integral(k, alpha, s, *e2, w)?;
            let change = (l1 - l2).abs();
            if !(change <= RAY_TOL) {
                return Err(Error::RayDivergence { index, change });
            }
            Ok(RayResult {
                record: InstabilityRecord::from_log(index, l2, KappaMethod::Ray, change.max(q1)),
                lambda: Complex64::from_polar(*e2, theta / (kf + 1.0)),
                energy: *e2,
            })
        })
        .collect()
}

/// `κₙ(2k, θ)` by the ray route; see [`kappa_ray_range`].
pub fn kappa_ray(k: u32, theta: f64, n: usize, config: &DiscretizationConfig) -> Result<RayResult> {
    Ok(kappa_ray_range(k, theta, n, config)?.pop().expect("n >= 1"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: f64, theta: f64) -> OperatorSpec {
        validate_spec(m, theta).unwrap()
    }

    #[test]
    fn harmonic_matrix_is_diagonal_at_unit_scale() {
        let cfg = DiscretizationConfig::default().with_basis_size(40).with_scale(1.0);
        let a = build_matrix(&spec(2.0, 0.0), &cfg).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let expected = if i == j { (2 * i + 1) as f64 } else { 0.0 };
                assert!((a.entries.get(i, j) - Complex64::new(expected, 0.0)).norm() < 1e-12, "({i},{j})");
            }
        }
    }

    #[test]
    fn hermite_matrices_are_transpose_symmetric() {
        for (m, theta) in [(2.0, 0.6), (4.0, 0.5), (6.0, -0.3)] {
            let a = build_matrix(&spec(m, theta), &DiscretizationConfig::default().with_basis_size(60)).unwrap();
            assert!(a.is_transpose_symmetric());
        }
    }

    #[test]
    fn quartic_potential_matches_direct_power() {
        // (X²)² on a large basis against X² squared, checked on a corner
        let (_, pot) = hermite_parts(2, 10, 1.0);
        let (_, x2) = hermite_parts(1, 14, 1.0);
        for i in 0..10 {
            for j in 0..10 {
                let direct: f64 = (0..14).map(|l| x2.get(i, l) * x2.get(l, j)).sum();
                assert!((pot.get(i, j) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn harmonic_eigenvalues_by_dilation() {
        let cfg = DiscretizationConfig::default().with_basis_size(300);
        let a = build_matrix(&spec(2.0, 0.6), &cfg).unwrap();
        let recs = eigenpairs(&a, 15).unwrap();
        for r in &recs {
            let exact = Complex64::from_polar((2 * r.n - 1) as f64, 0.3);
            assert!((r.lambda - exact).norm() <= 1e-8 * exact.norm(), "n = {}", r.n);
        }
    }

    #[test]
    fn quartic_selfadjoint_eigenvalues_real_increasing() {
        let a = build_matrix(&spec(4.0, 0.0), &DiscretizationConfig::default().with_basis_size(120)).unwrap();
        let recs = eigenpairs(&a, 20).unwrap();
        for w in recs.windows(2) {
            assert!(w[0].lambda.re < w[1].lambda.re);
        }
        for r in &recs {
            assert!(r.lambda.im.abs() < 1e-10 * r.lambda.re);
        }
        // ground state of −d² + x⁴
        assert!((recs[0].lambda.re - 1.060_362_090_484_182_9).abs() < 1e-9);
    }

    #[test]
    fn nmax_beyond_quarter_is_rejected() {
        let a = build_matrix(&spec(2.0, 0.2), &DiscretizationConfig::default().with_basis_size(40)).unwrap();
        assert!(matches!(eigenpairs(&a, 11), Err(Error::Config(_))));
    }

    #[test]
    fn finite_difference_ground_state() {
        let cfg = DiscretizationConfig { fd_domain: 20.0, fd_points: 2000, ..Default::default() };
        let a = build_matrix(&spec(1.0, 0.0), &cfg).unwrap();
        let recs = eigenpairs(&a, 4).unwrap();
        let mu1 = airy_point(1, Boundary::Neumann).unwrap().mu;
        assert!((recs[0].lambda.re + mu1).abs() < 1e-4, "{}", recs[0].lambda);
        assert!((recs[0].lambda.re - 1.0188).abs() < 1e-4);
    }

    #[test]
    fn finite_difference_interleaves_neumann_and_dirichlet() {
        let theta = 0.5;
        let a = build_matrix(&spec(1.0, theta), &DiscretizationConfig::default()).unwrap();
        let recs = eigenpairs(&a, 6).unwrap();
        for r in &recs {
            let (j, bc) = airy_half_line_index(r.n);
            let exact = airy_eigenvalue(theta, j, bc).unwrap();
            assert!((r.lambda - exact).norm() < 1e-6 * exact.norm(), "n = {}: {} vs {}", r.n, r.lambda, exact);
        }
    }

    #[test]
    fn selfadjoint_kappa_is_one() {
        for m in [2.0, 4.0] {
            let cfg = DiscretizationConfig::default().with_basis_size(120);
            for r in kappa_galerkin_range(&spec(m, 0.0), &cfg, 10).unwrap() {
                assert!((r.kappa - 1.0).abs() < 1e-8);
            }
        }
        let cfg = DiscretizationConfig { fd_points: 800, ..Default::default() };
        for r in kappa_galerkin_range(&spec(1.0, 0.0), &cfg, 10).unwrap() {
            assert!((r.kappa - 1.0).abs() < 1e-8);
        }
        for n in 1..=10 {
            assert!((kappa_harmonic_exact(0.0, n).unwrap().kappa - 1.0).abs() < 1e-8);
            let (j, bc) = airy_half_line_index(n);
            assert!((kappa_airy(0.0, j, bc).unwrap().kappa - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn harmonic_exact_ground_state() {
        for theta in [0.3, 0.8, 1.5] {
            let r = kappa_harmonic_exact(theta, 1).unwrap();
            assert!((r.kappa - (theta / 2.0).cos().powf(-0.5)).abs() < 1e-10);
        }
    }

    #[test]
    fn harmonic_exact_reference_values() {
        let expected = [(1, 1.023_108_792_620_846_2), (5, 1.553_594_475_708_563_1), (10, 4.553_374_794_826_028)];
        for (n, v) in expected {
            let r = kappa_harmonic_exact(0.6, n).unwrap();
            assert!((r.kappa - v).abs() < 1e-10 * v, "n = {n}: {}", r.kappa);
        }
    }

    #[test]
    fn galerkin_matches_harmonic_exact() {
        let cfg = DiscretizationConfig::default().with_basis_size(300);
        let g = kappa_galerkin(&spec(2.0, 0.6), &cfg, 1).unwrap();
        let e = kappa_harmonic_exact(0.6, 1).unwrap();
        assert!((g.kappa - e.kappa).abs() < 1e-6 * e.kappa);
    }

    #[test]
    fn galerkin_denominator_underflow_is_reported() {
        let cfg = DiscretizationConfig::default().with_basis_size(200).with_scale(1.0);
        match kappa_galerkin(&spec(2.0, 1.5), &cfg, 40) {
            Err(Error::DenominatorUnderflow { index, .. }) => assert!(index <= 40),
            Err(Error::NotConverged { .. }) => {}
            other => panic!("expected underflow or non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn airy_denominator_first_dirichlet() {
        let p = airy_point(1, Boundary::Dirichlet).unwrap();
        let (_, ap) = crate::airy::ai_real(p.mu);
        assert!((ap * ap - 0.491_696_617_9).abs() < 1e-9);
    }

    #[test]
    fn airy_reference_kappas() {
        let theta = PI / 3.0;
        for (n, v) in [(1, 1.117_901_951_74), (2, 1.398_529_527_47), (3, 2.033_207_817_13), (20, 65_956.344_319)] {
            let r = kappa_airy_full_line(theta, n).unwrap();
            assert!((r.kappa - v).abs() < 1e-9 * v, "n = {n}: {}", r.kappa);
        }
        let r = kappa_airy_full_line(theta, 80).unwrap();
        assert!((r.log_kappa - 1.280_376_928_14e22_f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn airy_small_angle_limit() {
        let r = kappa_airy(1e-3, 1, Boundary::Neumann).unwrap();
        assert!(r.kappa - 1.0 < 1e-5 && r.kappa >= 1.0);
    }

    #[test]
    fn kappa_even_in_theta() {
        for n in [1, 4, 9] {
            let a = kappa_airy_full_line(0.7, n).unwrap().kappa;
            let b = kappa_airy_full_line(-0.7, n).unwrap().kappa;
            assert!((a - b).abs() < 1e-8 * a);
            let a = kappa_harmonic_exact(0.7, n).unwrap().kappa;
            let b = kappa_harmonic_exact(-0.7, n).unwrap().kappa;
            assert!((a - b).abs() < 1e-8 * a);
        }
        let cfg = DiscretizationConfig::default().with_basis_size(100);
        let a = kappa_galerkin_range(&spec(4.0, 0.4), &cfg, 5).unwrap();
        let b = kappa_galerkin_range(&spec(4.0, -0.4), &cfg, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.kappa - y.kappa).abs() < 1e-8 * x.kappa);
        }
    }

    #[test]
    fn ray_agrees_with_closed_form_for_harmonic() {
        let cfg = DiscretizationConfig::default().with_basis_size(120);
        let rays = kappa_ray_range(1, 0.6, 15, &cfg).unwrap();
        for r in &rays {
            let e = kappa_harmonic_exact(0.6, r.record.n).unwrap();
            assert!((r.record.kappa - e.kappa).abs() < 1e-8 * e.kappa, "n = {}", r.record.n);
            let exact = Complex64::from_polar((2 * r.record.n - 1) as f64, 0.3);
            assert!((r.lambda - exact).norm() < 1e-9 * exact.norm());
        }
    }

    #[test]
    fn ray_quartic_reference_values() {
        let rays = kappa_ray_range(2, 0.5, 20, &DiscretizationConfig::default()).unwrap();
        for (n, v) in [(1, 1.008_483_64), (10, 1.921_565_25), (20, 7.974_958_13)] {
            assert!((rays[n - 1].record.kappa - v).abs() < 1e-7 * v, "n = {n}: {}", rays[n - 1].record.kappa);
        }
        for (n, e) in [(1, 1.060_362_09), (2, 3.799_673_03), (3, 7.455_697_94)] {
            assert!((rays[n - 1].energy - e).abs() < 1e-7);
        }
    }

    #[test]
    fn ray_eigenvalue_matches_rotated_matrix() {
        let theta = 0.5;
        let cfg = DiscretizationConfig::default().with_basis_size(200);
        let rays = kappa_ray_range(2, theta, 8, &cfg).unwrap();
        let a = build_matrix(&spec(4.0, theta), &cfg).unwrap();
        let recs = eigenpairs(&a, 8).unwrap();
        for (r, e) in rays.iter().zip(&recs) {
            assert!((r.lambda / r.energy - Complex64::from_polar(1.0, theta / 3.0)).norm() < 1e-15);
            assert!((r.lambda - e.lambda).norm() < 1e-8 * e.lambda.norm());
        }
    }

    #[test]
    fn ray_selfadjoint_is_one() {
        for r in kappa_ray_range(2, 0.0, 10, &DiscretizationConfig::default().with_basis_size(120)).unwrap() {
            assert!((r.record.kappa - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn denominator_matches_quadrature() {
        // Σ c_j² against ∫ u(x)² dx for the Hermite expansion u
        let cfg = DiscretizationConfig::default().with_basis_size(120).with_scale(1.0);
        let a = build_matrix(&spec(2.0, 0.6), &cfg).unwrap();
        let recs = eigenpairs(&a, 6).unwrap();
        for r in &recs {
            let Representation::HermiteCoeffs { coeffs, scale } = &r.representation else { panic!() };
            let sum: Complex64 = coeffs.iter().map(|c| c * c).sum();
            let q = crate::quad::integrate_interval(
                |x| {
                    let (v, ln) = hermite_sum(coeffs, Complex64::new(scale * x, 0.0));
                    let u = v * ln.exp() * scale.sqrt();
                    u * u
                },
                -25.0,
                25.0,
                1e-13,
            )
            .unwrap();
            assert!((q.value.norm() - sum.norm()).abs() < 1e-10, "n = {}", r.n);
        }
    }

    #[test]
    fn fd_agrees_with_airy() {
        let cfg = DiscretizationConfig::default();
        let g = kappa_galerkin_range(&spec(1.0, 0.5), &cfg, 6).unwrap();
        for r in &g {
            let e = kappa_airy_full_line(0.5, r.n).unwrap();
            assert!((r.kappa - e.kappa).abs() < 1e-4 * e.kappa, "n = {}: {} vs {}", r.n, r.kappa, e.kappa);
        }
    }

    #[test]
    fn exact_eigenrecords_are_ordered() {
        assert!(crate::model::records_well_ordered(&airy_eigenrecords(0.5, 30).unwrap()));
        assert!(crate::model::records_well_ordered(&harmonic_eigenrecords(0.5, 30).unwrap()));
    }

    #[test]
    fn half_line_index_map() {
        assert_eq!(airy_half_line_index(1), (1, Boundary::Neumann));
        assert_eq!(airy_half_line_index(2), (1, Boundary::Dirichlet));
        assert_eq!(airy_half_line_index(7), (4, Boundary::Neumann));
    }
}
