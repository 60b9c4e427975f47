//! Pseudospectra of truncated discretizations.
//!
//! `σ_ε(A_N) = {z : σ_min(A_N − z) < ε}`. Fields store `log10(1/σ_min)` on a
//! uniform grid; ε-contours are extracted by marching squares. Everything
//! here concerns the matrix truncation, not the operator.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sigma_min_shifted, BandMatrix};
use crate::model::{eigenvalue_order, Exponent, InstabilityRecord, OperatorSpec};
use crate::spectra::{build_matrix, wkb_energy, DiscretizationConfig, MatrixKind, OperatorMatrix};

/// Field values are capped here (`σ_min` at or below `1e-16`).
pub const DEFAULT_CAP: f64 = 16.0;
const POWER_ITERATION_STEPS: usize = 100;
const STABILITY_SAMPLES: usize = 12;
const SECANT_MAX_ITER: usize = 60;
/// Multiple of `u·‖A‖_∞` taken as the round-off floor of a computed `σ_min`.
const SIGMA_ROUNDOFF: f64 = 1.0;

/// Axis-aligned rectangle `[re.0, re.1] × [im.0, im.1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub re: (f64, f64),
    pub im: (f64, f64),
}

impl Window {
    pub fn new(re: (f64, f64), im: (f64, f64)) -> Result<Self> {
        let ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 < r.1;
        if !ok(re) || !ok(im) {
            return Err(Error::Config(format!("degenerate window {re:?} x {im:?}")));
        }
        Ok(Window { re, im })
    }

    /// Square window of half-width `h` around `c`.
    pub fn around(c: Complex64, h: f64) -> Result<Self> {
        Window::new((c.re - h, c.re + h), (c.im - h, c.im + h))
    }

    pub fn contains(&self, z: Complex64) -> bool {
        self.re.0 <= z.re && z.re <= self.re.1 && self.im.0 <= z.im && z.im <= self.im.1
    }

    fn max_modulus(&self) -> f64 {
        [self.re.0, self.re.1]
            .iter()
            .flat_map(|&x| [self.im.0, self.im.1].map(|y| x.hypot(y)))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudospectrumField {
    pub window: Window,
    pub nx: usize,
    pub ny: usize,
    /// `log10(1/σ_min)` in row-major order, `im` index outer.
    pub values: Vec<f64>,
    pub matrix_size: usize,
    pub cap: f64,
    /// Eigenvalues used to label contour components, with 1-based indices.
    pub eigenvalues: Vec<(usize, Complex64)>,
    /// `|z|` below which the truncation is trusted.
    pub trusted_radius: f64,
    /// Largest relative change of the resolvent norm between `N` and `2N` on a
    /// subsample of the grid (`None` for synthetic fields).
    pub n_stability: Option<f64>,
}

impl PseudospectrumField {
    /// Smallest and largest `log10` resolvent norm on the grid.
    pub fn value_range(&self) -> (f64, f64) {
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Whether the level line of `eps` crosses the grid.
    pub fn resolves(&self, eps: f64) -> bool {
        let (lo, hi) = self.value_range();
        let level = -eps.log10();
        lo < level && level < hi
    }

    pub fn x(&self, i: usize) -> f64 {
        self.window.re.0 + (self.window.re.1 - self.window.re.0) * i as f64 / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.window.im.0 + (self.window.im.1 - self.window.im.0) * j as f64 / (self.ny - 1) as f64
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// A field from an explicit function of `z`; used for calibration.
    pub fn from_fn<F: Fn(Complex64) -> f64 + Sync>(
        window: Window,
        nx: usize,
        ny: usize,
        eigenvalues: Vec<(usize, Complex64)>,
        f: F,
    ) -> Result<Self> {
        check_grid(nx, ny)?;
        let mut field = PseudospectrumField {
            window,
            nx,
            ny,
            values: Vec::new(),
            matrix_size: 0,
            cap: DEFAULT_CAP,
            eigenvalues,
            trusted_radius: f64::INFINITY,
            n_stability: None,
        };
        field.values = (0..nx * ny)
            .into_par_iter()
            .map(|p| f(Complex64::new(field.x(p % nx), field.y(p / nx))).min(DEFAULT_CAP))
            .collect();
        Ok(field)
    }

    /// Bilinear interpolation of the field; `None` outside the window.
    pub fn interpolate(&self, z: Complex64) -> Option<f64> {
        if !self.window.contains(z) {
            return None;
        }
        let fx = (z.re - self.window.re.0) / (self.window.re.1 - self.window.re.0) * (self.nx - 1) as f64;
        let fy = (z.im - self.window.im.0) / (self.window.im.1 - self.window.im.0) * (self.ny - 1) as f64;
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        let (u, v) = (fx - i as f64, fy - j as f64);
        Some(
            self.value(i, j) * (1.0 - u) * (1.0 - v)
                + self.value(i + 1, j) * u * (1.0 - v)
                + self.value(i, j + 1) * (1.0 - u) * v
                + self.value(i + 1, j + 1) * u * v,
        )
    }

    /// True when the interpolated field puts `z` in `σ_ε`.
    pub fn contains_in_pseudospectrum(&self, z: Complex64, eps: f64) -> Option<bool> {
        self.interpolate(z).map(|v| v >= -eps.log10())
    }

    /// CSV with header `re,im,log10_resnorm`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "re,im,log10_resnorm")?;
        for j in 0..self.ny {
            for i in 0..self.nx {
                writeln!(out, "{},{},{}", self.x(i), self.y(j), self.value(i, j))?;
            }
        }
        Ok(())
    }
}

fn check_grid(nx: usize, ny: usize) -> Result<()> {
    if nx < 2 || ny < 2 {
        return Err(Error::Config(format!("grid {nx}x{ny} needs at least 2 points per axis")));
    }
    Ok(())
}

fn log_resnorm(a: &BandMatrix, z: Complex64, cap: f64) -> f64 {
    let s = sigma_min_shifted(a, z);
    if s <= 0.0 {
        cap
    } else {
        (-s.log10()).min(cap)
    }
}

/// `|z|` below which eigenvalues of the truncation are trusted:
/// `|λ_{N/4}|` for Hermite matrices, `L/2` for finite differences.
pub fn trusted_radius(matrix: &OperatorMatrix) -> f64 {
    match (matrix.spec.exponent(), matrix.kind) {
        (Exponent::Even(k), _) => wkb_energy(k, (matrix.size() / 4).max(1)),
        (Exponent::Airy, _) => 0.5 * matrix.config.fd_domain,
    }
}

/// Eigenvalues of the truncation inside `window`, indexed by modulus order.
fn window_eigenvalues(matrix: &OperatorMatrix, window: &Window) -> Result<Vec<(usize, Complex64)>> {
    let values: Vec<Complex64> = match matrix.spec.exponent() {
        Exponent::Even(_) => {
            let e = matrix.to_dense().eigenvalues().map_err(|err| Error::Eigensolver(format!("{err:?}")))?;
            let mut v: Vec<Complex64> = e.into_iter().collect();
            v.sort_by(eigenvalue_order);
            v
        }
        Exponent::Airy => {
            // exact operator eigenvalues stand in for the much larger FD matrix
            let mut out = Vec::new();
            let mut n = 1;
            loop {
                let r = crate::spectra::airy_eigenrecords(matrix.spec.theta(), n)?;
                let last = r.last().expect("n >= 1").lambda;
                if last.norm() > window.max_modulus() {
                    out = r.into_iter().map(|e| e.lambda).collect();
                    break;
                }
                n *= 2;
                if n > 1 << 16 {
                    break;
                }
            }
            out
        }
    };
    Ok(values.into_iter().enumerate().map(|(i, z)| (i + 1, z)).filter(|(_, z)| window.contains(*z)).collect())
}

fn grid_values(a: &BandMatrix, window: &Window, nx: usize, ny: usize, cap: f64) -> Vec<f64> {
    let x = |i: usize| window.re.0 + (window.re.1 - window.re.0) * i as f64 / (nx - 1) as f64;
    let y = |j: usize| window.im.0 + (window.im.1 - window.im.0) * j as f64 / (ny - 1) as f64;
    (0..nx * ny).into_par_iter().map(|p| log_resnorm(a, Complex64::new(x(p % nx), y(p / nx)), cap)).collect()
}

fn refined(matrix: &OperatorMatrix) -> Result<OperatorMatrix> {
    let mut cfg = matrix.config;
    match matrix.kind {
        MatrixKind::Hermite { scale } => {
            cfg.basis_size *= 2;
            cfg.hermite_scale = Some(scale);
        }
        MatrixKind::FiniteDifference { .. } => cfg.fd_points *= 2,
    }
    build_matrix(&matrix.spec, &cfg)
}

/// `log10 ‖(A_N − z)^{-1}‖` on an `nx × ny` grid over `window`.
///
/// Grid points are evaluated in parallel into fixed slots, so the result does
/// not depend on the thread count.
pub fn resolvent_grid(
    spec: &OperatorSpec,
    config: &DiscretizationConfig,
    window: Window,
    nx: usize,
    ny: usize,
) -> Result<PseudospectrumField> {
    check_grid(nx, ny)?;
    let matrix = build_matrix(spec, config)?;
    let trusted = trusted_radius(&matrix);
    if window.max_modulus() >= trusted {
        return Err(Error::Config(format!(
            "window reaches |z| = {:.3}, beyond the trusted radius {trusted:.3} of this truncation",
            window.max_modulus()
        )));
    }
    let values = grid_values(&matrix.entries, &window, nx, ny, DEFAULT_CAP);
    let eigenvalues = window_eigenvalues(&matrix, &window)?;
    let fine = refined(&matrix)?;
    let stride_x = (nx / STABILITY_SAMPLES).max(1);
    let stride_y = (ny / STABILITY_SAMPLES).max(1);
    let samples: Vec<(usize, usize)> =
        (0..ny).step_by(stride_y).flat_map(|j| (0..nx).step_by(stride_x).map(move |i| (i, j))).collect();
    let field = PseudospectrumField {
        window,
        nx,
        ny,
        values,
        matrix_size: matrix.size(),
        cap: DEFAULT_CAP,
        eigenvalues,
        trusted_radius: trusted,
        n_stability: None,
    };
    let change = samples
        .par_iter()
        .map(|&(i, j)| {
            let v1 = field.value(i, j);
            if v1 >= DEFAULT_CAP {
                return 0.0;
            }
            let v2 = log_resnorm(&fine.entries, Complex64::new(field.x(i), field.y(j)), DEFAULT_CAP);
            (10f64.powf(v2 - v1) - 1.0).abs()
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(0.0, f64::max);
    Ok(PseudospectrumField { n_stability: Some(change), ..field })
}

/// One closed (or window-clipped) level line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub vertices: Vec<(f64, f64)>,
    pub closed: bool,
    pub perimeter: f64,
    /// 1-based indices of eigenvalues inside the polyline.
    pub enclosed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourLevel {
    pub epsilon: f64,
    pub components: Vec<Component>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourSet {
    pub levels: Vec<ContourLevel>,
}

fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > p.1) != (yj > p.1) && p.0 < (xj - xi) * (p.1 - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn polyline_length(v: &[(f64, f64)]) -> f64 {
    v.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
}

/// Grid edge: `(i, j, 0)` joins `(i, j)`–`(i+1, j)`, `(i, j, 1)` joins `(i, j)`–`(i, j+1)`.
type EdgeKey = (usize, usize, u8);

/// Marching squares for `{value ≥ level}` with linear interpolation; saddle
/// cells are resolved by the cell-center average.
fn march(field: &PseudospectrumField, level: f64) -> Vec<(Vec<(f64, f64)>, bool)> {
    let (nx, ny) = (field.nx, field.ny);
    let above = |i: usize, j: usize| field.value(i, j) >= level;
    let point = |e: EdgeKey| -> (f64, f64) {
        let (i, j, d) = e;
        let (i2, j2) = if d == 0 { (i + 1, j) } else { (i, j + 1) };
        let (a, b) = (field.value(i, j), field.value(i2, j2));
        let t = if a == b { 0.5 } else { ((level - a) / (b - a)).clamp(0.0, 1.0) };
        (field.x(i) + t * (field.x(i2) - field.x(i)), field.y(j) + t * (field.y(j2) - field.y(j)))
    };
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let c = [above(i, j), above(i + 1, j), above(i + 1, j + 1), above(i, j + 1)];
            // edges in cyclic order: bottom, right, top, left
            let edges: [EdgeKey; 4] = [(i, j, 0), (i + 1, j, 1), (i, j + 1, 0), (i, j, 1)];
            let crossing: Vec<usize> = (0..4).filter(|&e| c[e] != c[(e + 1) % 4]).collect();
            match crossing.len() {
                2 => segments.push((edges[crossing[0]], edges[crossing[1]])),
                4 => {
                    let center =
                        0.25 * (field.value(i, j) + field.value(i + 1, j) + field.value(i + 1, j + 1) + field.value(i, j + 1));
                    if (center >= level) == c[0] {
                        // corners 0 and 2 are joined through the center
                        segments.push((edges[0], edges[1]));
                        segments.push((edges[2], edges[3]));
                    } else {
                        segments.push((edges[3], edges[0]));
                        segments.push((edges[1], edges[2]));
                    }
                }
                _ => {}
            }
        }
    }
    let mut incident: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        incident.entry(a).or_default().push(s);
        incident.entry(b).or_default().push(s);
    }
    let other = |s: usize, e: EdgeKey| if segments[s].0 == e { segments[s].1 } else { segments[s].0 };
    let mut used = vec![false; segments.len()];
    let mut lines = Vec::new();
    // open lines start at window-boundary edges (degree 1), then closed loops
    let mut starts: Vec<(EdgeKey, usize)> = Vec::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        for e in [a, b] {
            if incident[&e].len() == 1 {
                starts.push((e, s));
            }
        }
    }
    starts.sort();
    let loop_starts: Vec<(EdgeKey, usize)> = (0..segments.len()).map(|s| (segments[s].0, s)).collect();
    for list in [starts, loop_starts] {
        for (e0, s0) in list {
            if used[s0] {
                continue;
            }
            let mut keys = vec![e0];
            let mut s = s0;
            let mut e = e0;
            let mut closed = false;
            loop {
                used[s] = true;
                e = other(s, e);
                keys.push(e);
                if e == e0 {
                    closed = true;
                    break;
                }
                match incident[&e].iter().find(|&&t| !used[t]) {
                    Some(&t) => s = t,
                    None => break,
                }
            }
            let closed = closed && keys.len() > 3;
            lines.push((keys.into_iter().map(point).collect(), closed));
        }
    }
    lines
}

/// ε-level lines of a field (level `−log10 ε`), labelled by enclosed eigenvalues.
pub fn contours(field: &PseudospectrumField, eps_list: &[f64]) -> Result<ContourSet> {
    let (lo, hi) = field.value_range();
    let mut levels = Vec::new();
    for &eps in eps_list {
        if !(eps > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {eps}")));
        }
        let level = -eps.log10();
        if !(lo < level && level < hi) {
            return Err(Error::Config(format!("level {level} for eps = {eps} outside field range [{lo}, {hi}]")));
        }
        let components = march(field, level)
            .into_iter()
            .map(|(vertices, closed)| {
                if !closed {
                    log::warn!("open contour at eps = {eps}: level line leaves the window");
                }
                let enclosed = if closed {
                    field
                        .eigenvalues
                        .iter()
                        .filter(|(_, z)| point_in_polygon((z.re, z.im), &vertices))
                        .map(|(n, _)| *n)
                        .collect()
                } else {
                    Vec::new()
                };
                Component { perimeter: polyline_length(&vertices), vertices, closed, enclosed }
            })
            .collect();
        levels.push(ContourLevel { epsilon: eps, components });
    }
    Ok(ContourSet { levels })
}

impl ContourSet {
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, self)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerimeterEntry {
    pub n: usize,
    pub epsilon: f64,
    pub kappa: f64,
    pub perimeter: f64,
    /// `2πεκ`.
    pub bound: f64,
    /// `perimeter − bound`.
    pub slack: f64,
    /// Absolute uncertainty of `perimeter − bound`.
    pub err_estimate: f64,
    /// `slack + err_estimate ≥ 0`.
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedComponent {
    pub epsilon: f64,
    pub enclosed: Vec<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerimeterReport {
    pub entries: Vec<PerimeterEntry>,
    pub skipped: Vec<SkippedComponent>,
}

impl PerimeterReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// Checks `perimeter ≥ 2πεκₙ` for every closed component enclosing exactly
/// one eigenvalue; other components are skipped with the reason recorded.
pub fn perimeter_check(set: &ContourSet, kappas: &[InstabilityRecord]) -> PerimeterReport {
    let mut report = PerimeterReport::default();
    for level in &set.levels {
        for c in &level.components {
            if !c.closed {
                report.skipped.push(SkippedComponent {
                    epsilon: level.epsilon,
                    enclosed: c.enclosed.clone(),
                    reason: "open contour".into(),
                });
                continue;
            }
            if c.enclosed.len() != 1 {
                let err = Error::HypothesisViolated(format!("component encloses {} eigenvalues", c.enclosed.len()));
                report.skipped.push(SkippedComponent { epsilon: level.epsilon, enclosed: c.enclosed.clone(), reason: err.to_string() });
                continue;
            }
            let n = c.enclosed[0];
            let Some(k) = kappas.iter().find(|r| r.n == n) else {
                report.skipped.push(SkippedComponent {
                    epsilon: level.epsilon,
                    enclosed: c.enclosed.clone(),
                    reason: format!("no kappa for n = {n}"),
                });
                continue;
            };
            let bound = 2.0 * PI * level.epsilon * k.kappa;
            // inscribed polygons only shorten the curve: no allowance for the grid
            let err = bound * k.err_estimate;
            report.entries.push(PerimeterEntry {
                n,
                epsilon: level.epsilon,
                kappa: k.kappa,
                perimeter: c.perimeter,
                bound,
                slack: c.perimeter - bound,
                err_estimate: err,
                pass: c.perimeter - bound + err >= 0.0,
            });
        }
    }
    report
}

/// Distance from `c` to `poly` along direction `phi` (farthest crossing).
fn ray_polygon_radius(c: Complex64, phi: f64, poly: &[(f64, f64)]) -> Option<f64> {
    let d = (phi.cos(), phi.sin());
    let mut best: Option<f64> = None;
    for w in poly.windows(2) {
        let (p, q) = (
            (w[0].0 - c.re, w[0].1 - c.im),
            (w[1].0 - c.re, w[1].1 - c.im),
        );
        let e = (q.0 - p.0, q.1 - p.1);
        let den = d.0 * e.1 - d.1 * e.0;
        if den.abs() < 1e-300 {
            continue;
        }
        let r = (p.0 * e.1 - p.1 * e.0) / den;
        let s = (p.0 * d.1 - p.1 * d.0) / den;
        if r > 0.0 && (0.0..=1.0).contains(&s) {
            best = Some(best.map_or(r, |b: f64| b.max(r)));
        }
    }
    best
}

/// Radii of the level set `σ_min(A − z) = ε` around `center` at `vertices`
/// equispaced angles (secant in the radius).
fn traced_radii(a: &BandMatrix, center: Complex64, eps: f64, guess: &(dyn Fn(f64) -> f64 + Sync), vertices: usize) -> Option<Vec<f64>> {
    (0..vertices)
        .into_par_iter()
        .map(|v| {
            let phi = 2.0 * PI * v as f64 / vertices as f64;
            let dir = Complex64::from_polar(1.0, phi);
            let g = |r: f64| sigma_min_shifted(a, center + dir * r) - eps;
            let mut r0 = guess(phi);
            let mut r1 = r0 * 1.001;
            let (mut g0, mut g1) = (g(r0), g(r1));
            for _ in 0..SECANT_MAX_ITER {
                if g1 == g0 {
                    break;
                }
                let r2 = r1 - g1 * (r1 - r0) / (g1 - g0);
                if !(r2 > 0.0) || !r2.is_finite() {
                    return None;
                }
                r0 = r1;
                g0 = g1;
                r1 = r2;
                g1 = g(r1);
                if (r1 - r0).abs() <= 1e-13 * r1 {
                    return Some(r1);
                }
            }
            (g1.abs() <= 1e-10 * eps).then_some(r1)
        })
        .collect()
}

/// Arc length `∫₀^{2π} √(r² + r'²) dφ` of a star-shaped closed curve from
/// equispaced radii; `r'` by spectral differentiation, so the trapezoidal sum
/// converges geometrically for analytic curves.
pub fn spectral_perimeter(radii: &[f64]) -> f64 {
    let n = radii.len();
    let mut buf: Vec<Complex64> = radii.iter().map(|&r| Complex64::new(r, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let k = if 2 * j < n { j as f64 } else { j as f64 - n as f64 };
        // the Nyquist mode has no well-defined derivative
        *c = if 2 * j == n { Complex64::new(0.0, 0.0) } else { *c * Complex64::new(0.0, k / n as f64) };
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let h = 2.0 * PI / n as f64;
    radii.iter().zip(&buf).map(|(r, d)| r.hypot(d.re)).sum::<f64>() * h
}

/// Outcome of one local perimeter measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPerimeter {
    pub n: usize,
    pub epsilon: f64,
    pub lambda: Complex64,
    pub window: Window,
    /// Marching-squares perimeter on the local grid.
    pub grid_perimeter: f64,
    /// Radially traced spectral perimeter, when tracing succeeded.
    pub traced_perimeter: Option<f64>,
    /// Change from half the vertices plus the round-off floor of `σ_min`
    /// propagated to the radius; zero without tracing.
    pub traced_err: f64,
    pub enclosed: Vec<usize>,
    pub closed: bool,
}

impl LocalPerimeter {
    pub fn perimeter(&self) -> f64 {
        self.traced_perimeter.unwrap_or(self.grid_perimeter)
    }
}

/// Settings for [`perimeter_study`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerimeterStudy {
    /// Grid points per axis of each local window.
    pub grid: usize,
    /// Initial half-width in units of `εκₙ`.
    pub half_width: f64,
    /// Angles for radial tracing; half as many give the error estimate.
    pub vertices: usize,
}

impl Default for PerimeterStudy {
    fn default() -> Self {
        PerimeterStudy { grid: 300, half_width: 2.0, vertices: 128 }
    }
}

/// Measures the ε-component around each eigenvalue `λₙ` on its own grid
/// window centred at `λₙ`, then checks `perimeter ≥ 2πεκₙ`.
///
/// Window half-width starts at `half_width·εκₙ` and doubles while the level
/// line leaves the window. The reported perimeter is the radial trace,
/// Richardson extrapolated from `V` and `2V` vertices.
pub fn perimeter_study(
    spec: &OperatorSpec,
    config: &DiscretizationConfig,
    kappas: &[InstabilityRecord],
    eps_list: &[f64],
    settings: &PerimeterStudy,
) -> Result<(Vec<LocalPerimeter>, PerimeterReport)> {
    let matrix = build_matrix(spec, config)?;
    let norm_inf = matrix.entries.norm_inf();
    let n_top = kappas.iter().map(|k| k.n).max().unwrap_or(0);
    let all = window_eigenvalues(
        &matrix,
        &Window::around(Complex64::new(0.0, 0.0), trusted_radius(&matrix))?,
    )?;
    let mut locals = Vec::new();
    let mut report = PerimeterReport::default();
    for k in kappas {
        let Some(&(_, lambda)) = all.iter().find(|(n, _)| *n == k.n) else {
            return Err(Error::Config(format!("eigenvalue {} not available (largest {n_top})", k.n)));
        };
        for &eps in eps_list {
            let mut h = settings.half_width * eps * k.kappa;
            let mut found = None;
            for _ in 0..6 {
                let window = Window::around(lambda, h)?;
                let values = grid_values(&matrix.entries, &window, settings.grid, settings.grid, DEFAULT_CAP);
                let field = PseudospectrumField {
                    window,
                    nx: settings.grid,
                    ny: settings.grid,
                    values,
                    matrix_size: matrix.size(),
                    cap: DEFAULT_CAP,
                    eigenvalues: all.iter().filter(|(_, z)| window.contains(*z)).cloned().collect(),
                    trusted_radius: trusted_radius(&matrix),
                    n_stability: None,
                };
                let set = contours(&field, &[eps])?;
                let comp = set.levels[0]
                    .components
                    .iter()
                    .filter(|c| c.closed && c.enclosed.contains(&k.n))
                    .max_by(|a, b| a.perimeter.total_cmp(&b.perimeter))
                    .cloned();
                let open = set.levels[0].components.iter().any(|c| !c.closed);
                match comp {
                    Some(c) if !open => {
                        found = Some((window, c));
                        break;
                    }
                    _ => h *= 2.0,
                }
            }
            let Some((window, comp)) = found else {
                report.skipped.push(SkippedComponent {
                    epsilon: eps,
                    enclosed: vec![k.n],
                    reason: "component not closed inside the largest window".into(),
                });
                continue;
            };
            let guess = |phi: f64| ray_polygon_radius(lambda, phi, &comp.vertices).unwrap_or(eps * k.kappa);
            let traced = if comp.enclosed.len() == 1 {
                let v = settings.vertices;
                let sigma_floor = SIGMA_ROUNDOFF * f64::EPSILON * norm_inf;
                match (
                    traced_radii(&matrix.entries, lambda, eps, &guess, v / 2),
                    traced_radii(&matrix.entries, lambda, eps, &guess, v),
                ) {
                    (Some(r1), Some(r2)) => {
                        let (p1, p2) = (spectral_perimeter(&r1), spectral_perimeter(&r2));
                        // σ ≈ r/κ near λ, so a σ error δ moves the radius by δκ = (δ/ε)·r
                        Some((p2, (p2 - p1).abs() + p2 * sigma_floor / eps))
                    }
                    _ => None,
                }
            } else {
                None
            };
            let (traced, traced_err) = traced.map_or((None, 0.0), |(p, e)| (Some(p), e));
            let local = LocalPerimeter {
                n: k.n,
                epsilon: eps,
                lambda,
                window,
                grid_perimeter: comp.perimeter,
                traced_perimeter: traced,
                traced_err,
                enclosed: comp.enclosed.clone(),
                closed: comp.closed,
            };
            if comp.enclosed.len() != 1 {
                report.skipped.push(SkippedComponent {
                    epsilon: eps,
                    enclosed: comp.enclosed.clone(),
                    reason: Error::HypothesisViolated(format!("component encloses {} eigenvalues", comp.enclosed.len()))
                        .to_string(),
                });
            } else {
                let bound = 2.0 * PI * eps * k.kappa;
                let p = local.perimeter();
                let err = local.traced_err + bound * k.err_estimate;
                report.entries.push(PerimeterEntry {
                    n: k.n,
                    epsilon: eps,
                    kappa: k.kappa,
                    perimeter: p,
                    bound,
                    slack: p - bound,
                    err_estimate: err,
                    pass: p - bound + err >= 0.0,
                });
            }
            locals.push(local);
        }
    }
    Ok((locals, report))
}

/// Eigenvalues of one perturbed matrix `A_N + εB`, `‖B‖ = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterCloud {
    pub trial: usize,
    pub eigenvalues: Vec<Complex64>,
}

/// Dense complex Gaussian matrix scaled to unit 2-norm (power iteration).
pub fn gaussian_unit_matrix(n: usize, seed: u64, trial: usize) -> Mat<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut entries = Vec::with_capacity(n * n);
    for _ in 0..n * n {
        let re = draw();
        let im = draw();
        entries.push(Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2);
    }
    let b = Mat::from_fn(n, n, |i, j| entries[i * n + j]);
    let norm = power_norm(&b);
    Mat::from_fn(n, n, |i, j| b[(i, j)] / norm)
}

/// `‖B‖₂` estimated by power iteration on `BᴴB`.
pub fn power_norm(b: &Mat<Complex64>) -> f64 {
    let n = b.ncols();
    let mut v = Mat::<Complex64>::from_fn(n, 1, |i, _| Complex64::new(1.0 / (1.0 + i as f64).sqrt(), 0.0));
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERATION_STEPS {
        let nv = v.norm_l2();
        v = &v * (1.0 / nv);
        let w = b * &v;
        sigma = w.norm_l2();
        v = b.adjoint() * &w;
    }
    sigma
}

/// Eigenvalues of `A_N + εB` for `trials` independent seeded draws of `B`.
pub fn perturbation_scatter(
    spec: &OperatorSpec,
    config: &DiscretizationConfig,
    eps: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<ScatterCloud>> {
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::Config(format!("epsilon must be nonnegative, got {eps}")));
    }
    let matrix = build_matrix(spec, config)?;
    let a = matrix.to_dense();
    let n = a.nrows();
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let perturbed = if eps == 0.0 {
                a.clone()
            } else {
                let b = gaussian_unit_matrix(n, seed, trial);
                Mat::from_fn(n, n, |i, j| a[(i, j)] + b[(i, j)] * eps)
            };
            let mut eigenvalues: Vec<Complex64> = perturbed
                .eigenvalues()
                .map_err(|err| Error::Eigensolver(format!("{err:?}")))?
                .into_iter()
                .collect();
            eigenvalues.sort_by(eigenvalue_order);
            Ok(ScatterCloud { trial, eigenvalues })
        })
        .collect()
}

/// Containment of a scatter cloud in `σ_{factor·ε}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub points: usize,
    /// Points with `σ_min(A_N − z) ≤ factor·ε`, checked directly.
    pub pointwise_inside: usize,
    /// Points lying in at least one supplied grid window.
    pub gridded: usize,
    /// Gridded points whose interpolated field is in the super-level set.
    pub grid_inside: usize,
    pub worst_ratio: f64,
}

impl ContainmentReport {
    pub fn all_inside(&self) -> bool {
        self.pointwise_inside == self.points && self.grid_inside == self.gridded
    }
}

/// Checks every eigenvalue of every cloud against `σ_{factor·ε}(A_N)`:
/// pointwise, and on any of `fields` whose window contains it.
pub fn containment(
    matrix: &OperatorMatrix,
    clouds: &[ScatterCloud],
    eps: f64,
    factor: f64,
    fields: &[PseudospectrumField],
) -> ContainmentReport {
    let pts: Vec<Complex64> = clouds.iter().flat_map(|c| c.eigenvalues.iter().cloned()).collect();
    let ratios: Vec<f64> = pts.par_iter().map(|&z| sigma_min_shifted(&matrix.entries, z) / eps).collect();
    let mut r = ContainmentReport { points: pts.len(), ..Default::default() };
    for (z, ratio) in pts.iter().zip(&ratios) {
        if *ratio <= factor {
            r.pointwise_inside += 1;
        }
        r.worst_ratio = r.worst_ratio.max(*ratio);
        let verdicts: Vec<bool> = fields.iter().filter_map(|f| f.contains_in_pseudospectrum(*z, factor * eps)).collect();
        if !verdicts.is_empty() {
            r.gridded += 1;
            if verdicts.iter().any(|&v| v) {
                r.grid_inside += 1;
            }
        }
    }
    r
}

/// Largest distance from a cloud point to the nearest of `spectrum`.
pub fn max_distance_to_spectrum(clouds: &[ScatterCloud], spectrum: &[Complex64]) -> f64 {
    clouds
        .iter()
        .flat_map(|c| c.eigenvalues.iter())
        .map(|z| spectrum.iter().map(|s| (z - s).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

/// Per-eigenvalue coefficient `C` in `|z − λ_k| ≤ εκ_k + Cε²`, fitted as the
/// smallest value covering the cloud points nearest to `λ_k`.
pub fn disk_coefficients(
    clouds: &[ScatterCloud],
    spectrum: &[Complex64],
    kappas: &[InstabilityRecord],
    eps: f64,
) -> Vec<(usize, f64)> {
    kappas
        .iter()
        .filter(|k| k.n >= 1 && k.n <= spectrum.len())
        .map(|k| {
            let lambda = spectrum[k.n - 1];
            let c = clouds
                .iter()
                .flat_map(|cl| cl.eigenvalues.iter())
                .filter(|z| {
                    let d = (*z - lambda).norm();
                    spectrum.iter().all(|s| (*z - s).norm() >= d)
                })
                .map(|z| ((z - lambda).norm() - eps * k.kappa) / (eps * eps))
                .fold(f64::NEG_INFINITY, f64::max);
            (k.n, c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;

    fn disk_field(r_grid: usize, radius_level: f64) -> PseudospectrumField {
        let z0 = Complex64::new(0.3, -0.2);
        let w = Window::around(z0, 2.0 * radius_level).unwrap();
        PseudospectrumField::from_fn(w, r_grid, r_grid, vec![(1, z0)], |z| -(z - z0).norm().log10()).unwrap()
    }

    #[test]
    fn spectral_perimeter_of_an_ellipse() {
        // semi-axes 2 and 1; reference 8·E(3/4) from the complete elliptic integral
        let r: Vec<f64> = (0..128)
            .map(|j| {
                let phi = 2.0 * PI * j as f64 / 128.0;
                2.0 / (phi.cos().powi(2) + 4.0 * phi.sin().powi(2)).sqrt()
            })
            .collect();
        assert!((spectral_perimeter(&r) - 9.688_448_220_547_675).abs() < 1e-12);
        assert!((spectral_perimeter(&[0.5; 16]) - PI).abs() < 1e-14);
    }

    #[test]
    fn synthetic_disk_perimeter() {
        let f = disk_field(400, 0.1);
        let set = contours(&f, &[0.1]).unwrap();
        let comps = &set.levels[0].components;
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert!(c.closed && c.vertices.first() == c.vertices.last());
        assert_eq!(c.enclosed, vec![1]);
        assert!((c.perimeter / (2.0 * PI * 0.1) - 1.0).abs() < 0.02);
    }

    #[test]
    fn nested_levels() {
        let f = disk_field(200, 0.1);
        let set = contours(&f, &[0.05, 0.1]).unwrap();
        let inner = &set.levels[0].components[0];
        let outer = &set.levels[1].components[0];
        assert!(inner.vertices.iter().all(|&p| point_in_polygon(p, &outer.vertices)));
    }

    #[test]
    fn open_contours_are_flagged() {
        let z0 = Complex64::new(0.0, 0.0);
        let w = Window::new((0.0, 1.0), (-0.5, 0.5)).unwrap();
        let f = PseudospectrumField::from_fn(w, 100, 100, vec![(1, z0)], |z| -(z - z0).norm().log10()).unwrap();
        let set = contours(&f, &[0.2]).unwrap();
        assert!(set.levels[0].components.iter().all(|c| !c.closed));
        let rep = perimeter_check(&set, &[InstabilityRecord::from_log(1, 0.0, crate::model::KappaMethod::Galerkin, 0.0)]);
        assert!(rep.entries.is_empty() && !rep.skipped.is_empty());
    }

    #[test]
    fn perimeter_slack_is_linear_in_kappa() {
        let f = disk_field(200, 0.1);
        let set = contours(&f, &[0.1]).unwrap();
        let k1 = InstabilityRecord::from_log(1, 0.0, crate::model::KappaMethod::Galerkin, 0.0);
        let k2 = InstabilityRecord::from_log(1, 2f64.ln(), crate::model::KappaMethod::Galerkin, 0.0);
        let a = perimeter_check(&set, &[k1]).entries[0].clone();
        let b = perimeter_check(&set, &[k2]).entries[0].clone();
        assert!((a.slack - b.slack - 2.0 * PI * 0.1).abs() < 1e-12);
        assert!(b.slack < a.slack && !b.pass);
    }

    #[test]
    fn selfadjoint_resolvent_is_inverse_distance() {
        let spec = validate_spec(2.0, 0.0).unwrap();
        let cfg = DiscretizationConfig::default().with_basis_size(100);
        let m = build_matrix(&spec, &cfg).unwrap();
        let s = sigma_min_shifted(&m.entries, Complex64::new(1.1, 0.0));
        assert!(((1.0 / s) / 10.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn resolvent_grows_with_index() {
        let spec = validate_spec(2.0, 0.6).unwrap();
        let cfg = DiscretizationConfig::default().with_basis_size(200);
        let m = build_matrix(&spec, &cfg).unwrap();
        let mut prev = 0.0;
        for n in 1..=6 {
            let lambda = Complex64::from_polar((2 * n - 1) as f64, 0.3);
            let r = 1.0 / sigma_min_shifted(&m.entries, lambda + 0.5);
            assert!(r > prev, "n = {n}");
            prev = r;
        }
    }

    #[test]
    fn field_is_conjugate_mirror() {
        let cfg = DiscretizationConfig::default().with_basis_size(60);
        let w = Window::new((0.0, 4.0), (-1.0, 1.0)).unwrap();
        let a = resolvent_grid(&validate_spec(2.0, 0.5).unwrap(), &cfg, w, 9, 9).unwrap();
        let b = resolvent_grid(&validate_spec(2.0, -0.5).unwrap(), &cfg, w, 9, 9).unwrap();
        for j in 0..9 {
            for i in 0..9 {
                let (x, y) = (a.value(i, j), b.value(i, 8 - j));
                assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
            }
        }
        assert!(a.n_stability.unwrap() < 0.01);
    }

    #[test]
    fn window_beyond_trust_is_rejected() {
        let cfg = DiscretizationConfig::default().with_basis_size(40);
        let w = Window::new((0.0, 100.0), (0.0, 1.0)).unwrap();
        assert!(resolvent_grid(&validate_spec(2.0, 0.5).unwrap(), &cfg, w, 4, 4).is_err());
    }

    #[test]
    fn scatter_is_seeded_and_zero_eps_is_exact() {
        let spec = validate_spec(2.0, 0.6).unwrap();
        let cfg = DiscretizationConfig::default().with_basis_size(40).with_scale(1.0);
        let a = perturbation_scatter(&spec, &cfg, 1e-3, 2, 7).unwrap();
        let b = perturbation_scatter(&spec, &cfg, 1e-3, 2, 7).unwrap();
        assert_eq!(a, b);
        let c = perturbation_scatter(&spec, &cfg, 1e-3, 2, 8).unwrap();
        assert_ne!(a, c);
        let z = perturbation_scatter(&spec, &cfg, 0.0, 1, 7).unwrap();
        for n in 1..=5 {
            let exact = Complex64::from_polar((2 * n - 1) as f64, 0.3);
            assert!((z[0].eigenvalues[n - 1] - exact).norm() < 1e-8);
        }
    }

    #[test]
    fn perturbation_has_unit_norm() {
        let b = gaussian_unit_matrix(50, 3, 0);
        let sv = b.singular_values().unwrap();
        assert!((sv[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn selfadjoint_clouds_stay_close() {
        let spec = validate_spec(2.0, 0.0).unwrap();
        let cfg = DiscretizationConfig::default().with_basis_size(60).with_scale(1.0);
        let eps = 1e-3;
        let clouds = perturbation_scatter(&spec, &cfg, eps, 3, 1).unwrap();
        let m = build_matrix(&spec, &cfg).unwrap();
        let spectrum: Vec<Complex64> = m.to_dense().eigenvalues().unwrap().into_iter().collect();
        assert!(max_distance_to_spectrum(&clouds, &spectrum) <= 1.01 * eps);
        let rep = containment(&m, &clouds, eps, 1.05, &[]);
        assert!(rep.all_inside(), "{rep:?}");
    }
}
