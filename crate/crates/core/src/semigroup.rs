//! Normal convergence of `Σ e^{−tλₙ} Πₙ`.
//!
//! The `n`-th term has norm `e^{−t Re λₙ} κₙ`; the series converges normally
//! iff these are summable. Everything is kept in log space.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asym::{c_k, fit_growth_rate, fit_line};
use crate::error::{Error, Result};
use crate::model::{Exponent, OperatorSpec};
use crate::spectra::{
    airy_eigenvalue, airy_half_line_index, kappa_airy_full_line, kappa_harmonic_exact, kappa_ray_range,
    DiscretizationConfig,
};

/// Up to this many indices every `n` is evaluated; beyond, a sample.
pub const DENSE_LIMIT: usize = 400;
const SAMPLE_HEAD: usize = 64;
const SAMPLE_GEOMETRIC: usize = 48;
const SAMPLE_TAIL: usize = 24;
/// Remainder sums stop once terms fall this many e-folds below the largest.
const TAIL_DEPTH: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub log_kappa: f64,
    pub lambda: Complex64,
}

/// Indices at which term norms are evaluated for `1..=n_max`.
pub fn sample_indices(n_max: usize) -> Vec<usize> {
    if n_max <= DENSE_LIMIT {
        return (1..=n_max).collect();
    }
    let mut v: Vec<usize> = (1..=SAMPLE_HEAD).collect();
    let (a, b) = ((SAMPLE_HEAD as f64).ln(), (n_max as f64).ln());
    v.extend((0..=SAMPLE_GEOMETRIC).map(|j| (a + (b - a) * j as f64 / SAMPLE_GEOMETRIC as f64).exp().round() as usize));
    let start = 3 * n_max / 4;
    v.extend((0..=SAMPLE_TAIL).map(|j| start + (n_max - start) * j / SAMPLE_TAIL));
    v.retain(|&n| n >= 1 && n <= n_max);
    v.sort_unstable();
    v.dedup();
    v
}

/// `log κₙ` and `λₙ` at the given indices by the cancellation-free route:
/// Airy for `m = 1`, closed form for `m = 2`, ray for `m = 2k`.
pub fn kappa_table(spec: &OperatorSpec, ns: &[usize], config: &DiscretizationConfig) -> Result<Vec<TableRow>> {
    let theta = spec.theta();
    match spec.exponent() {
        Exponent::Airy => ns
            .par_iter()
            .map(|&n| {
                let (j, bc) = airy_half_line_index(n);
                Ok(TableRow {
                    n,
                    log_kappa: kappa_airy_full_line(theta, n)?.log_kappa,
                    lambda: airy_eigenvalue(theta, j, bc)?,
                })
            })
            .collect(),
        Exponent::Even(1) => ns
            .par_iter()
            .map(|&n| {
                Ok(TableRow {
                    n,
                    log_kappa: kappa_harmonic_exact(theta, n)?.log_kappa,
                    lambda: Complex64::from_polar((2 * n - 1) as f64, theta / 2.0),
                })
            })
            .collect(),
        Exponent::Even(k) => {
            let top = ns.iter().copied().max().unwrap_or(0);
            let mut cfg = *config;
            cfg.basis_size = cfg.basis_size.max(4 * top);
            let rays = kappa_ray_range(k, theta, top, &cfg)?;
            Ok(ns
                .iter()
                .map(|&n| TableRow { n, log_kappa: rays[n - 1].record.log_kappa, lambda: rays[n - 1].lambda })
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Convergent,
    Divergent,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Convergent => "convergent",
            Classification::Divergent => "divergent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesReport {
    pub m: u32,
    pub theta: f64,
    pub t: f64,
    /// `(n, log(e^{−t Re λₙ} κₙ))`.
    pub term_norms: Vec<(usize, f64)>,
    /// Least-squares slope of the log term norms over the last quartile of `n`.
    pub tail_slope: f64,
    pub classification: Classification,
    /// `log Σₙ e^{−t Re λₙ} κₙ` including a geometric tail estimate; `None`
    /// when divergent or when only a sample of indices was evaluated.
    pub log_sum_bound: Option<f64>,
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = v.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn last_quartile_slope(terms: &[(usize, f64)]) -> Result<f64> {
    let n_max = terms.last().map_or(0, |p| p.0);
    let start = 3 * n_max / 4;
    let mut pts: Vec<(f64, f64)> = terms.iter().filter(|p| p.0 >= start).map(|p| (p.0 as f64, p.1)).collect();
    if pts.len() < 3 {
        pts = terms.iter().rev().take(3).rev().map(|p| (p.0 as f64, p.1)).collect();
    }
    Ok(fit_line(&pts)?.slope)
}

/// Classifies a precomputed table at time `t`.
pub fn classify(spec: &OperatorSpec, table: &[TableRow], t: f64, dense: bool) -> Result<SeriesReport> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("t must be positive, got {t}")));
    }
    let term_norms: Vec<(usize, f64)> = table.iter().map(|r| (r.n, r.log_kappa - t * r.lambda.re)).collect();
    let tail_slope = last_quartile_slope(&term_norms)?;
    let classification = if tail_slope > 0.0 { Classification::Divergent } else { Classification::Convergent };
    let log_sum_bound = (dense && classification == Classification::Convergent).then(|| {
        let last = term_norms.last().expect("nonempty").1;
        // geometric continuation beyond n_max with ratio e^{tail_slope}
        let tail = last + tail_slope - (-(tail_slope.exp_m1())).ln();
        log_sum_exp(term_norms.iter().map(|p| p.1).chain(std::iter::once(tail)))
    });
    Ok(SeriesReport { m: spec.m(), theta: spec.theta(), t, term_norms, tail_slope, classification, log_sum_bound })
}

/// Term norms `e^{−t Re λₙ} κₙ` for `n ≤ n_max` (sampled beyond
/// [`DENSE_LIMIT`]) and the tail classification.
pub fn term_norms(spec: &OperatorSpec, t: f64, n_max: usize, config: &DiscretizationConfig) -> Result<SeriesReport> {
    if n_max < 4 {
        return Err(Error::Config(format!("n_max = {n_max} too small to classify a tail")));
    }
    let ns = sample_indices(n_max);
    let table = kappa_table(spec, &ns, config)?;
    classify(spec, &table, t, n_max <= DENSE_LIMIT)
}

/// CSV rows `t,n,log_term_norm,classification`.
pub fn write_reports_csv<W: Write>(reports: &[SeriesReport], mut out: W) -> Result<()> {
    writeln!(out, "t,n,log_term_norm,classification")?;
    for r in reports {
        for (n, v) in &r.term_norms {
            writeln!(out, "{},{},{},{}", r.t, n, v, r.classification.as_str())?;
        }
    }
    Ok(())
}

/// Threshold candidates for `m = 2`: `c₁/cos(θ/2)` and `c₁/(2cos(θ/2))`.
pub fn threshold_candidates(theta: f64) -> Result<[f64; 2]> {
    let c1 = c_k(1, theta)?;
    let c = (theta / 2.0).cos();
    Ok([c1 / c, c1 / (2.0 * c)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub theta: f64,
    /// Fitted exponential rate of `κₙ` (with the `½ log n` correction).
    pub kappa_rate: f64,
    /// Fitted slope of `Re λₙ` in `n`.
    pub lambda_slope: f64,
    pub t_critical: f64,
    pub bracket: (f64, f64),
    /// `c₁/cos(θ/2)`.
    pub candidate_t: f64,
    /// `c₁/(2cos(θ/2))`.
    pub candidate_t_half: f64,
    pub t_in_bracket: bool,
    pub t_half_in_bracket: bool,
    /// The candidate nearer to `t_critical`.
    pub closest: String,
}

/// Locates the sign change of the asymptotic term-norm slope
/// `rate(κ) − t·slope(Re λ)` over `t_grid` from tabulated data.
pub fn threshold_from_table(theta: f64, table: &[TableRow], t_grid: &[f64]) -> Result<ThresholdScan> {
    if t_grid.len() < 2 || t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Config("t grid must hold at least two increasing values".into()));
    }
    let kappa_rate = fit_growth_rate(&table.iter().map(|r| (r.n, r.log_kappa)).collect::<Vec<_>>())?.slope;
    let lambda_slope = fit_line(&table.iter().map(|r| (r.n as f64, r.lambda.re)).collect::<Vec<_>>())?.slope;
    let slope = |t: f64| kappa_rate - t * lambda_slope;
    let first = slope(t_grid[0]);
    let last = slope(*t_grid.last().expect("len >= 2"));
    let Some(w) = t_grid.windows(2).find(|w| slope(w[0]) > 0.0 && slope(w[1]) <= 0.0) else {
        return Err(Error::NoSignChange { first, last });
    };
    let (mut lo, mut hi) = (w[0], w[1]);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            break;
        }
        if slope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_critical = 0.5 * (lo + hi);
    let [ct, ch] = threshold_candidates(theta)?;
    let inside = |c: f64| w[0] <= c && c <= w[1];
    let closest = if (ct - t_critical).abs() <= (ch - t_critical).abs() { "c1/cos(theta/2)" } else { "c1/(2cos(theta/2))" };
    Ok(ThresholdScan {
        theta,
        kappa_rate,
        lambda_slope,
        t_critical,
        bracket: (w[0], w[1]),
        candidate_t: ct,
        candidate_t_half: ch,
        t_in_bracket: inside(ct),
        t_half_in_bracket: inside(ch),
        closest: closest.into(),
    })
}

/// Empirical convergence threshold for `m = 2` from `κₙ`, `n ∈ n_range`.
pub fn threshold_scan(spec: &OperatorSpec, t_grid: &[f64], n_range: (usize, usize)) -> Result<ThresholdScan> {
    if spec.exponent() != Exponent::Even(1) {
        return Err(Error::Config("threshold scan needs m = 2".into()));
    }
    let (a, b) = n_range;
    if a == 0 || b < a + 2 {
        return Err(Error::Config(format!("n range {a}:{b} needs at least three indices from 1")));
    }
    let ns: Vec<usize> = (a..=b).collect();
    let table = kappa_table(spec, &ns, &DiscretizationConfig::default())?;
    threshold_from_table(spec.theta(), &table, t_grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderFit {
    pub t: f64,
    /// `(N, log Σ_{n≥N} e^{−t Re λₙ} κₙ)`.
    pub tails: Vec<(usize, f64)>,
    pub fitted_rate: f64,
    /// `k = 1`: `−2cos(θ/2)(t − c₁/cos(θ/2))`; `k ≥ 2`: `c_k − t·dRe λ/dn`.
    pub predicted_rate: f64,
    /// `k = 1` only: `−2cos(θ/2)(t − c₁/(2cos(θ/2)))`.
    pub predicted_rate_half: Option<f64>,
}

/// Fits the decay of the tail surrogate `Σ_{n≥N} e^{−t Re λₙ} κₙ` in `N`.
pub fn remainder_shape(spec: &OperatorSpec, n_list: &[usize], t: f64, config: &DiscretizationConfig) -> Result<RemainderFit> {
    let k = match spec.exponent() {
        Exponent::Airy => return Err(Error::InsufficientDecay("m = 1 is never normally convergent".into())),
        Exponent::Even(k) => k,
    };
    if n_list.len() < 3 || n_list.windows(2).any(|w| !(w[0] < w[1])) || n_list[0] == 0 {
        return Err(Error::Config("need at least three increasing N values from 1".into()));
    }
    let n_hi = *n_list.last().expect("len >= 3");
    // extend until the terms are negligible against the largest tail
    let mut n_end = (2 * n_hi).max(n_hi + 16);
    let table = loop {
        let ns: Vec<usize> = (1..=n_end).collect();
        let table = kappa_table(spec, &ns, config)?;
        let terms: Vec<f64> = table.iter().map(|r| r.log_kappa - t * r.lambda.re).collect();
        let peak_after = terms[n_hi - 1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let end = *terms.last().expect("nonempty");
        if end < peak_after - TAIL_DEPTH {
            break table;
        }
        if end >= terms[terms.len() - 2] && n_end >= 4 * n_hi {
            return Err(Error::InsufficientDecay(format!("terms still growing at n = {n_end}")));
        }
        n_end *= 2;
        if n_end > 1 << 14 {
            return Err(Error::InsufficientDecay(format!("tail not negligible by n = {n_end}")));
        }
    };
    let terms: Vec<f64> = table.iter().map(|r| r.log_kappa - t * r.lambda.re).collect();
    let tails: Vec<(usize, f64)> =
        n_list.iter().map(|&nn| (nn, log_sum_exp(terms[nn - 1..].iter().cloned()))).collect();
    let fitted_rate = fit_line(&tails.iter().map(|p| (p.0 as f64, p.1)).collect::<Vec<_>>())?.slope;
    let theta = spec.theta();
    let (predicted_rate, predicted_rate_half) = if k == 1 {
        let c = (theta / 2.0).cos();
        let [ct, ch] = threshold_candidates(theta)?;
        (-2.0 * c * (t - ct), Some(-2.0 * c * (t - ch)))
    } else {
        let mid = n_list[n_list.len() / 2];
        let dre = table[mid].lambda.re - table[mid - 1].lambda.re;
        (c_k(k, theta)? - t * dre, None)
    };
    Ok(RemainderFit { t, tails, fitted_rate, predicted_rate, predicted_rate_half })
}
