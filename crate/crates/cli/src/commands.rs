use std::io::Write;

use anharmonic::asym::{asymptotic_constants, airy_kappa_prediction, c1_closed_form, fit_growth_rate, AsymptoticConstants};
use anharmonic::model::{validate_spec, Exponent, InstabilityRecord, OperatorSpec};
use anharmonic::pseudo::{
    containment, contours, perimeter_check, perimeter_study, perturbation_scatter, resolvent_grid, PerimeterStudy,
    Window,
};
use anharmonic::semigroup::{classify, kappa_table, remainder_shape, sample_indices, threshold_scan, DENSE_LIMIT};
use anharmonic::spectra::{
    airy_eigenrecords, build_matrix, eigenpairs, harmonic_eigenrecords, kappa_airy_full_line, kappa_galerkin_rows,
    kappa_harmonic_exact, kappa_ray_range, DiscretizationConfig,
};
use anharmonic::{Error, Result};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{
    AsymptoticsArgs, CompareArgs, DiscretizationArgs, KappaArgs, KappaMethodArg, OperatorArgs, PseudospectrumArgs,
    SemigroupArgs, SpectrumArgs, SpectrumMethod,
};
use crate::output::{create, with_suffix, Cell, Table};

/// Main table plus command-specific metadata for the sidecar.
pub struct Outcome {
    pub table: Table,
    pub extra: Value,
}

fn spec_of(op: &OperatorArgs) -> Result<OperatorSpec> {
    validate_spec(op.m, op.theta)
}

/// Defaults, with the Hermite basis widened to keep `4·n_top ≤ N`.
fn discretization(d: &DiscretizationArgs, n_top: usize) -> DiscretizationConfig {
    let base = DiscretizationConfig::default();
    DiscretizationConfig {
        basis_size: d.basis_size.unwrap_or(base.basis_size.max(4 * n_top)),
        hermite_scale: d.scale,
        fd_domain: d.fd_domain.unwrap_or(base.fd_domain),
        fd_points: d.fd_points.unwrap_or(base.fd_points),
    }
}

fn error_label(e: &Error) -> &'static str {
    match e {
        Error::DenominatorUnderflow { .. } => "denominator_underflow",
        Error::NotConverged { .. } => "not_converged",
        Error::RayDivergence { .. } => "ray_divergence",
        Error::ToleranceNotMet { .. } => "tolerance_not_met",
        _ => "error",
    }
}

fn auto_kappa_method(spec: &OperatorSpec) -> KappaMethodArg {
    match spec.exponent() {
        Exponent::Airy => KappaMethodArg::Airy,
        Exponent::Even(1) => KappaMethodArg::HarmonicExact,
        Exponent::Even(_) => KappaMethodArg::Ray,
    }
}

/// `κₙ` for `n ∈ [a, b]`, one `Result` per index.
fn kappa_rows(
    spec: &OperatorSpec,
    method: KappaMethodArg,
    a: usize,
    b: usize,
    config: &DiscretizationConfig,
) -> Result<Vec<Result<InstabilityRecord>>> {
    let theta = spec.theta();
    let method = if method == KappaMethodArg::Auto { auto_kappa_method(spec) } else { method };
    let wrong = |what: &str| Error::Config(format!("method {what} does not apply to m = {}", spec.m()));
    Ok(match method {
        KappaMethodArg::Airy => {
            if spec.exponent() != Exponent::Airy {
                return Err(wrong("airy"));
            }
            (a..=b).into_par_iter().map(|n| kappa_airy_full_line(theta, n)).collect()
        }
        KappaMethodArg::HarmonicExact => {
            if spec.exponent() != Exponent::Even(1) {
                return Err(wrong("harmonic-exact"));
            }
            (a..=b).into_par_iter().map(|n| kappa_harmonic_exact(theta, n)).collect()
        }
        KappaMethodArg::Ray => {
            let Exponent::Even(k) = spec.exponent() else {
                return Err(wrong("ray"));
            };
            kappa_ray_range(k, theta, b, config)?.into_iter().skip(a - 1).map(|r| Ok(r.record)).collect()
        }
        KappaMethodArg::Galerkin => kappa_galerkin_rows(spec, config, b)?.into_iter().skip(a - 1).collect(),
        KappaMethodArg::Auto => unreachable!("resolved above"),
    })
}

fn kappa_records(spec: &OperatorSpec, ns: &[usize], config: &DiscretizationConfig) -> Result<Vec<InstabilityRecord>> {
    let Some(&top) = ns.iter().max() else {
        return Ok(Vec::new());
    };
    let mut rows: Vec<Option<Result<InstabilityRecord>>> =
        kappa_rows(spec, KappaMethodArg::Auto, 1, top, config)?.into_iter().map(Some).collect();
    ns.iter().map(|&n| rows[n - 1].take().expect("indices are distinct")).collect()
}

pub fn spectrum(args: &SpectrumArgs) -> Result<Outcome> {
    let spec = spec_of(&args.op)?;
    if args.n == 0 {
        return Err(Error::Config("--n must be at least 1".into()));
    }
    let exact_available = matches!(spec.exponent(), Exponent::Airy | Exponent::Even(1));
    let exact = match args.method {
        SpectrumMethod::Auto => exact_available,
        SpectrumMethod::Exact if !exact_available => {
            return Err(Error::Config(format!("no closed-form spectrum for m = {}", spec.m())));
        }
        SpectrumMethod::Exact => true,
        SpectrumMethod::Galerkin => false,
    };
    let records = match (exact, spec.exponent()) {
        (true, Exponent::Airy) => airy_eigenrecords(spec.theta(), args.n)?,
        (true, _) => harmonic_eigenrecords(spec.theta(), args.n)?,
        (false, _) => eigenpairs(&build_matrix(&spec, &discretization(&args.disc, args.n))?, args.n)?,
    };
    let method = if exact { "exact" } else { "galerkin" };
    let mut table = Table::new(&["n", "re", "im", "abs", "method"]);
    for r in &records {
        table.push(vec![r.n.into(), r.lambda.re.into(), r.lambda.im.into(), r.lambda.norm().into(), method.into()]);
    }
    Ok(Outcome { table, extra: json!({ "count": records.len(), "method": method }) })
}

pub fn kappa(args: &KappaArgs) -> Result<Outcome> {
    let spec = spec_of(&args.op)?;
    let (a, b) = (args.n_range.start, args.n_range.end);
    let config = discretization(&args.disc, b);
    let rows = kappa_rows(&spec, args.method, a, b, &config)?;
    let mut table =
        Table::new(&["n", "kappa", "log_kappa", "method", "err_estimate", "status", "log_prediction"]);
    let mut failures = 0;
    for (n, row) in (a..=b).zip(rows) {
        let prediction = match spec.exponent() {
            Exponent::Airy if spec.theta() != 0.0 => Some(airy_kappa_prediction(spec.theta(), n)?.log_kappa),
            _ => None,
        };
        match row {
            Ok(r) => table.push(vec![
                n.into(),
                r.kappa.into(),
                r.log_kappa.into(),
                r.method.as_str().into(),
                r.err_estimate.into(),
                "ok".into(),
                prediction.into(),
            ]),
            Err(e) => {
                eprintln!("warning: n = {n}: {e}");
                failures += 1;
                table.push(vec![
                    n.into(),
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    Cell::Empty,
                    error_label(&e).into(),
                    prediction.into(),
                ]);
            }
        }
    }
    Ok(Outcome { table, extra: json!({ "failed_rows": failures, "discretization": config }) })
}

pub fn asymptotics(args: &AsymptoticsArgs) -> Result<Outcome> {
    let spec = spec_of(&args.op)?;
    let constants = asymptotic_constants(spec.m(), spec.theta())?;
    let mut table = Table::new(&["key", "value"]);
    match constants {
        AsymptoticConstants::Airy(c) => {
            table.push(vec!["m_theta".into(), c.m_theta.into()]);
            table.push(vec!["C".into(), c.c.into()]);
            table.push(vec!["K".into(), c.k_prefactor.into()]);
        }
        AsymptoticConstants::Even(c) => {
            table.push(vec!["xi".into(), c.xi.into()]);
            table.push(vec!["phi_at_xi".into(), c.phi_at_xi.into()]);
            table.push(vec!["c_k".into(), c.c_k.into()]);
            if c.k == 1 {
                let closed = c1_closed_form(spec.theta())?;
                table.push(vec!["c1_closed_form".into(), closed.into()]);
                table.push(vec!["c1_delta".into(), (c.c_k - closed).abs().into()]);
                let cos = (spec.theta() / 2.0).cos();
                table.push(vec!["t_threshold".into(), (c.c_k / cos).into()]);
                table.push(vec!["t_threshold_half".into(), (c.c_k / (2.0 * cos)).into()]);
            }
        }
    }
    Ok(Outcome { table, extra: serde_json::to_value(constants)? })
}

pub fn compare(args: &CompareArgs) -> Result<Outcome> {
    let spec = spec_of(&args.op)?;
    let (a, b) = (args.n_range.start, args.n_range.end);
    let config = discretization(&args.disc, b);
    let records: Vec<InstabilityRecord> =
        kappa_rows(&spec, KappaMethodArg::Auto, a, b, &config)?.into_iter().collect::<Result<_>>()?;
    let (predictions, extra): (Vec<f64>, Value) = match asymptotic_constants(spec.m(), spec.theta())? {
        AsymptoticConstants::Airy(c) => (
            records.iter().map(|r| airy_kappa_prediction(spec.theta(), r.n).map(|p| p.log_kappa)).collect::<Result<_>>()?,
            json!({ "prediction": "C(n - 1/2) + log K - log(n)/2", "C": c.c, "K": c.k_prefactor }),
        ),
        AsymptoticConstants::Even(c) => {
            // the prefactor is not known in closed form; fit it with the rate fixed
            let offsets: Vec<f64> =
                records.iter().map(|r| r.log_kappa - c.c_k * r.n as f64 + 0.5 * (r.n as f64).ln()).collect();
            let b_fit = offsets.iter().sum::<f64>() / offsets.len() as f64;
            let free = if records.len() >= 3 {
                Some(fit_growth_rate(&records.iter().map(|r| (r.n, r.log_kappa)).collect::<Vec<_>>())?)
            } else {
                None
            };
            (
                records.iter().map(|r| c.c_k * r.n as f64 - 0.5 * (r.n as f64).ln() + b_fit).collect(),
                json!({
                    "prediction": "c_k n - log(n)/2 + b",
                    "c_k": c.c_k,
                    "fitted_log_prefactor": b_fit,
                    "free_fit": free,
                }),
            )
        }
    };
    let mut table = Table::new(&["n", "kappa", "log_kappa", "log_prediction", "ratio", "method"]);
    for (r, p) in records.iter().zip(&predictions) {
        table.push(vec![
            r.n.into(),
            r.kappa.into(),
            r.log_kappa.into(),
            (*p).into(),
            (r.log_kappa - p).exp().into(),
            r.method.as_str().into(),
        ]);
    }
    Ok(Outcome { table, extra })
}

/// Bounding box of `λ₁ … λ₅` padded by half the first gap.
fn default_window(spec: &OperatorSpec, config: &DiscretizationConfig) -> Result<Window> {
    const COUNT: usize = 5;
    let records = match spec.exponent() {
        Exponent::Airy => airy_eigenrecords(spec.theta(), COUNT)?,
        Exponent::Even(1) => harmonic_eigenrecords(spec.theta(), COUNT)?,
        Exponent::Even(_) => eigenpairs(&build_matrix(spec, config)?, COUNT)?,
    };
    let pad = 0.5 * (records[1].lambda - records[0].lambda).norm();
    let (re, im): (Vec<f64>, Vec<f64>) = records.iter().map(|r| (r.lambda.re, r.lambda.im)).unzip();
    let lo = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min) - pad;
    let hi = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + pad;
    Window::new((lo(&re), hi(&re)), (lo(&im), hi(&im)))
}

pub fn pseudospectrum(args: &PseudospectrumArgs) -> Result<Outcome> {
    let Some(out) = args.output.out.as_deref() else {
        return Err(Error::Config("pseudospectrum writes several files and needs --out".into()));
    };
    let spec = spec_of(&args.op)?;
    if args.eps.is_empty() || args.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Config("every ε must be positive".into()));
    }
    let config = discretization(&args.disc, 0);
    let window = match args.window {
        Some(w) => Window::new((w.re.lo, w.re.hi), (w.im.lo, w.im.hi))?,
        None => default_window(&spec, &config)?,
    };
    let field = resolvent_grid(&spec, &config, window, args.grid.nx, args.grid.ny)?;

    let (resolved, unresolved): (Vec<f64>, Vec<f64>) = args.eps.iter().partition(|&&e| field.resolves(e));
    for e in &unresolved {
        eprintln!("warning: ε = {e} is finer than the grid resolves; measured on refined local windows instead");
    }
    let set = contours(&field, &resolved)?;
    set.write_json(create(&with_suffix(out, "contours.json"))?)?;

    let ns: Vec<usize> = field.eigenvalues.iter().map(|(n, _)| *n).collect();
    let kappas = kappa_records(&spec, &ns, &discretization(&args.disc, ns.iter().copied().max().unwrap_or(0)))?;
    let report = perimeter_check(&set, &kappas);
    let local = if (args.local_perimeter || !unresolved.is_empty()) && !kappas.is_empty() {
        let (locals, local_report) = perimeter_study(&spec, &config, &kappas, &args.eps, &PerimeterStudy::default())?;
        Some(json!({ "components": locals, "report": local_report }))
    } else {
        None
    };
    let mut w = create(&with_suffix(out, "perimeter.json"))?;
    serde_json::to_writer_pretty(
        &mut w,
        &json!({ "kappas": kappas, "grid": report, "unresolved_eps": unresolved, "local": local }),
    )?;
    writeln!(w)?;
    w.flush()?;

    let scatter = match args.scatter {
        Some(trials) => {
            let eps = args.scatter_eps.unwrap_or(args.eps[0]);
            let clouds = perturbation_scatter(&spec, &config, eps, trials, args.seed)?;
            let mut w = create(&with_suffix(out, "scatter.csv"))?;
            writeln!(w, "trial,re,im")?;
            for c in &clouds {
                for z in &c.eigenvalues {
                    writeln!(w, "{},{},{}", c.trial, z.re, z.im)?;
                }
            }
            w.flush()?;
            let matrix = build_matrix(&spec, &config)?;
            let report = containment(&matrix, &clouds, eps, 1.0, std::slice::from_ref(&field));
            Some(json!({ "epsilon": eps, "trials": trials, "seed": args.seed, "containment": report }))
        }
        None => None,
    };

    let mut table = Table::new(&["re", "im", "log10_resnorm"]);
    for j in 0..field.ny {
        for i in 0..field.nx {
            table.push(vec![field.x(i).into(), field.y(j).into(), field.value(i, j).into()]);
        }
    }
    let extra = json!({
        "window": field.window,
        "matrix_size": field.matrix_size,
        "trusted_radius": field.trusted_radius,
        "n_stability": field.n_stability,
        "eigenvalues": field.eigenvalues,
        "open_components": set.levels.iter().map(|l| l.components.iter().filter(|c| !c.closed).count()).sum::<usize>(),
        "perimeter_all_pass": report.all_pass(),
        "unresolved_eps": unresolved,
        "scatter": scatter,
    });
    Ok(Outcome { table, extra })
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

pub fn semigroup(args: &SemigroupArgs) -> Result<Outcome> {
    let spec = spec_of(&args.op)?;
    if let Some(scan) = args.scan {
        if args.steps < 2 {
            return Err(Error::Config("--steps must be at least 2".into()));
        }
        let grid = linspace(scan.lo, scan.hi, args.steps);
        let s = threshold_scan(&spec, &grid, (args.n_range.start, args.n_range.end))?;
        let mut table = Table::new(&["key", "value"]);
        table.push(vec!["kappa_rate".into(), s.kappa_rate.into()]);
        table.push(vec!["lambda_slope".into(), s.lambda_slope.into()]);
        table.push(vec!["t_critical".into(), s.t_critical.into()]);
        table.push(vec!["bracket_lo".into(), s.bracket.0.into()]);
        table.push(vec!["bracket_hi".into(), s.bracket.1.into()]);
        table.push(vec!["candidate_t".into(), s.candidate_t.into()]);
        table.push(vec!["candidate_t_half".into(), s.candidate_t_half.into()]);
        table.push(vec!["closest".into(), s.closest.as_str().into()]);
        return Ok(Outcome { table, extra: serde_json::to_value(&s)? });
    }
    if args.n_max < 4 {
        return Err(Error::Config("--n-max must be at least 4".into()));
    }
    let ns = sample_indices(args.n_max);
    let config = discretization(&args.disc, args.n_max);
    let table_rows = kappa_table(&spec, &ns, &config)?;
    let reports = args
        .t
        .par_iter()
        .map(|&t| classify(&spec, &table_rows, t, args.n_max <= DENSE_LIMIT))
        .collect::<Result<Vec<_>>>()?;
    let mut table = Table::new(&["t", "n", "log_term_norm", "classification"]);
    for r in &reports {
        for (n, v) in &r.term_norms {
            table.push(vec![r.t.into(), (*n).into(), (*v).into(), r.classification.as_str().into()]);
        }
    }
    let remainders: Vec<Value> = if args.remainder_n.is_empty() {
        Vec::new()
    } else {
        args.t
            .iter()
            .map(|&t| match remainder_shape(&spec, &args.remainder_n, t, &config) {
                Ok(fit) => json!(fit),
                Err(e) => {
                    eprintln!("warning: remainder fit at t = {t}: {e}");
                    json!({ "t": t, "error": e.to_string() })
                }
            })
            .collect()
    };
    let summary: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "t": r.t,
                "classification": r.classification,
                "tail_slope": r.tail_slope,
                "log_sum_bound": r.log_sum_bound,
            })
        })
        .collect();
    Ok(Outcome { table, extra: json!({ "series": summary, "remainders": remainders, "sampled_indices": ns.len() }) })
}
