use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Spectra, instability indices, pseudospectra and semigroup series of the
/// operators −d²/dx² + e^{iθ}|x|^m.
#[derive(Debug, Parser, Serialize)]
#[command(name = "anharmonic", version, args_override_self = true)]
pub struct Cli {
    /// Worker threads; falls back to ANHARMONIC_THREADS, then to the number of CPUs
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file whose keys are flag names; command-line flags take precedence
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Eigenvalue table
    Spectrum(SpectrumArgs),
    /// Instability indices κₙ
    Kappa(KappaArgs),
    /// Asymptotic constants
    Asymptotics(AsymptoticsArgs),
    /// κₙ against the asymptotic prediction
    Compare(CompareArgs),
    /// Resolvent-norm field, ε-contours, perimeter check, perturbation scatter
    Pseudospectrum(PseudospectrumArgs),
    /// Term norms of the semigroup series, or the m = 2 threshold scan
    Semigroup(SemigroupArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Kappa(_) => "kappa",
            Command::Asymptotics(_) => "asymptotics",
            Command::Compare(_) => "compare",
            Command::Pseudospectrum(_) => "pseudospectrum",
            Command::Semigroup(_) => "semigroup",
        }
    }
}

pub const SUBCOMMANDS: [&str; 6] = ["spectrum", "kappa", "asymptotics", "compare", "pseudospectrum", "semigroup"];

#[derive(Debug, Args, Serialize)]
pub struct OperatorArgs {
    /// Exponent m of the potential (1 or even)
    #[arg(long)]
    pub m: f64,
    /// Rotation angle θ
    #[arg(long, allow_negative_numbers = true)]
    pub theta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct DiscretizationArgs {
    /// Hermite basis size N
    #[arg(long)]
    pub basis_size: Option<usize>,
    /// Hermite scale s (default: balanced at index N/4)
    #[arg(long)]
    pub scale: Option<f64>,
    /// Finite-difference half-width L (m = 1)
    #[arg(long)]
    pub fd_domain: Option<f64>,
    /// Finite-difference intervals M, even (m = 1)
    #[arg(long)]
    pub fd_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Serialize)]
pub struct OutputArgs {
    /// Output file; a `<out>.meta.json` sidecar is written next to it
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumMethod {
    Auto,
    Exact,
    Galerkin,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    /// Number of eigenvalues
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = SpectrumMethod::Auto)]
    pub method: SpectrumMethod,
    #[command(flatten)]
    pub disc: DiscretizationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMethodArg {
    Auto,
    Galerkin,
    Airy,
    HarmonicExact,
    Ray,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Range {
    pub start: usize,
    pub end: usize,
}

pub fn parse_range(s: &str) -> Result<Range, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected a:b, got {s:?}"))?;
    let start: usize = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let end: usize = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if start == 0 || end < start {
        return Err(format!("range {s:?} must satisfy 1 <= a <= b"));
    }
    Ok(Range { start, end })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

pub fn parse_interval(s: &str) -> Result<Interval, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if !(lo < hi) {
        return Err(format!("interval {s:?} must satisfy lo < hi"));
    }
    Ok(Interval { lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowArg {
    pub re: Interval,
    pub im: Interval,
}

pub fn parse_window(s: &str) -> Result<WindowArg, String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected re0:re1,im0:im1, got {s:?}"))?;
    Ok(WindowArg { re: parse_interval(a)?, im: parse_interval(b)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let (a, b) = s.split_once('x').ok_or_else(|| format!("expected NXxNY, got {s:?}"))?;
    let nx: usize = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let ny: usize = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if nx < 2 || ny < 2 {
        return Err(format!("grid {s:?} needs at least 2 points per axis"));
    }
    Ok(Grid { nx, ny })
}

#[derive(Debug, Args, Serialize)]
pub struct KappaArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    /// Index range a:b
    #[arg(long, value_parser = parse_range)]
    pub n_range: Range,
    #[arg(long, value_enum, default_value_t = KappaMethodArg::Auto)]
    pub method: KappaMethodArg,
    #[command(flatten)]
    pub disc: DiscretizationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    /// Index range a:b
    #[arg(long, value_parser = parse_range)]
    pub n_range: Range,
    #[command(flatten)]
    pub disc: DiscretizationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PseudospectrumArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    /// Window re0:re1,im0:im1 (default: box around λ₁…λ₅ padded by half
    /// the first gap)
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    pub window: Option<WindowArg>,
    /// Grid size NXxNY
    #[arg(long, value_parser = parse_grid, default_value = "200x200")]
    pub grid: Grid,
    /// ε levels, comma separated
    #[arg(long, value_delimiter = ',', default_value = "1e-3")]
    pub eps: Vec<f64>,
    /// Number of random-perturbation trials (none by default)
    #[arg(long)]
    pub scatter: Option<usize>,
    /// Perturbation size (default: the first ε)
    #[arg(long)]
    pub scatter_eps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also measure each eigenvalue's ε-component on its own refined window
    #[arg(long)]
    pub local_perimeter: bool,
    #[command(flatten)]
    pub disc: DiscretizationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SemigroupArgs {
    #[command(flatten)]
    pub op: OperatorArgs,
    /// Times t, comma separated
    #[arg(long, value_delimiter = ',', conflicts_with = "scan", required_unless_present = "scan")]
    pub t: Vec<f64>,
    /// Threshold scan over t0:t1 (m = 2)
    #[arg(long, value_parser = parse_interval)]
    pub scan: Option<Interval>,
    /// Points of the scan grid
    #[arg(long, default_value_t = 101)]
    pub steps: usize,
    /// Indices used by the threshold scan
    #[arg(long, value_parser = parse_range, default_value = "10:40")]
    pub n_range: Range,
    /// Largest index of the term-norm table
    #[arg(long, default_value_t = 200)]
    pub n_max: usize,
    /// Tail start indices N for the remainder fit, comma separated
    #[arg(long, value_delimiter = ',')]
    pub remainder_n: Vec<usize>,
    #[command(flatten)]
    pub disc: DiscretizationArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}
