mod args;
mod commands;
mod config;
mod output;

use std::ffi::OsString;
use std::process::ExitCode;

use anharmonic::{Error, ErrorKind, Result};
use clap::Parser;

use args::{Cli, Command, OutputArgs};
use output::Sidecar;

const THREADS_ENV: &str = "ANHARMONIC_THREADS";

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 2,
        ErrorKind::Convergence => 3,
        ErrorKind::Io => 4,
    }
}

fn thread_count(flag: Option<usize>) -> Result<usize> {
    let n = match (flag, std::env::var(THREADS_ENV)) {
        (Some(n), _) => n,
        (None, Ok(v)) => v.trim().parse().map_err(|e| Error::Config(format!("{THREADS_ENV}={v:?}: {e}")))?,
        (None, Err(_)) => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if n == 0 {
        return Err(Error::Config("thread count must be at least 1".into()));
    }
    Ok(n)
}

fn output_args(cmd: &Command) -> &OutputArgs {
    match cmd {
        Command::Spectrum(a) => &a.output,
        Command::Kappa(a) => &a.output,
        Command::Asymptotics(a) => &a.output,
        Command::Compare(a) => &a.output,
        Command::Pseudospectrum(a) => &a.output,
        Command::Semigroup(a) => &a.output,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let threads = thread_count(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    // parallelism lives in the grid and index loops; dense kernels stay serial
    anharmonic::linalg::sequential_dense_kernels();
    let sidecar = Sidecar::start();
    let outcome = match &cli.command {
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Kappa(a) => commands::kappa(a),
        Command::Asymptotics(a) => commands::asymptotics(a),
        Command::Compare(a) => commands::compare(a),
        Command::Pseudospectrum(a) => commands::pseudospectrum(a),
        Command::Semigroup(a) => commands::semigroup(a),
    }?;
    let out = output_args(&cli.command);
    output::emit(&outcome.table, out.format, out.out.as_deref())?;
    if let Some(path) = out.out.as_deref() {
        sidecar.write(path, cli.command.name(), serde_json::to_value(cli)?, threads, outcome.extra)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let raw: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::expand(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let cli = Cli::parse_from(argv);
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
