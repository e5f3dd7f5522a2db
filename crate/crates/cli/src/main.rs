use clap::{Parser, Subcommand, ValueEnum};
use pinwheel::io::FieldFormat;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

mod commands;
mod config;

use config::RunConfig;

/// Pinwheel states of competitive Schrödinger systems.
///
/// Settings come from the TOML file given by --config, then from
/// environment variables `PINWHEEL_<SECTION>__<KEY>` (for example
/// `PINWHEEL_SOLVER__MAX_ITERS=500`), then from the flags below.
#[derive(Parser, Debug)]
#[command(name = "pinwheel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[arg(long, global = true, env = "PINWHEEL_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory; the effective configuration is echoed into it.
    #[arg(
        long,
        global = true,
        env = "PINWHEEL_OUT",
        default_value = "pinwheel-out"
    )]
    out: PathBuf,
    #[arg(long, global = true, env = "PINWHEEL_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "PINWHEEL_THREADS")]
    threads: Option<usize>,
    /// Field dump encoding.
    #[arg(long, global = true, env = "PINWHEEL_FORMAT")]
    format: Option<Format>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Radial ground state of the limit equation.
    Groundstate,
    /// Group orbit of a base point and the separation constants.
    Orbit,
    /// Lemma checks; exits with 1 if any check fails.
    Verify,
    /// Ansatz energy bound over a range of orbit radii.
    AnsatzScan,
    /// Nehari minimization in the pinwheel subspace.
    Solve,
    /// Warm-started minimizations along the coupling schedule.
    Continuate,
    /// Summarize the artifacts in the output directory.
    Report,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Format {
    Text,
    Binary,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Verify(String),
    Numerical(String),
    Output(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Config(_) | CliError::Output(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<pinwheel::Error> for CliError {
    fn from(e: pinwheel::Error) -> Self {
        use pinwheel::Error as E;
        match e {
            E::Solver(_) | E::Fit(_) | E::InfeasibleProjection { .. } | E::EmptyPartition => {
                CliError::Numerical(e.to_string())
            }
            E::Io(_) => CliError::Output(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Output(e.to_string())
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.threads {
        cfg.threads = Some(t);
    }
    if let Some(f) = cli.format {
        cfg.format = match f {
            Format::Text => FieldFormat::Text,
            Format::Binary => FieldFormat::Binary,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let out: &Path = &cli.out;
    if cli.command == Command::Report {
        let text = commands::report(out)?;
        print!("{text}");
        std::fs::write(out.join("report.txt"), text)?;
        return Ok(());
    }
    let cfg = resolve(cli)?;
    if let Some(n) = cfg.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Output(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("config.toml"), cfg.to_toml()?)?;
    match cli.command {
        Command::Groundstate => commands::groundstate(&cfg, out),
        Command::Orbit => commands::orbit(&cfg, out),
        Command::Verify => commands::verify(&cfg, out),
        Command::AnsatzScan => commands::ansatz_scan(&cfg, out),
        Command::Solve => commands::solve(&cfg, out),
        Command::Continuate => commands::continuate(&cfg, out),
        Command::Report => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pinwheel: {e}");
            ExitCode::from(e.code())
        }
    }
}
