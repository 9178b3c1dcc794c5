use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use eaglass::experiment::{self, parse_override};
use eaglass::Error;

#[derive(Parser)]
#[command(
    name = "eaglass",
    version,
    about = "Exact ground states and disorder experiments for the Edwards-Anderson spin glass"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML file with run parameters.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    solver: Option<SolverArg>,

    /// Override any config key, e.g. `--set samples=500`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Oracle,
    Dp,
    Auto,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Ground states of random instances.
    Gs,
    /// Excitation tables for a block.
    Excite,
    /// Ground-state energy as one coupling varies.
    ScanEdge,
    /// Periodic/antiperiodic fluctuation samples.
    Fluct,
    /// Block-filtration martingale decomposition.
    Martingale,
    /// Variance of G against window size.
    Variance,
    /// Empirical log-MGF of G.
    Mgf,
    /// Window pattern frequencies across torus sizes.
    Weights,
    /// Oracle equivalence, selection and covariance suite.
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Gs => "gs",
            Command::Excite => "excite",
            Command::ScanEdge => "scan-edge",
            Command::Fluct => "fluct",
            Command::Martingale => "martingale",
            Command::Variance => "variance",
            Command::Mgf => "mgf",
            Command::Weights => "weights",
            Command::Check => "check",
        }
    }
}

fn run(cli: &Cli) -> Result<i32, Error> {
    let mut overrides = Vec::new();
    for s in &cli.set {
        overrides.push(parse_override(s)?);
    }
    if let Some(s) = cli.seed {
        overrides.push(("seed".into(), toml::Value::Integer(s as i64)));
    }
    if let Some(w) = cli.workers {
        overrides.push(("workers".into(), toml::Value::Integer(w as i64)));
    }
    if let Some(o) = &cli.out {
        overrides.push(("out".into(), toml::Value::String(o.display().to_string())));
    }
    if let Some(s) = cli.solver {
        let name = match s {
            SolverArg::Oracle => "oracle",
            SolverArg::Dp => "dp",
            SolverArg::Auto => "auto",
        };
        overrides.push(("solver".into(), toml::Value::String(name.into())));
    }
    let name = cli.command.name();
    let mut cfg = experiment::resolve(cli.config.as_deref(), &overrides)?;
    if !cfg.experiment.is_empty() && cfg.experiment != name {
        return Err(Error::Config(format!(
            "config is for experiment `{}` but `{name}` was requested",
            cfg.experiment
        )));
    }
    cfg.experiment = name.to_string();

    let outcome = experiment::run(&cfg)?;
    for line in &outcome.report.summary {
        println!("{line}");
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    for v in &outcome.report.violations {
        eprintln!("violation: {v}");
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
