//! `emmb`: simulate, fit, prep and predict from the command line.

mod config;
mod fit;
mod io;
mod predict;
mod prep;
mod simulate;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use emmb::TableFormat;

/// Bad or missing settings; exits with status 2 like a clap usage error.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(name = "emmb", version, about = "Window-intercept EM regression with moving-block intercept bounds")]
pub struct Cli {
    /// TOML file of settings; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (stdout when omitted, where allowed).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table format: csv or markdown.
    #[arg(long, global = true)]
    format: Option<TableFormat>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo comparison of the window-intercept estimator and OLS.
    Simulate(simulate::Args),
    /// Fit a design matrix and report coefficients, bounds and R^2.
    Fit(fit::Args),
    /// Build the daily PM2.5 design matrix from the hourly file.
    Prep(prep::Args),
    /// Prediction intervals from a saved fit.
    Predict(predict::Args),
}

/// Global settings after merging flags with the config file.
pub struct Common {
    pub out: Option<PathBuf>,
    pub format: TableFormat,
    pub seed: u64,
}

fn resolve_common(cli: &Cli, r: &mut config::Resolver) -> anyhow::Result<Common> {
    let out: Option<String> = r.get("out", cli.out.as_ref().map(|p| p.display().to_string()))?;
    let format: String = r.or("format", cli.format.map(|f| f.to_string()), TableFormat::default().to_string())?;
    Ok(Common {
        out: out.map(PathBuf::from),
        format: format.parse().map_err(|e: emmb::EmmbError| Usage(e.to_string()))?,
        seed: r.or("seed", cli.seed, 0)?,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let name = match &cli.command {
        Command::Simulate(_) => "simulate",
        Command::Fit(_) => "fit",
        Command::Prep(_) => "prep",
        Command::Predict(_) => "predict",
    };
    let mut r = config::Resolver::load(cli.config.as_deref(), name)?;
    let common = resolve_common(&cli, &mut r)?;
    match cli.command {
        Command::Simulate(a) => simulate::run(a, r, common),
        Command::Fit(a) => fit::run(a, r, common),
        Command::Prep(a) => prep::run(a, r, common),
        Command::Predict(a) => predict::run(a, r, common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e.downcast_ref::<Usage>().is_some()
                || matches!(e.downcast_ref::<emmb::EmmbError>(), Some(emmb::EmmbError::InvalidConfig(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}
