//! `divfolio` command-line front end.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use divfolio::strategies::StrategyError;
use divfolio::{OptimizerError, ScenarioError};

use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Solver(_) => 4,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<OptimizerError> for CliError {
    fn from(e: OptimizerError) -> Self {
        match e {
            OptimizerError::TargetUnattainable { .. } => CliError::Infeasible(e.to_string()),
            OptimizerError::Solver { .. } | OptimizerError::Dr(_) | OptimizerError::Program(_) => {
                CliError::Solver(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<StrategyError> for CliError {
    fn from(e: StrategyError) -> Self {
        match e {
            StrategyError::Optimizer(o) => o.into(),
            StrategyError::Unknown(_) | StrategyError::Risk(_) => CliError::Input(e.to_string()),
            StrategyError::RiskParityUndefined | StrategyError::RiskParityNoConvergence(_) => {
                CliError::Solver(e.to_string())
            }
        }
    }
}

#[derive(Parser)]
#[command(name = "divfolio", version, about = "Maximum diversification ratio portfolios and backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a price CSV to returns and per-asset statistics.
    Ingest(Opts),
    /// Fit strategies on the full sample.
    Optimize(Opts),
    /// Trace an efficient frontier over equally spaced targets.
    Frontier(Opts),
    /// Rolling-window out-of-sample backtest with the metric tables.
    Backtest(Opts),
    /// Asset risks under every measure and the target-return bounds.
    Report(Opts),
}

#[derive(Args, Default)]
struct Opts {
    /// Key-value config file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price CSV: `date,<asset1>,...` with ISO dates.
    #[arg(long)]
    data: Option<String>,
    /// vol, mad, cvar or expectile.
    #[arg(long)]
    measure: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    in_len: Option<String>,
    #[arg(long)]
    hold_len: Option<String>,
    /// none, frac or abs.
    #[arg(long)]
    eta_mode: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<String>,
    /// Number of frontier points.
    #[arg(long)]
    grid: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated strategy names, or `all`.
    #[arg(long, alias = "strategy")]
    strategies: Option<String>,
    /// Price column holding the market index; excluded from the assets.
    #[arg(long)]
    index_col: Option<String>,
    /// dr or minrisk.
    #[arg(long)]
    family: Option<String>,
    /// inception-free or from-cash.
    #[arg(long)]
    turnover: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Print the per-asset mean and volatility table.
    #[arg(long)]
    summary: bool,
}

impl Opts {
    fn into_config(self) -> Result<(RunConfig, bool), CliError> {
        let file = match &self.config {
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                config::parse_file(&text, &path.display().to_string())?
            }
            None => BTreeMap::new(),
        };
        let flags = [
            ("data", self.data),
            ("measure", self.measure),
            ("epsilon", self.epsilon),
            ("alpha", self.alpha),
            ("in_len", self.in_len),
            ("hold_len", self.hold_len),
            ("eta_mode", self.eta_mode),
            ("eta", self.eta),
            ("grid", self.grid),
            ("out", self.out),
            ("strategies", self.strategies),
            ("index_col", self.index_col),
            ("family", self.family),
            ("turnover", self.turnover),
            ("seed", self.seed),
        ];
        let overrides = flags.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))).collect();
        Ok((RunConfig::resolve(file, overrides)?, self.summary))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, opts) = match cli.command {
        Command::Ingest(o) => ("ingest", o),
        Command::Optimize(o) => ("optimize", o),
        Command::Frontier(o) => ("frontier", o),
        Command::Backtest(o) => ("backtest", o),
        Command::Report(o) => ("report", o),
    };
    let (cfg, summary) = opts.into_config()?;
    let input = commands::Input::load(name, &cfg)?;
    match name {
        "ingest" => commands::ingest(&cfg, &input, summary),
        "optimize" => commands::optimize(&cfg, &input),
        "frontier" => commands::frontier(&cfg, &input),
        "backtest" => commands::backtest(&cfg, &input),
        _ => commands::report(&cfg, &input),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("divfolio: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
