//! `fexp`: simulate long-memory series, fit the FEXP posterior of `d`, and
//! run the replicated normality and rate studies.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "fexp", version, about = "Bayesian FEXP estimation of the long-memory parameter")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `experiment.out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the Whittle likelihood instead of the exact Gaussian one.
    #[arg(long)]
    pub whittle: bool,
    /// Base seed (overrides `experiment.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (overrides `experiment.jobs`).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw sample paths from the configured truth.
    Simulate(CommonArgs),
    /// Posterior of d for an observed series.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        /// Data file, one value per line (overrides `experiment.data`).
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Replicated comparison of posterior draws with the limiting normal law.
    Bvm(CommonArgs),
    /// Paired prior A / prior B fits over the n grid.
    RateStudy(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(c) | Command::Bvm(c) | Command::RateStudy(c) => c,
            Command::Fit { common, .. } => common,
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    let overrides = Overrides {
        out: common.out.clone(),
        seed: common.seed,
        whittle: common.whittle,
        jobs: common.jobs,
        data: match &cli.command {
            Command::Fit { data, .. } => data.clone(),
            _ => None,
        },
    };
    let cfg = ExperimentConfig::load(&common.config, &overrides)?;
    if let Some(j) = cfg.experiment.jobs {
        // Fails only if a pool already exists, which then keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    match cli.command {
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Fit { .. } => commands::fit(&cfg),
        Command::Bvm(_) => commands::bvm(&cfg),
        Command::RateStudy(_) => commands::rate_study(&cfg),
    }
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on runtime failure, 2 on usage or validation errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
