//! Experiment CLI: runs seeded query experiments from a JSON config and
//! emits an aggregated metric table as CSV.

use std::fs::File;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geopriv::experiment::{run_experiment, write_csv, ExperimentConfig, QueryKind};
use geopriv::Error;

#[derive(Parser)]
#[command(
    name = "geopriv",
    version,
    about = "Adaptive privacy budgeting experiments under geo-privacy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Private range counting inside a planar rectangle.
    RangeCount(RunArgs),
    /// Private Gaussian KDE at a query point.
    Kde(RunArgs),
    /// Private k nearest neighbors to a query point.
    Knn(RunArgs),
    /// Central-model threshold query over a record multiset.
    Threshold(RunArgs),
    /// Sequential range queries recycling privacy savings.
    MultiQuery(RunArgs),
}

impl Command {
    fn query_kind(&self) -> QueryKind {
        match self {
            Command::RangeCount(_) => QueryKind::RangeCount,
            Command::Kde(_) => QueryKind::Kde,
            Command::Knn(_) => QueryKind::Knn,
            Command::Threshold(_) => QueryKind::Threshold,
            Command::MultiQuery(_) => QueryKind::MultiQuery,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::RangeCount(a)
            | Command::Kde(a)
            | Command::Knn(a)
            | Command::Threshold(a)
            | Command::MultiQuery(a) => a,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
}

fn run(kind: QueryKind, args: &RunArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if config.query != kind {
        return Err(Error::Config(format!(
            "config is for `{}`, but the `{}` subcommand was invoked",
            config.query.label(),
            kind.label()
        )));
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    config.validate()?;

    let rows = run_experiment(&config)?;
    match &args.out {
        Some(path) => write_csv(&rows, File::create(path)?)?,
        None => write_csv(&rows, std::io::stdout().lock())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command.query_kind(), cli.command.args()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
