//! `rainfuse`: simulate storms, fuse radar with wiper traces, evaluate and
//! report.
//!
//! Exit codes: 0 success, 2 input or schema error, 3 numerical degeneracy,
//! 4 insufficient data.

mod commands;
mod inputs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rainfuse_core::Error;

#[derive(Parser)]
#[command(name = "rainfuse", version, about = "Radar and windshield-wiper rainfall fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Progress messages on stderr.
    #[arg(short, long)]
    verbose: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bundled {
    Default,
    Small,
}

#[derive(Subcommand)]
enum Command {
    /// Generate truth, radar, trace, gage and label files from a storm scenario.
    Simulate {
        /// Scenario file.
        #[arg(long, conflicts_with = "bundled", required_unless_present = "bundled")]
        scenario: Option<PathBuf>,
        /// Use a scenario shipped with the tool.
        #[arg(long, value_enum)]
        bundled: Option<Bundled>,
        #[command(flatten)]
        common: Common,
    },
    /// Fuse radar fields with wiper traces; writes per-bin fields and case labels.
    Fuse {
        #[command(flatten)]
        common: Common,
    },
    /// Leave-one-out ROC/AUC and, with labels, the per-source rate table.
    Evaluate {
        #[command(flatten)]
        common: Common,
    },
    /// Print ASCII summaries of a fuse/evaluate output directory.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DegenerateLikelihood => 3,
        Error::Insufficient(_) | Error::UndefinedRate(_) => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let common = match &cli.command {
        Command::Simulate { common, .. }
        | Command::Fuse { common }
        | Command::Evaluate { common }
        | Command::Report { common } => common.clone(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = common.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate { scenario, bundled, common } => {
            let source = match (scenario, bundled) {
                (Some(p), _) => commands::ScenarioSource::File(p),
                (None, Some(Bundled::Small)) => commands::ScenarioSource::Small,
                (None, _) => commands::ScenarioSource::Default,
            };
            commands::simulate(source, &common.out, common.seed, common.verbose)
        }
        Command::Fuse { common } => {
            let cfg = inputs::load_config(common.config.as_deref(), common.seed)?;
            commands::fuse(&cfg, &common.out, common.verbose)
        }
        Command::Evaluate { common } => {
            let cfg = inputs::load_config(common.config.as_deref(), common.seed)?;
            commands::evaluate(&cfg, &common.out, common.verbose)
        }
        Command::Report { common } => commands::report(&common.out).map(|text| print!("{text}")),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rainfuse: error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
