use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rmv_cli::commands::{
    run_ctune, run_estimate, run_hedge, run_mc, run_pde, run_reconstruct, run_simulate,
};
use rmv_cli::config::load;
use rmv_cli::pipeline::{load_config, run_pipeline};
use rmv_cli::report::ensure_out_dir;
use rmv_cli::{CliError, CliResult};

/// Robust drift estimation and mean-variance robust hedging.
#[derive(Parser)]
#[command(name = "rmv", version, about)]
struct Cli {
    /// Master seed of all random streams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results are identical for
    /// any thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a diffusion or market path to CSV.
    Simulate,
    /// Reconstruct the volatility state from realized quadratic variation.
    Reconstruct,
    /// Robust M-estimate of the drift parameter with confidence region.
    Estimate,
    /// Solve for the optimal truncation level c* and clipping matrix.
    Ctune,
    /// Fit and evaluate the robust mean-variance hedging strategy.
    Hedge,
    /// Solve the stochastic-volatility pricing PDE to a value surface.
    Pde,
    /// Replicated simulate-and-estimate study.
    Mc,
    /// Full pipeline: reconstruct, estimate, region, hedge.
    Pipeline,
}

fn config_path(cli: &Cli) -> CliResult<&PathBuf> {
    cli.config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required for this subcommand".into()))
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    ensure_out_dir(&cli.out)?;
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Simulate => run_simulate(&load(config_path(cli)?)?, seed, &cli.out),
        Command::Reconstruct => run_reconstruct(&load(config_path(cli)?)?, &cli.out),
        Command::Estimate => run_estimate(&load(config_path(cli)?)?, seed, &cli.out).map(|_| ()),
        Command::Ctune => run_ctune(&load(config_path(cli)?)?, &cli.out).map(|_| ()),
        Command::Hedge => run_hedge(&load(config_path(cli)?)?, seed, &cli.out).map(|_| ()),
        Command::Pde => run_pde(&load(config_path(cli)?)?, &cli.out),
        Command::Mc => run_mc(&load(config_path(cli)?)?, seed, &cli.out).map(|_| ()),
        Command::Pipeline => {
            let (mut cfg, raw) = load_config(config_path(cli)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            run_pipeline(&cfg, &raw, &cli.out).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
