//! recprompt: construct, evaluate, and select prompts for LLM-based
//! recommendation over any OpenAI-compatible endpoint or a deterministic
//! offline mock oracle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use recprompt::error::Error;
use recprompt::metrics::random_baseline_stats;
use recprompt::runner::Workspace;
use recprompt::selector::{RpiMode, Strategy};

#[derive(Parser)]
#[command(name = "recprompt", version, about = "Prompt evaluation and selection for LLM recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration file (TOML).
    #[arg(long, short = 'c')]
    config: PathBuf,
    /// Restrict to one dataset.
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Validation,
    Test,
}

impl SplitArg {
    fn name(&self) -> &'static str {
        match self {
            SplitArg::Validation => "validation",
            SplitArg::Test => "test",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Cheap,
    Expensive,
    Mock,
}

impl ModelArg {
    fn name(&self) -> &'static str {
        match self {
            ModelArg::Cheap => "cheap",
            ModelArg::Expensive => "expensive",
            ModelArg::Mock => "mock",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Gs,
    Rpi,
    GsStar,
}

#[derive(Clone, Copy, ValueEnum)]
enum RpiModeArg {
    Pairwise,
    RatioToMean,
}

impl RpiModeArg {
    fn mode(&self) -> RpiMode {
        match self {
            RpiModeArg::Pairwise => RpiMode::Pairwise,
            RpiModeArg::RatioToMean => RpiMode::RatioToMeanOfOthers,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse and filter the review datasets; write normalized artifacts.
    Ingest {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Dataset statistics (CSV + markdown).
    Stats {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Evaluate grid prompts over a split; resumable and budget-capped.
    Run {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum)]
        split: SplitArg,
        #[arg(long, value_enum)]
        model: ModelArg,
        /// Only evaluate specs matching this *-wildcard pattern.
        #[arg(long)]
        specs: Option<String>,
        /// Override the config's budget cap for this invocation.
        #[arg(long)]
        budget_usd: Option<f64>,
    },
    /// Select a prompt per dataset from the validation grid.
    Select {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Which model's validation grid to select from.
        #[arg(long, value_enum, default_value = "cheap")]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "pairwise")]
        rpi_mode: RpiModeArg,
    },
    /// Compute RPI tables from stored results.
    Rpi {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum, default_value = "validation")]
        split: SplitArg,
        #[arg(long, value_enum, default_value = "cheap")]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "pairwise")]
        rpi_mode: RpiModeArg,
    },
    /// Regenerate all reports from disk state.
    Report {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Monte-Carlo estimate of the random-ranking nDCG baseline.
    Baseline {
        #[arg(long, default_value_t = 2)]
        n_pos: usize,
        #[arg(long, default_value_t = 20)]
        n_cand: usize,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long, default_value_t = 200_000)]
        trials: u64,
        #[arg(long)]
        seed: u64,
    },
    /// Aggregate the API-cost ledger.
    Cost {
        #[command(flatten)]
        config: ConfigArg,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Ingest { config } => {
            let mut ws = Workspace::open(&config.config)?;
            let rows = ws.cmd_ingest(config.dataset.as_deref())?;
            for (name, stats) in rows {
                println!("{name}: {} items, {} users", stats.n_items, stats.n_users);
            }
        }
        Command::Stats { config } => {
            let mut ws = Workspace::open(&config.config)?;
            let csv = ws.cmd_stats(config.dataset.as_deref())?;
            print!("{csv}");
        }
        Command::Run {
            config,
            split,
            model,
            specs,
            budget_usd,
        } => {
            let mut ws = Workspace::open(&config.config)?;
            ws.cmd_run(
                split.name(),
                model.name(),
                specs.as_deref(),
                config.dataset.as_deref(),
                budget_usd,
            )?;
            println!("run complete: {}", ws.summary_path().display());
        }
        Command::Select {
            config,
            strategy,
            model,
            rpi_mode,
        } => {
            let strategy = match strategy {
                StrategyArg::Gs => Strategy::Gs,
                StrategyArg::Rpi => Strategy::Rpi,
                StrategyArg::GsStar => Strategy::GsStar,
            };
            let mut ws = Workspace::open(&config.config)?;
            let outcomes = ws.cmd_select(
                strategy,
                model.name(),
                rpi_mode.mode(),
                config.dataset.as_deref(),
            )?;
            for (dataset, outcome) in outcomes {
                println!(
                    "{dataset}: {} (validation nDCG {:.4})",
                    outcome.spec.name(),
                    outcome.val_ndcg
                );
            }
        }
        Command::Rpi {
            config,
            split,
            model,
            rpi_mode,
        } => {
            let mut ws = Workspace::open(&config.config)?;
            let md = ws.cmd_rpi(
                split.name(),
                model.name(),
                rpi_mode.mode(),
                config.dataset.as_deref(),
            )?;
            print!("{md}");
        }
        Command::Report { config } => {
            let mut ws = Workspace::open(&config.config)?;
            ws.cmd_report()?;
            println!("reports regenerated under {}", ws.out_dir.join("reports").display());
        }
        Command::Baseline {
            n_pos,
            n_cand,
            k,
            trials,
            seed,
        } => {
            let (mean, stderr) = random_baseline_stats(n_pos, n_cand, k, trials, seed);
            println!(
                "random baseline nDCG@{k} ({n_pos} of {n_cand} positive, {trials} trials): {mean:.4} +/- {:.4}",
                stderr
            );
        }
        Command::Cost { config } => {
            let mut ws = Workspace::open(&config.config)?;
            let md = ws.cmd_cost()?;
            print!("{md}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
