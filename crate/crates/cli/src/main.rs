//! `relval`: synthetic bond markets, similarity models, relative-value
//! rankings and ranking back-tests from the command line.

mod commands;
mod provenance;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "relval",
    version,
    about = "Supervised bond similarity and relative-value back-tests"
)]
struct Cli {
    /// Cap on worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic universe, yield paths and trade orders.
    ///
    /// Writes dataset.csv, schema.json, paths.csv, orders.csv and generator.json.
    Datagen {
        /// Generator config (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the multi-output boosting model.
    ///
    /// Winsorizes targets, splits, weights by recency, encodes and boosts.
    /// Writes the model and a per-fold metrics file next to it.
    Train {
        /// Dataset directory or CSV file.
        #[arg(long)]
        data: PathBuf,
        /// Pipeline config (JSON); a tuned best_config.json works as is.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Metrics output; defaults to the model path with a .metrics.json extension.
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// Overrides the split and training seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the single-target reference models and compare them.
    ///
    /// Writes one JSON file per model plus comparison.json and comparison.csv.
    Baselines {
        #[arg(long)]
        data: PathBuf,
        /// Target name, e.g. oas or yield.
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: PathBuf,
        /// Baselines config (JSON) with pipeline, tree, forest and elastic_net sections.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Boosting model to include in the comparison.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Random search over boosting hyper-parameters.
    ///
    /// Writes trials.json and best_config.json (a pipeline config for `train`).
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Tuning config (JSON) with pipeline and space sections.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write each record's k most similar records.
    Proximity {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-record feature attributions and global importance.
    ///
    /// Writes shap.csv and importance.json.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank every generic group of a quote snapshot.
    Rank {
        #[arg(long)]
        model: PathBuf,
        /// Dataset directory or CSV holding the quotes.
        #[arg(long)]
        snapshot: PathBuf,
        /// yield, dxs_cohort or similarity_cohort.
        #[arg(long)]
        method: String,
        /// Cohort size for the cohort methods.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Value of the date column.
        #[arg(long, default_value = "snapshot")]
        date: String,
        #[arg(long, default_value = "rankings.csv")]
        out: PathBuf,
    },
    /// Generate a market, fit the similarity model and back-test all methods.
    ///
    /// Writes report.json and distributions.csv.
    Backtest {
        /// Back-test config (JSON) with market, similarity and backtest sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides every seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Datagen { config, out, seed } => commands::datagen(config.as_deref(), &out, seed),
        Command::Train {
            data,
            config,
            model,
            metrics,
            seed,
        } => commands::train(&data, config.as_deref(), &model, metrics.as_deref(), seed),
        Command::Baselines {
            data,
            target,
            out,
            config,
            model,
            seed,
        } => commands::baselines(&data, &target, &out, config.as_deref(), model.as_deref(), seed),
        Command::Tune {
            data,
            trials,
            seed,
            out,
            config,
        } => commands::tune(&data, trials, seed, &out, config.as_deref()),
        Command::Proximity { model, data, k, out } => commands::proximity(&model, &data, k, &out),
        Command::Explain { model, data, out } => commands::explain(&model, &data, &out),
        Command::Rank {
            model,
            snapshot,
            method,
            k,
            date,
            out,
        } => commands::rank(&model, &snapshot, &method, k, &date, &out),
        Command::Backtest { config, out, seed } => commands::backtest(config.as_deref(), &out, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
