use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cpfn::model::Network;
use cpfn::par::Exec;
use cpfn::train::load_checkpoint;
use cpfn::{Error, Result};

mod bench_cmd;
mod config;
mod generate_cmd;
mod predict_cmd;
mod train_cmd;

use config::ConfigFile;

/// Amortized Bayesian clustering with a prior-fitted transformer.
#[derive(Debug, Parser)]
#[command(name = "cpfn", version)]
pub struct Cli {
    /// Base seed for every random stream of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Model checkpoint to load (or write, for `train`).
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    /// TOML file overriding preset values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Run data-parallel work sequentially or on the thread pool.
    #[arg(long, global = true, value_enum, default_value_t = ExecArg::default())]
    pub exec: ExecArg,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum ExecArg {
    Sequential,
    Parallel,
}

impl Default for ExecArg {
    fn default() -> Self {
        match Exec::default() {
            Exec::Sequential => ExecArg::Sequential,
            Exec::Parallel => ExecArg::Parallel,
        }
    }
}

impl From<ExecArg> for Exec {
    fn from(e: ExecArg) -> Self {
        match e {
            ExecArg::Sequential => Exec::Sequential,
            ExecArg::Parallel => Exec::Parallel,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw datasets from a prior preset.
    Generate(generate_cmd::GenerateArgs),
    /// Train a model on a stream of prior datasets.
    Train(train_cmd::TrainArgs),
    /// Count posterior and responsibilities for a CSV dataset.
    Predict(predict_cmd::PredictArgs),
    /// Benchmark suites on held-out prior datasets.
    #[command(subcommand)]
    Bench(bench_cmd::BenchCommand),
    /// Clustering quality under increasing random missingness.
    Missingness(bench_cmd::MissingnessArgs),
}

/// The network stored in `--checkpoint`.
pub fn load_model(cli: &Cli) -> Result<Network<f32>> {
    let path = cli
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Argument("this command needs a trained model: pass --checkpoint <file>".into()))?;
    load_checkpoint(path)?.network()
}

fn run(cli: Cli) -> Result<()> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Generate(args) => generate_cmd::run(&cli, &cfg, args),
        Command::Train(args) => train_cmd::run(&cli, &cfg, args),
        Command::Predict(args) => predict_cmd::run(&cli, args),
        Command::Bench(cmd) => bench_cmd::run(&cli, &cfg, cmd),
        Command::Missingness(args) => bench_cmd::run_missing(&cli, &cfg, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}
