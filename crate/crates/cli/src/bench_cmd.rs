use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use cpfn::harness::{
    meta, read_labeled_csv, run_conditioning, run_counts, run_missingness, run_quality, run_ranks, run_timing, CondMode,
    ExperimentSpec, Imputer, MissingnessSpec, Report,
};
use cpfn::prior::{PriorConfig, Preset};
use cpfn::Result;

use crate::config::ConfigFile;
use crate::{load_model, Cli};

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long, default_value = "2d-easy")]
    pub preset: String,
    /// Number of datasets (repeats per size for `timing`).
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// VI restart counts, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,10")]
    pub vi_inits: Vec<usize>,
    /// Fix the number of points per dataset (large-n runs).
    #[arg(long)]
    pub n_points: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Random,
    Perturb,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Cluster-count accuracy against AIC, BIC, silhouette and VI.
    Counts(Common),
    /// ARI/AMI/purity/NLL of the network and VI, with win/tie/loss tables.
    Quality(Common),
    /// Wall time of inference and baseline fits at fixed sizes.
    Timing {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000")]
        sizes: Vec<usize>,
    },
    /// Adherence of the hard labels to a conditioned count.
    Conditioning {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = ModeArg::Perturb)]
        mode: ModeArg,
    },
    /// Mean ranks of the network, EM-GMM and K-means++ given the true count.
    Ranks(Common),
}

fn spec(cli: &Cli, file: &ConfigFile, suite: &str, c: &Common) -> Result<ExperimentSpec> {
    let mut s = ExperimentSpec::new(suite, Preset::parse(&c.preset)?, c.n, cli.seed);
    s.vi_inits = c.vi_inits.clone();
    s.n_points = c.n_points;
    let mut s = file.overlay("bench", s)?;
    s.exec = cli.exec.into();
    s.seed = cli.seed;
    Ok(s)
}

fn finish(cli: &Cli, report: &Report, spec_json: &impl serde::Serialize, extra: serde_json::Value) -> Result<()> {
    report.write_dir(&cli.out, &meta(spec_json, extra)?)?;
    println!("{}", serde_json::Value::Object(report.summary.clone()));
    Ok(())
}

fn ckpt_meta(cli: &Cli) -> serde_json::Value {
    serde_json::json!({ "checkpoint": cli.checkpoint.as_ref().map(|p| p.display().to_string()) })
}

pub fn run(cli: &Cli, file: &ConfigFile, cmd: &BenchCommand) -> Result<()> {
    match cmd {
        BenchCommand::Counts(c) => {
            let s = spec(cli, file, "counts", c)?;
            let net = load_model(cli)?;
            finish(cli, &run_counts(&s, Some(&net))?, &s, ckpt_meta(cli))
        }
        BenchCommand::Quality(c) => {
            let s = spec(cli, file, "quality", c)?;
            let net = load_model(cli)?;
            finish(cli, &run_quality(&s, Some(&net))?, &s, ckpt_meta(cli))
        }
        BenchCommand::Timing { common, sizes } => {
            let s = spec(cli, file, "timing", common)?;
            let net = load_model(cli)?;
            let mut extra = ckpt_meta(cli);
            extra["sizes"] = serde_json::json!(sizes);
            finish(cli, &run_timing(&s, Some(&net), sizes)?, &s, extra)
        }
        BenchCommand::Conditioning { common, mode } => {
            let s = spec(cli, file, "conditioning", common)?;
            let net = load_model(cli)?;
            let mode = match mode {
                ModeArg::Random => CondMode::Random,
                ModeArg::Perturb => CondMode::Perturb,
            };
            let mut extra = ckpt_meta(cli);
            extra["mode"] = serde_json::json!(mode.name());
            finish(cli, &run_conditioning(&s, Some(&net), mode)?, &s, extra)
        }
        BenchCommand::Ranks(c) => {
            let s = spec(cli, file, "ranks", c)?;
            let net = load_model(cli)?;
            finish(cli, &run_ranks(&s, Some(&net))?, &s, ckpt_meta(cli))
        }
    }
}

#[derive(Debug, Args)]
pub struct MissingnessArgs {
    /// Headered CSV with numeric features and an integer label column.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "label")]
    pub label: String,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7")]
    pub levels: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "mean,median")]
    pub imputers: Vec<String>,
    #[arg(long, default_value_t = 20)]
    pub n_sims: usize,
    #[arg(long, default_value_t = 10)]
    pub k_max: usize,
    /// Prior preset whose hyperparameters VI uses on the scaled data.
    #[arg(long, default_value = "2d-hard")]
    pub vi_prior: String,
    #[arg(long)]
    pub no_vi: bool,
}

/// Runs the sweep; the network joins only when `--checkpoint` is given.
pub fn run_missing(cli: &Cli, file: &ConfigFile, args: &MissingnessArgs) -> Result<()> {
    let data = read_labeled_csv(&args.data, &args.label)?;
    let mut s = MissingnessSpec::new(args.levels.clone(), args.n_sims, cli.seed);
    s.imputers = args.imputers.iter().map(|i| Imputer::parse(i)).collect::<Result<_>>()?;
    s.k_max = args.k_max;
    s.vi_prior = PriorConfig::preset(Preset::parse(&args.vi_prior)?);
    s.skip_vi = args.no_vi;
    let mut s = file.overlay("missingness", s)?;
    s.exec = cli.exec.into();
    s.seed = cli.seed;
    let net = match &cli.checkpoint {
        Some(_) => Some(load_model(cli)?),
        None => None,
    };
    let report = run_missingness(&data, &s, net.as_ref())?;
    let mut extra = ckpt_meta(cli);
    extra["data"] = serde_json::json!(args.data.display().to_string());
    extra["label"] = serde_json::json!(args.label);
    finish(cli, &report, &s, extra)
}
