use std::fs;

use clap::{Args, ValueEnum};
use cpfn::prior::Preset;
use cpfn::train::{load_checkpoint, RunOptions, TrainConfig, Trainer};
use cpfn::{Error, Result};

use crate::config::ConfigFile;
use crate::Cli;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Prior preset, e.g. 2d-easy or 5d-hard-miss.
    #[arg(long, default_value = "2d-easy")]
    pub preset: String,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    /// Override the number of optimizer steps.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Stop after this step; the schedule still spans the configured steps.
    #[arg(long)]
    pub stop_at: Option<u64>,
    /// Continue from the `--checkpoint` file instead of starting fresh.
    #[arg(long)]
    pub resume: bool,
    /// Checkpoint cadence in steps.
    #[arg(long, default_value_t = 500)]
    pub checkpoint_every: u64,
    #[arg(long)]
    pub quiet: bool,
}

pub fn run(cli: &Cli, file: &ConfigFile, args: &TrainArgs) -> Result<()> {
    fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let ckpt_path = cli.checkpoint.clone().unwrap_or_else(|| cli.out.join("model.cpfn"));
    let mut trainer = if args.resume {
        Trainer::resume(load_checkpoint(&ckpt_path)?)?
    } else {
        let preset = Preset::parse(&args.preset)?;
        let mut cfg = match args.scale {
            Scale::Desk => TrainConfig::desk(preset),
            Scale::Full => TrainConfig::full(preset),
        };
        cfg.seed = cli.seed;
        if let Some(steps) = args.steps {
            cfg.steps = steps;
            cfg.warmup_steps = steps / 50;
        }
        let cfg = file.overlay("train", cfg)?;
        let model = file.overlay("model", cfg.model_config())?;
        Trainer::new(cfg, model)?
    };
    let opts = RunOptions {
        exec: cli.exec.into(),
        log: Some(cli.out.join("train_log.csv")),
        checkpoint: Some(ckpt_path),
        checkpoint_every: args.checkpoint_every,
        stop_at: args.stop_at,
        dump_dir: Some(cli.out.clone()),
        verbose: !args.quiet,
    };
    trainer.run(&opts)?;
    let summary = serde_json::json!({
        "step": trainer.step,
        "datasets_seen": trainer.stats.datasets_seen,
        "ema_loss_assign": trainer.stats.ema_assign,
        "ema_loss_count": trainer.stats.ema_count,
        "val_count_accuracy": trainer.stats.last_val_acc,
        "val_assign_nll": trainer.stats.last_val_nll,
    });
    println!("{summary}");
    Ok(())
}
