use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{save_checkpoint, ModelCheckpoint, RunningStats, StreamState};
use super::optim::{clip_grad_norm, AdamConfig, AdamState};
use super::schedule::lr_at;
use crate::error::{Error, Result};
use crate::model::{loss, EncodedInput, ModelConfig, Network, Parameters};
use crate::par::Exec;
use crate::prior::{dataset_rng, sample_dataset, write_dataset, Preset, PriorConfig, SyntheticDataset};

/// Datasets of a step are split into this many gradient chunks. Chunks are
/// reduced in index order, so the summed gradient does not depend on how
/// many threads evaluated them.
const GRAD_CHUNKS: usize = 8;

/// Smoothing of the running loss averages stored in checkpoints.
const EMA_DECAY: f64 = 0.98;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub datasets_per_step: usize,
    /// Probability of conditioning a training dataset on its true count.
    pub p_condition: f64,
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub seed: u64,
    pub prior: PriorConfig,
    /// Validation cadence in steps; 0 evaluates only at the end.
    pub eval_every: u64,
    pub eval_datasets: usize,
    /// Seed of the held-out validation stream, disjoint from `seed`'s.
    pub eval_seed: u64,
    pub adam: AdamConfig,
    /// Global gradient-norm bound, `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub desk_scale: bool,
}

impl TrainConfig {
    /// Full-scale schedule: 600k steps of 100 datasets for 2-D priors,
    /// 900k for the mixed-dimension ones.
    pub fn full(preset: Preset) -> Self {
        let steps = match preset {
            Preset::Easy2d | Preset::Hard2d => 600_000,
            _ => 900_000,
        };
        TrainConfig {
            steps,
            datasets_per_step: 100,
            p_condition: 0.5,
            base_lr: 1e-3,
            warmup_steps: steps / 50,
            seed: 0,
            prior: PriorConfig::preset(preset),
            eval_every: 5_000,
            eval_datasets: 500,
            eval_seed: 0x00ff_1ce5,
            adam: AdamConfig::default(),
            clip_norm: Some(1.0),
            desk_scale: false,
        }
    }

    /// CPU-sized schedule: 30k steps of 25 datasets.
    pub fn desk(preset: Preset) -> Self {
        let steps = 30_000;
        TrainConfig {
            steps,
            datasets_per_step: 25,
            warmup_steps: steps / 50,
            eval_every: 1_000,
            eval_datasets: 200,
            desk_scale: true,
            ..TrainConfig::full(preset)
        }
    }

    /// Model architecture matching this schedule's scale and prior width.
    pub fn model_config(&self) -> ModelConfig {
        let d = self.prior.model_width();
        let mut m = if self.desk_scale { ModelConfig::desk(d) } else { ModelConfig::full(d) };
        m.k_max = self.prior.k_max;
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.steps == 0 || self.datasets_per_step == 0 {
            return Err(Error::Config("steps and datasets_per_step must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_condition) {
            return Err(Error::Config(format!("p_condition {} outside [0, 1]", self.p_condition)));
        }
        if self.warmup_steps >= self.steps {
            return Err(Error::Config(format!(
                "warmup_steps {} must be below steps {}",
                self.warmup_steps, self.steps
            )));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config("base_lr must be positive".into()));
        }
        if self.eval_seed == self.seed {
            return Err(Error::Config("eval_seed must differ from the training seed".into()));
        }
        if matches!(self.clip_norm, Some(c) if c <= 0.0 || !c.is_finite()) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub fn lr(&self, step: u64) -> f64 {
        lr_at(step, self.base_lr, self.warmup_steps, self.steps)
    }
}

/// One prior draw together with its conditioning decision.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub index: u64,
    pub data: SyntheticDataset,
    pub k_cond: usize,
}

/// Draws the `index`-th dataset of the stream. The conditioning coin uses
/// the same generator, after the dataset.
pub fn draw_sample(cfg: &TrainConfig, seed: u64, index: u64) -> Result<TrainSample> {
    let mut rng = dataset_rng(seed, index);
    let data = sample_dataset(&cfg.prior, &mut rng)?;
    let k_cond = if rng.random_bool(cfg.p_condition) { data.k_true } else { 0 };
    Ok(TrainSample { index, data, k_cond })
}

/// Fixed held-out datasets, all evaluated unconditioned.
pub fn validation_set(cfg: &TrainConfig) -> Result<Vec<SyntheticDataset>> {
    (0..cfg.eval_datasets as u64)
        .map(|i| sample_dataset(&cfg.prior, &mut dataset_rng(cfg.eval_seed, i)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validation {
    /// Fraction of datasets whose count posterior mode equals `k_true`.
    pub count_accuracy: f64,
    /// Mean per-point assignment negative log-likelihood.
    pub assign_nll: f64,
    /// Mean count negative log-likelihood.
    pub count_nll: f64,
}

pub fn validate(net: &Network<f32>, set: &[SyntheticDataset], exec: Exec) -> Result<Validation> {
    if set.is_empty() {
        return Err(Error::Argument("empty validation set".into()));
    }
    let per: Vec<Result<(bool, f64, f64)>> = exec.map_slice(set, |ds| {
        let input = net.encode(&ds.x, &ds.mask)?;
        let out = net.forward(&input, 0)?;
        let parts = loss(&out, &ds.z, ds.k_true)?;
        let mode = argmax(&out.count_logits) + 1;
        Ok((mode == ds.k_true, parts.assign, parts.count))
    });
    let mut hits = 0usize;
    let (mut a, mut c) = (0.0, 0.0);
    for r in per {
        let (hit, pa, pc) = r?;
        hits += hit as usize;
        a += pa;
        c += pc;
    }
    let n = set.len() as f64;
    Ok(Validation { count_accuracy: hits as f64 / n, assign_nll: a / n, count_nll: c / n })
}

fn argmax(v: &[f32]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f32::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

/// Output locations and cadence of a training run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub exec: Exec,
    /// Append-only CSV log.
    pub log: Option<PathBuf>,
    /// Checkpoint written every `checkpoint_every` steps and at the end.
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: u64,
    /// Stop after this step instead of `steps` (the schedule is unchanged).
    pub stop_at: Option<u64>,
    /// Directory receiving the offending dataset when a loss turns non-finite.
    pub dump_dir: Option<PathBuf>,
    /// Print progress lines to stderr.
    pub verbose: bool,
}

/// Mean losses of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub loss_assign: f64,
    pub loss_count: f64,
    pub grad_norm: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub net: Network<f32>,
    pub adam: AdamState,
    /// Completed optimizer steps.
    pub step: u64,
    pub stream: StreamState,
    pub stats: RunningStats,
    validation: Option<Vec<SyntheticDataset>>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, model: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        check_compatible(&cfg, &model)?;
        let params = initial_parameters(&cfg, &model)?;
        let net = Network::new(model, params)?;
        let adam = AdamState::new(net.layout.total);
        let stream = StreamState { seed: cfg.seed, next_index: 0 };
        Ok(Trainer { cfg, net, adam, step: 0, stream, stats: RunningStats::default(), validation: None })
    }

    pub fn resume(ckpt: ModelCheckpoint) -> Result<Self> {
        ckpt.train.validate()?;
        check_compatible(&ckpt.train, &ckpt.model)?;
        let net = Network::new(ckpt.model, ckpt.params)?;
        if ckpt.adam.m.len() != net.layout.total || ckpt.adam.v.len() != net.layout.total {
            return Err(Error::Config("optimizer state does not match the parameter count".into()));
        }
        Ok(Trainer {
            cfg: ckpt.train,
            net,
            adam: ckpt.adam,
            step: ckpt.step,
            stream: ckpt.stream,
            stats: ckpt.stats,
            validation: None,
        })
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint {
            model: self.net.cfg.clone(),
            train: self.cfg.clone(),
            step: self.step,
            params: self.net.params.clone(),
            adam: self.adam.clone(),
            stream: self.stream,
            stats: self.stats,
        }
    }

    pub fn validation(&mut self, exec: Exec) -> Result<Validation> {
        if self.validation.is_none() {
            self.validation = Some(validation_set(&self.cfg)?);
        }
        let v = validate(&self.net, self.validation.as_deref().unwrap(), exec)?;
        self.stats.last_val_acc = v.count_accuracy;
        self.stats.last_val_nll = v.assign_nll;
        Ok(v)
    }

    /// Loss and gradient of one batch at the current parameters.
    ///
    /// Returns per-dataset losses and the gradient of the batch mean.
    pub fn batch_gradient(&self, batch: &[TrainSample], exec: Exec) -> Result<(Vec<(f64, f64)>, Vec<f32>)> {
        let net = &self.net;
        let weight = 1.0 / batch.len() as f32;
        let chunk = batch.len().div_ceil(GRAD_CHUNKS);
        let pieces = exec.map(batch.len().div_ceil(chunk), |c| -> Result<_> {
            let mut grads = vec![0.0f32; net.layout.total];
            let mut losses = Vec::with_capacity(chunk);
            for s in &batch[c * chunk..((c + 1) * chunk).min(batch.len())] {
                let input: EncodedInput<f32> = net.encode(&s.data.x, &s.data.mask)?;
                let parts = net.loss_and_grad(&input, s.k_cond, &s.data.z, s.data.k_true, weight, &mut grads)?;
                losses.push((parts.assign, parts.count));
            }
            Ok((losses, grads))
        });
        let mut total = vec![0.0f32; net.layout.total];
        let mut losses = Vec::with_capacity(batch.len());
        for p in pieces {
            let (l, g) = p?;
            losses.extend(l);
            total.iter_mut().zip(&g).for_each(|(t, v)| *t += v);
        }
        Ok((losses, total))
    }

    /// One optimizer step on a batch drawn from the stream.
    pub fn apply_batch(&mut self, batch: &[TrainSample], exec: Exec, dump_dir: Option<&Path>) -> Result<StepReport> {
        let step = self.step + 1;
        let (losses, mut grads) = self.batch_gradient(batch, exec)?;
        for (s, &(a, c)) in batch.iter().zip(&losses) {
            if !(a.is_finite() && c.is_finite()) {
                return Err(self.diverged(step, s, format!("loss assign={a} count={c}"), dump_dir));
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(self.diverged(step, &batch[0], "non-finite gradient".into(), dump_dir));
        }
        let grad_norm = match self.cfg.clip_norm {
            Some(c) => clip_grad_norm(&mut grads, c),
            None => grads.iter().map(|&g| (g as f64).powi(2)).sum::<f64>().sqrt(),
        };
        let lr = self.cfg.lr(step);
        self.adam.step(&self.cfg.adam, &mut self.net.params.data, &grads, lr, step);
        if !self.net.params.is_finite() {
            return Err(self.diverged(step, &batch[0], "non-finite parameters after update".into(), dump_dir));
        }
        let n = losses.len() as f64;
        let loss_assign = losses.iter().map(|l| l.0).sum::<f64>() / n;
        let loss_count = losses.iter().map(|l| l.1).sum::<f64>() / n;
        if self.step == 0 {
            self.stats.ema_assign = loss_assign;
            self.stats.ema_count = loss_count;
        } else {
            self.stats.ema_assign = EMA_DECAY * self.stats.ema_assign + (1.0 - EMA_DECAY) * loss_assign;
            self.stats.ema_count = EMA_DECAY * self.stats.ema_count + (1.0 - EMA_DECAY) * loss_count;
        }
        self.stats.datasets_seen += batch.len() as u64;
        self.step = step;
        Ok(StepReport { step, lr, loss_assign, loss_count, grad_norm })
    }

    fn diverged(&self, step: u64, s: &TrainSample, reason: String, dump_dir: Option<&Path>) -> Error {
        let mut reason = format!("{reason}; dataset seed {} stream {}", self.stream.seed, s.index);
        if let Some(dir) = dump_dir {
            let path = dir.join(format!("diverged-step{step}-index{}.csv", s.index));
            let written = fs::File::create(&path).and_then(|mut f| write_dataset(&s.data, &mut f));
            match written {
                Ok(()) => reason.push_str(&format!("; dataset written to {}", path.display())),
                Err(e) => reason.push_str(&format!("; could not write dump: {e}")),
            }
        }
        Error::Diverged { step, stream_index: s.index, reason }
    }

    /// Trains until `opts.stop_at` (or the configured step count).
    ///
    /// Batches are sampled on a producer thread one or two steps ahead of
    /// the optimizer; the stream is a pure function of the seed, so the
    /// result does not depend on that overlap.
    pub fn run(&mut self, opts: &RunOptions) -> Result<()> {
        let end = opts.stop_at.unwrap_or(self.cfg.steps).min(self.cfg.steps);
        if self.step >= end {
            return Ok(());
        }
        let mut log = match &opts.log {
            Some(p) => Some(open_log(p)?),
            None => None,
        };
        let b = self.cfg.datasets_per_step as u64;
        let first_index = self.stream.next_index;
        let n_steps = end - self.step;
        let cfg = self.cfg.clone();
        let seed = self.stream.seed;
        let started = Instant::now();
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = mpsc::sync_channel::<Result<Vec<TrainSample>>>(2);
            scope.spawn(move || {
                for s in 0..n_steps {
                    let base = first_index + s * b;
                    let batch = (base..base + b).map(|i| draw_sample(&cfg, seed, i)).collect();
                    if tx.send(batch).is_err() {
                        return;
                    }
                }
            });
            for batch in rx.iter().take(n_steps as usize) {
                let batch = batch?;
                debug_assert_eq!(batch[0].index, self.stream.next_index);
                let report = self.apply_batch(&batch, opts.exec, opts.dump_dir.as_deref())?;
                self.stream.next_index += b;
                let due = self.cfg.eval_every > 0 && report.step % self.cfg.eval_every == 0;
                let val = if due || report.step == self.cfg.steps {
                    Some(self.validation(opts.exec)?)
                } else {
                    None
                };
                if let (Some(w), Some(path)) = (log.as_mut(), opts.log.as_ref()) {
                    let acc = val.map(|v| v.count_accuracy.to_string()).unwrap_or_default();
                    writeln!(
                        w,
                        "{},{},{},{},{}",
                        report.step, report.lr, report.loss_assign, report.loss_count, acc
                    )
                    .and_then(|_| w.flush())
                    .map_err(|e| Error::io(path, e))?;
                }
                if opts.verbose && (val.is_some() || report.step % 50 == 0) {
                    let rate = (report.step - (end - n_steps)) as f64 / started.elapsed().as_secs_f64();
                    eprintln!(
                        "step {:>7} lr {:.2e} assign {:.4} count {:.4} |g| {:.3} {:.2} step/s{}",
                        report.step,
                        report.lr,
                        self.stats.ema_assign,
                        self.stats.ema_count,
                        report.grad_norm,
                        rate,
                        val.map(|v| format!(" val_acc {:.3} val_nll {:.4}", v.count_accuracy, v.assign_nll))
                            .unwrap_or_default()
                    );
                }
                if let Some(path) = &opts.checkpoint {
                    if report.step == end || (opts.checkpoint_every > 0 && report.step % opts.checkpoint_every == 0) {
                        save_checkpoint(&self.checkpoint(), path)?;
                    }
                }
            }
            Ok(())
        })?;
        if self.step < end {
            return Err(Error::Numerical("dataset producer stopped early".into()));
        }
        Ok(())
    }
}

fn check_compatible(cfg: &TrainConfig, model: &ModelConfig) -> Result<()> {
    model.validate()?;
    if model.d_in != cfg.prior.model_width() {
        return Err(Error::Config(format!(
            "model input width {} differs from the prior's {}",
            model.d_in,
            cfg.prior.model_width()
        )));
    }
    if model.k_max != cfg.prior.k_max {
        return Err(Error::Config(format!(
            "model k_max {} differs from the prior's {}",
            model.k_max, cfg.prior.k_max
        )));
    }
    Ok(())
}

fn open_log(path: &Path) -> Result<fs::File> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    if fresh {
        writeln!(f, "step,lr,loss_assign,loss_count,val_acc").map_err(|e| Error::io(path, e))?;
    }
    Ok(f)
}

/// Trains from scratch with default run options.
pub fn train(cfg: TrainConfig, model: ModelConfig) -> Result<ModelCheckpoint> {
    let mut t = Trainer::new(cfg, model)?;
    t.run(&RunOptions::default())?;
    Ok(t.checkpoint())
}

/// Initial parameters a run with this configuration starts from.
pub fn initial_parameters(cfg: &TrainConfig, model: &ModelConfig) -> Result<Parameters<f32>> {
    Parameters::init(model, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)
}
