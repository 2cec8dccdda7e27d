//! Fixed-budget training loops and their CSV records.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::time::Instant;

use natgalore_core::{Error as CoreError, Mode, Optimizer, OptimizerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tasks::{Params, Task};

pub const CSV_HEADER: &str = "step,train_loss,val_loss,perplexity,wall_ms,mode,seed";
pub const DEFAULT_EVAL_EVERY: u64 = 25;
/// Losses above this count as divergence.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Total optimizer steps, counted from step 0.
    pub budget: u64,
    pub eval_every: u64,
    pub batch_size: usize,
    /// Size of the fixed prefix of each split used for recorded losses.
    pub eval_examples: usize,
    /// When false every record reports `wall_ms = 0`, making CSVs
    /// byte-reproducible.
    pub timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            budget: 500,
            eval_every: DEFAULT_EVAL_EVERY,
            batch_size: 32,
            eval_examples: 512,
            timing: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidInput("budget must be at least 1".into()));
        }
        if self.eval_every == 0 || self.batch_size == 0 || self.eval_examples == 0 {
            return Err(Error::InvalidInput(
                "eval_every, batch_size and eval_examples must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub step: u64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub perplexity: f64,
    pub wall_ms: u64,
    pub mode: Mode,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub step: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    /// Index into `records` of the lowest validation loss.
    pub best: Option<usize>,
    pub diverged: Option<Divergence>,
    pub optimizer: Optimizer,
}

impl TrainOutcome {
    pub fn final_record(&self) -> Option<&TrainRecord> {
        self.records.last()
    }

    pub fn best_record(&self) -> Option<&TrainRecord> {
        self.best.map(|i| &self.records[i])
    }
}

/// Optimizer holding the task's initial parameters.
pub fn new_optimizer(task: &Task, cfg: &OptimizerConfig) -> Result<Optimizer> {
    let mut opt = Optimizer::new(cfg.clone())?;
    for (name, theta) in &task.params {
        opt.add_param(name.clone(), theta.clone())?;
    }
    Ok(opt)
}

pub fn current_params(opt: &Optimizer) -> Params {
    opt.slots()
        .iter()
        .map(|s| (s.name().to_string(), s.theta().clone()))
        .collect()
}

/// Minibatch indices for `step`. They depend only on `(seed, step)`, so a
/// run resumed from a checkpoint sees the same batches.
pub fn batch_indices(seed: u64, step: u64, examples: usize, batch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    (0..batch).map(|_| rng.random_range(0..examples)).collect()
}

pub fn train(task: &Task, cfg: &OptimizerConfig, tc: &TrainConfig) -> Result<TrainOutcome> {
    train_from(task, new_optimizer(task, cfg)?, tc)
}

/// Continues `opt` from its current step up to `tc.budget` steps.
pub fn train_from(task: &Task, mut opt: Optimizer, tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    if opt.step_index() > tc.budget {
        return Err(Error::InvalidInput(format!(
            "optimizer is at step {} past the budget of {}",
            opt.step_index(),
            tc.budget
        )));
    }
    let mode = opt.config().mode;
    let clock = Instant::now();
    let train_eval = task.train.head(tc.eval_examples);
    let val_eval = task.val.head(tc.eval_examples);
    let mut records = Vec::new();

    let record = |opt: &Optimizer, records: &mut Vec<TrainRecord>| -> Result<Option<Divergence>> {
        let params = current_params(opt);
        let train_loss = task.loss(&params, &train_eval)?;
        let val_loss = task.loss(&params, &val_eval)?;
        let wall_ms = if tc.timing { clock.elapsed().as_millis() as u64 } else { 0 };
        records.push(TrainRecord {
            step: opt.step_index(),
            train_loss,
            val_loss,
            perplexity: val_loss.exp(),
            wall_ms,
            mode,
            seed: task.seed,
        });
        let step = opt.step_index();
        Ok(check_loss(step, train_loss).or_else(|| check_loss(step, val_loss)))
    };

    let mut diverged = record(&opt, &mut records)?;
    while diverged.is_none() && opt.step_index() < tc.budget {
        let step = opt.step_index();
        let idx = batch_indices(task.seed, step, task.train.len(), tc.batch_size);
        let batch = task.train.gather(&idx);
        let (loss, grads) = task.loss_and_grads(&current_params(&opt), &batch)?;
        if let Some(d) = check_loss(step, loss) {
            diverged = Some(d);
            break;
        }
        match opt.step(&grads) {
            Ok(_) => {}
            Err(
                e @ (CoreError::NonFiniteGradient
                | CoreError::NonFiniteSlot { .. }
                | CoreError::NumericalFailure { .. }),
            ) => {
                diverged = Some(Divergence { step, reason: e.to_string() });
                break;
            }
            Err(e) => return Err(e.into()),
        }
        let now = opt.step_index();
        if now.is_multiple_of(tc.eval_every) || now == tc.budget {
            diverged = record(&opt, &mut records)?;
        }
    }

    let best = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.val_loss.is_finite())
        .min_by(|a, b| a.1.val_loss.total_cmp(&b.1.val_loss))
        .map(|(i, _)| i);
    Ok(TrainOutcome { records, best, diverged, optimizer: opt })
}

fn check_loss(step: u64, loss: f64) -> Option<Divergence> {
    if loss.is_nan() || loss > DIVERGENCE_LOSS {
        Some(Divergence { step, reason: format!("loss {loss} at step {step}") })
    } else {
        None
    }
}

pub fn records_to_csv(records: &[TrainRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step, r.train_loss, r.val_loss, r.perplexity, r.wall_ms, r.mode, r.seed
        );
    }
    out
}

pub fn write_csv(records: &[TrainRecord], mut w: impl Write) -> Result<()> {
    w.write_all(records_to_csv(records).as_bytes())?;
    Ok(())
}

pub fn read_csv(r: impl BufRead) -> Result<Vec<TrainRecord>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != CSV_HEADER {
        return Err(Error::InvalidInput(format!("unexpected csv header `{header}`")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::InvalidInput(format!("csv line {}: bad {what}", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        out.push(TrainRecord {
            step: f[0].parse().map_err(|_| bad("step"))?,
            train_loss: f[1].parse().map_err(|_| bad("train_loss"))?,
            val_loss: f[2].parse().map_err(|_| bad("val_loss"))?,
            perplexity: f[3].parse().map_err(|_| bad("perplexity"))?,
            wall_ms: f[4].parse().map_err(|_| bad("wall_ms"))?,
            mode: f[5].parse().map_err(|_| bad("mode"))?,
            seed: f[6].parse().map_err(|_| bad("seed"))?,
        });
    }
    Ok(out)
}
