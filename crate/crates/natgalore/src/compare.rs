//! Multi-mode, multi-seed benchmark with per-mode learning-rate tuning.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use natgalore_core::Mode;
use rayon::prelude::*;

use crate::config::RunSpec;
use crate::error::Result;
use crate::tasks::{make_task_with_corpus, Task};
use crate::train::{records_to_csv, train, Divergence, TrainRecord};

pub const SUMMARY_HEADER: &str =
    "budget,mode,lr,runs,diverged,best_val_mean,best_val_std,final_val_mean,final_val_std";
pub const WINRATE_HEADER: &str = "budget,wins,seeds,rate";

#[derive(Debug, Clone)]
pub struct RunResult {
    pub mode: Mode,
    pub budget: u64,
    pub lr: f64,
    pub seed: u64,
    pub records: Vec<TrainRecord>,
    pub diverged: Option<Divergence>,
}

impl RunResult {
    /// Final validation loss, or `+∞` for a diverged run.
    pub fn final_val(&self) -> f64 {
        match (&self.diverged, self.records.last()) {
            (None, Some(r)) => r.val_loss,
            _ => f64::INFINITY,
        }
    }

    pub fn best_val(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.val_loss)
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn file_name(&self, task: &str) -> String {
        format!("{task}_{}_b{}_lr{}_s{}.csv", self.mode, self.budget, self.lr, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSummary {
    pub budget: u64,
    pub mode: Mode,
    /// Learning rate with the lowest mean final validation loss.
    pub lr: f64,
    pub runs: usize,
    pub diverged: usize,
    pub best_val_mean: f64,
    pub best_val_std: f64,
    pub final_val_mean: f64,
    pub final_val_std: f64,
}

/// Seeds on which natural-galore ended at or below galore, each at its
/// tuned learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct WinRate {
    pub budget: u64,
    pub wins: usize,
    pub seeds: usize,
}

impl WinRate {
    pub fn rate(&self) -> f64 {
        self.wins as f64 / self.seeds as f64
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<RunResult>,
    pub summary: Vec<ModeSummary>,
    pub win_rates: Vec<WinRate>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn load_tasks(spec: &RunSpec) -> Result<BTreeMap<u64, Task>> {
    let corpus = spec.corpus.as_ref().map(fs::read).transpose()?;
    spec.seeds
        .iter()
        .map(|&s| Ok((s, make_task_with_corpus(spec.task, s, corpus.as_deref())?)))
        .collect()
}

pub fn run(spec: &RunSpec) -> Result<Comparison> {
    let tasks = load_tasks(spec)?;
    let mut jobs = Vec::new();
    for &budget in &spec.budgets {
        for &mode in &spec.modes {
            for &lr in &spec.lrs {
                for &seed in &spec.seeds {
                    jobs.push((mode, budget, lr, seed));
                }
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(mode, budget, lr, seed)| {
            let out = train(&tasks[&seed], &spec.optimizer_for(mode, lr), &spec.train_for(budget))?;
            Ok(RunResult { mode, budget, lr, seed, records: out.records, diverged: out.diverged })
        })
        .collect::<Result<Vec<_>>>()?;
    let (summary, win_rates) = summarize(spec, &runs);
    Ok(Comparison { runs, summary, win_rates })
}

fn summarize(spec: &RunSpec, runs: &[RunResult]) -> (Vec<ModeSummary>, Vec<WinRate>) {
    let mut summary = Vec::new();
    let mut tuned: BTreeMap<(u64, Mode), f64> = BTreeMap::new();
    for &budget in &spec.budgets {
        for &mode in &spec.modes {
            let group = |lr: f64| {
                runs.iter()
                    .filter(move |r| r.budget == budget && r.mode == mode && r.lr == lr)
            };
            let score = |lr: f64| {
                let v: Vec<f64> = group(lr).map(RunResult::final_val).collect();
                v.iter().sum::<f64>() / v.len() as f64
            };
            let lr = spec
                .lrs
                .iter()
                .copied()
                .min_by(|a, b| score(*a).total_cmp(&score(*b)))
                .expect("at least one learning rate");
            tuned.insert((budget, mode), lr);
            let chosen: Vec<&RunResult> = group(lr).collect();
            let best: Vec<f64> = chosen.iter().map(|r| r.best_val()).collect();
            let fin: Vec<f64> = chosen.iter().map(|r| r.final_val()).collect();
            let (best_val_mean, best_val_std) = mean_std(&best);
            let (final_val_mean, final_val_std) = mean_std(&fin);
            summary.push(ModeSummary {
                budget,
                mode,
                lr,
                runs: chosen.len(),
                diverged: chosen.iter().filter(|r| r.diverged.is_some()).count(),
                best_val_mean,
                best_val_std,
                final_val_mean,
                final_val_std,
            });
        }
    }

    let mut win_rates = Vec::new();
    if spec.modes.contains(&Mode::Galore) && spec.modes.contains(&Mode::NaturalGalore) {
        for &budget in &spec.budgets {
            let pick = |mode: Mode, seed: u64| {
                let lr = tuned[&(budget, mode)];
                runs.iter()
                    .find(|r| r.budget == budget && r.mode == mode && r.lr == lr && r.seed == seed)
                    .map(RunResult::final_val)
            };
            let mut w = WinRate { budget, wins: 0, seeds: 0 };
            for &seed in &spec.seeds {
                if let (Some(n), Some(g)) = (pick(Mode::NaturalGalore, seed), pick(Mode::Galore, seed)) {
                    w.seeds += 1;
                    w.wins += usize::from(n <= g);
                }
            }
            win_rates.push(w);
        }
    }
    (summary, win_rates)
}

pub fn summary_csv(c: &Comparison) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in &c.summary {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.budget,
            s.mode,
            s.lr,
            s.runs,
            s.diverged,
            s.best_val_mean,
            s.best_val_std,
            s.final_val_mean,
            s.final_val_std
        );
    }
    out
}

pub fn winrate_csv(c: &Comparison) -> String {
    let mut out = format!("{WINRATE_HEADER}\n");
    for w in &c.win_rates {
        let _ = writeln!(out, "{},{},{},{}", w.budget, w.wins, w.seeds, w.rate());
    }
    out
}

/// Human-readable table of the summary and win rates.
pub fn render(c: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>7}  {:<15} {:>8}  {:>5}  {:>24}  {:>24}",
        "budget", "mode", "lr", "div", "best val (mean ± sd)", "final val (mean ± sd)"
    );
    for s in &c.summary {
        let _ = writeln!(
            out,
            "{:>7}  {:<15} {:>8}  {:>2}/{:<2}  {:>11.5} ± {:<10.5}  {:>11.5} ± {:<10.5}",
            s.budget,
            s.mode.as_str(),
            s.lr,
            s.diverged,
            s.runs,
            s.best_val_mean,
            s.best_val_std,
            s.final_val_mean,
            s.final_val_std
        );
    }
    for w in &c.win_rates {
        let _ = writeln!(
            out,
            "budget {}: natural-galore <= galore on {}/{} seeds",
            w.budget, w.wins, w.seeds
        );
    }
    out
}

/// Writes one CSV per run under `dir/runs` plus `summary.csv` and
/// `winrate.csv`.
pub fn write(c: &Comparison, task: &str, dir: &Path) -> Result<()> {
    let runs = dir.join("runs");
    fs::create_dir_all(&runs)?;
    for r in &c.runs {
        fs::write(runs.join(r.file_name(task)), records_to_csv(&r.records))?;
    }
    fs::write(dir.join("summary.csv"), summary_csv(c))?;
    if !c.win_rates.is_empty() {
        fs::write(dir.join("winrate.csv"), winrate_csv(c))?;
    }
    Ok(())
}
