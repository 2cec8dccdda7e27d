use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use natgalore::config::{self, RunSpec, Settings};
use natgalore::tasks::make_task_with_corpus;
use natgalore::train::{records_to_csv, train, train_from};
use natgalore::verify::{self, Fault};
use natgalore::{checkpoint, compare, memreport, Error};
use natgalore_core::Mode;

#[derive(Parser)]
#[command(name = "natgalore", version, about = "Low-rank natural-gradient optimizer toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the numerical self-check suites.
    Verify {
        /// Run only these suites.
        #[arg(long = "suite", value_parser = clap::builder::PossibleValuesParser::new(verify::SUITES))]
        suites: Vec<String>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<FaultArg>,
    },
    /// Train one model per (mode, seed) and write its records as CSV.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Save the final optimizer state here (single run only).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a saved optimizer state up to the budget.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Benchmark modes across seeds, budgets and learning rates.
    Compare {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print optimizer-state accounting for one parameter shape.
    Memreport {
        /// Parameter shape as ROWSxCOLS.
        #[arg(long)]
        shape: String,
        #[arg(long, default_value_t = 8)]
        rank: usize,
        #[arg(long, default_value_t = 4)]
        history: usize,
        #[arg(long, default_value = "natural-galore")]
        mode: String,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    WoodburySign,
}

/// Flags shared by `train` and `compare`. Unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: Option<String>,
    /// One mode, a comma list, or `all`.
    #[arg(long)]
    mode: Option<String>,
    /// `A..B`, or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    refresh_period: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    history: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    eval_every: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    /// Text file replacing the bundled char-lm corpus.
    #[arg(long)]
    corpus: Option<String>,
    /// Output directory; defaults to $NATGALORE_OUT, then ./natgalore-out.
    #[arg(long)]
    out: Option<String>,
    /// `key = value` file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Report wall_ms = 0 so CSVs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

impl RunArgs {
    fn spec(&self) -> Result<RunSpec, Error> {
        let mut settings = match &self.config {
            Some(p) => config::read_settings(p)?,
            None => Settings::new(),
        };
        let flags = [
            ("task", &self.task),
            ("mode", &self.mode),
            ("seeds", &self.seeds),
            ("budget", &self.budget),
            ("lr", &self.lr),
            ("rank", &self.rank),
            ("refresh-period", &self.refresh_period),
            ("lambda", &self.lambda),
            ("history", &self.history),
            ("alpha", &self.alpha),
            ("weight-decay", &self.weight_decay),
            ("eval-every", &self.eval_every),
            ("batch-size", &self.batch_size),
            ("corpus", &self.corpus),
            ("out", &self.out),
        ];
        for (key, v) in flags {
            if let Some(v) = v {
                settings.insert(key.to_string(), v.clone());
            }
        }
        let mut spec = config::resolve(&settings)?;
        spec.train.timing = !self.no_timing;
        Ok(spec)
    }
}

/// Failures map to exit 1, bad arguments to exit 2.
enum Failure {
    Usage(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidInput(_) => Failure::Usage(e.to_string()),
            other => Failure::Run(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify { suites, inject_fault } => cmd_verify(&suites, inject_fault),
        Command::Train { run, checkpoint, resume } => cmd_train(&run, checkpoint, resume),
        Command::Compare { run } => cmd_compare(&run),
        Command::Memreport { shape, rank, history, mode, out } => {
            cmd_memreport(&shape, rank, history, &mode, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn cmd_verify(suites: &[String], fault: Option<FaultArg>) -> Result<(), Failure> {
    let fault = fault.map(|FaultArg::WoodburySign| Fault::WoodburySign);
    let results = if suites.is_empty() {
        verify::run_all(fault)
    } else {
        suites.iter().map(|s| verify::run_suite(s, fault)).collect()
    };
    for r in &results {
        println!("{r}");
    }
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} suites passed", results.len());
    if passed == results.len() {
        Ok(())
    } else {
        Err(Failure::Run("verification failed".into()))
    }
}

fn single<T: Copy>(what: &str, v: &[T]) -> Result<T, Failure> {
    match v {
        [x] => Ok(*x),
        _ => Err(Failure::Usage(format!("train takes exactly one {what}"))),
    }
}

fn cmd_train(run: &RunArgs, save: Option<PathBuf>, resume: Option<PathBuf>) -> Result<(), Failure> {
    let spec = run.spec()?;
    let budget = single("budget", &spec.budgets)?;
    let lr = single("learning rate", &spec.lrs)?;
    let single_run = spec.modes.len() == 1 && spec.seeds.len() == 1;
    if (save.is_some() || resume.is_some()) && !single_run {
        return Err(Failure::Usage("--checkpoint and --resume need a single mode and seed".into()));
    }
    fs::create_dir_all(&spec.out).map_err(Error::from)?;
    let corpus = spec.corpus.as_ref().map(fs::read).transpose().map_err(Error::from)?;
    let tc = spec.train_for(budget);
    let mut failed = false;
    for &seed in &spec.seeds {
        let task = make_task_with_corpus(spec.task, seed, corpus.as_deref())?;
        for &mode in &spec.modes {
            let outcome = match &resume {
                Some(path) => train_from(&task, checkpoint::load(path)?, &tc)?,
                None => train(&task, &spec.optimizer_for(mode, lr), &tc)?,
            };
            let mode = outcome.optimizer.config().mode;
            let path = spec.out.join(format!("{}_{mode}_s{seed}.csv", spec.task));
            fs::write(&path, records_to_csv(&outcome.records)).map_err(Error::from)?;
            if let Some(p) = &save {
                checkpoint::save(&outcome.optimizer, p)?;
            }
            let last = outcome.final_record().expect("at least one record");
            let best = outcome.best_record().map(|r| format!("{:.6} @ {}", r.perplexity, r.step));
            println!(
                "{} {mode} seed {seed}: step {} train {:.6} val {:.6} best perplexity {} -> {}",
                spec.task,
                last.step,
                last.train_loss,
                last.val_loss,
                best.unwrap_or_else(|| "n/a".into()),
                path.display()
            );
            if let Some(d) = &outcome.diverged {
                eprintln!("diverged at step {}: {}", d.step, d.reason);
                failed = true;
            }
        }
    }
    if failed {
        Err(Failure::Run("a run diverged".into()))
    } else {
        Ok(())
    }
}

fn cmd_compare(run: &RunArgs) -> Result<(), Failure> {
    let spec = run.spec()?;
    let result = compare::run(&spec)?;
    compare::write(&result, spec.task.as_str(), &spec.out)?;
    print!("{}", compare::render(&result));
    println!("wrote {}", spec.out.display());
    Ok(())
}

fn cmd_memreport(shape: &str, rank: usize, history: usize, mode: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    let bad = || Failure::Usage(format!("invalid shape `{shape}`, expected ROWSxCOLS"));
    let (r, c) = shape.split_once(['x', 'X']).ok_or_else(bad)?;
    let rows: usize = r.trim().parse().map_err(|_| bad())?;
    let cols: usize = c.trim().parse().map_err(|_| bad())?;
    let mode: Mode = mode.parse().map_err(|e: natgalore_core::Error| Failure::Usage(e.to_string()))?;
    let report = memreport::for_shape(rows, cols, rank, history, mode)?;
    let text = memreport::render(&report);
    print!("{text}");
    if let Some(p) = out {
        fs::write(p, text).map_err(Error::from)?;
    }
    Ok(())
}
