//! Run specifications assembled from defaults, a `key = value` file and
//! command-line overrides, in increasing order of precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use natgalore_core::{Mode, OptimizerConfig};

use crate::error::{Error, Result};
use crate::tasks::TaskKind;
use crate::train::TrainConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "NATGALORE_OUT";
pub const DEFAULT_OUT: &str = "natgalore-out";

pub const KEYS: [&str; 16] = [
    "task",
    "mode",
    "seeds",
    "budget",
    "lr",
    "rank",
    "refresh-period",
    "lambda",
    "history",
    "alpha",
    "weight-decay",
    "out",
    "eval-every",
    "batch-size",
    "corpus",
    "keep-history-on-refresh",
];

/// Raw `key → value` settings before interpretation.
pub type Settings = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub task: TaskKind,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
    pub budgets: Vec<u64>,
    pub lrs: Vec<f64>,
    /// Shared optimizer settings; `mode` and `lr` are set per run.
    pub optimizer: OptimizerConfig,
    /// Shared loop settings; `budget` is set per run.
    pub train: TrainConfig,
    pub out: PathBuf,
    pub corpus: Option<PathBuf>,
}

impl RunSpec {
    pub fn optimizer_for(&self, mode: Mode, lr: f64) -> OptimizerConfig {
        OptimizerConfig {
            mode,
            lr,
            ..self.optimizer.clone()
        }
    }

    pub fn train_for(&self, budget: u64) -> TrainConfig {
        TrainConfig {
            budget,
            ..self.train.clone()
        }
    }
}

/// Parses a config file body. Blank lines and `#` comments are ignored.
pub fn parse_settings(text: &str) -> Result<Settings> {
    let mut out = Settings::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key `{}`", n + 1, k.trim())));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_settings(path: &Path) -> Result<Settings> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_settings(&text)
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{raw}` for {key}")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    let items = raw
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| value(key, s))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("{key} needs at least one value")));
    }
    Ok(items)
}

/// `a..b` (half open), or a comma-separated list.
pub fn parse_seeds(raw: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = raw.split_once("..") {
        let (a, b): (u64, u64) = (value("seeds", a)?, value("seeds", b)?);
        if a >= b {
            return Err(Error::Config(format!("empty seed range `{raw}`")));
        }
        return Ok((a..b).collect());
    }
    list("seeds", raw)
}

pub fn parse_modes(raw: &str) -> Result<Vec<Mode>> {
    if raw.trim() == "all" {
        return Ok(Mode::ALL.to_vec());
    }
    list("mode", raw)
}

fn default_out() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Interprets merged settings; anything unset takes its default.
pub fn resolve(settings: &Settings) -> Result<RunSpec> {
    let get = |k: &str| settings.get(k).map(String::as_str);
    let mut optimizer = OptimizerConfig::default();
    let mut train = TrainConfig::default();
    if let Some(v) = get("rank") {
        optimizer.rank = value("rank", v)?;
    }
    if let Some(v) = get("refresh-period") {
        optimizer.refresh_period = value("refresh-period", v)?;
    }
    if let Some(v) = get("lambda") {
        optimizer.lambda = value("lambda", v)?;
    }
    if let Some(v) = get("history") {
        optimizer.history = value("history", v)?;
    }
    if let Some(v) = get("alpha") {
        optimizer.alpha = value("alpha", v)?;
    }
    if let Some(v) = get("weight-decay") {
        optimizer.weight_decay = value("weight-decay", v)?;
    }
    if let Some(v) = get("keep-history-on-refresh") {
        optimizer.clear_history_on_refresh = !value::<bool>("keep-history-on-refresh", v)?;
    }
    if let Some(v) = get("eval-every") {
        train.eval_every = value("eval-every", v)?;
    }
    if let Some(v) = get("batch-size") {
        train.batch_size = value("batch-size", v)?;
    }
    let spec = RunSpec {
        task: match get("task") {
            Some(v) => v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            None => TaskKind::LowrankRegression,
        },
        modes: get("mode").map(parse_modes).transpose()?.unwrap_or(vec![Mode::NaturalGalore]),
        seeds: get("seeds").map(parse_seeds).transpose()?.unwrap_or(vec![0]),
        budgets: get("budget").map(|v| list("budget", v)).transpose()?.unwrap_or(vec![train.budget]),
        lrs: get("lr").map(|v| list("lr", v)).transpose()?.unwrap_or(vec![optimizer.lr]),
        optimizer,
        train,
        out: get("out").map(PathBuf::from).unwrap_or_else(default_out),
        corpus: get("corpus").map(PathBuf::from),
    };
    for &lr in &spec.lrs {
        spec.optimizer_for(Mode::Adam, lr)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    spec.optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
    for &b in &spec.budgets {
        spec.train_for(b).validate().map_err(|e| Error::Config(e.to_string()))?;
    }
    Ok(spec)
}
