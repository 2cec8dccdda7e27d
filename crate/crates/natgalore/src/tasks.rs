//! Synthetic problems whose weight matrices are large enough for low-rank
//! projection to matter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use natgalore_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

pub type Params = BTreeMap<String, Matrix>;

/// Text used by `char-lm` unless another corpus is supplied.
pub const BUNDLED_CORPUS: &str = include_str!("../data/corpus.txt");

pub const REGRESSION_DIM: usize = 64;
pub const PLANTED_RANK: usize = 4;
pub const NOISE_STD: f64 = 0.1;
pub const HIDDEN: usize = 64;
pub const CLASSES: usize = 8;
pub const CONTEXT: usize = 4;
const TRAIN_EXAMPLES: usize = 1024;
const VAL_EXAMPLES: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    LowrankRegression,
    MlpClassify,
    CharLm,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::LowrankRegression, TaskKind::MlpClassify, TaskKind::CharLm];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::LowrankRegression => "lowrank-regression",
            TaskKind::MlpClassify => "mlp-classify",
            TaskKind::CharLm => "char-lm",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown task kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Features(Matrix),
    /// Row-major `len × context` token ids.
    Tokens { ids: Vec<usize>, context: usize, vocab: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Real(Matrix),
    Classes(Vec<usize>),
}

/// A set of examples; a minibatch is just a smaller one.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Inputs,
    pub targets: Targets,
}

impl Dataset {
    pub fn len(&self) -> usize {
        match &self.targets {
            Targets::Real(m) => m.rows(),
            Targets::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Examples at `idx`, in that order.
    pub fn gather(&self, idx: &[usize]) -> Dataset {
        let rows = |m: &Matrix| {
            let cols = m.cols();
            let mut data = Vec::with_capacity(idx.len() * cols);
            for &i in idx {
                data.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(idx.len(), cols, data).expect("gathered rows keep their width")
        };
        let inputs = match &self.inputs {
            Inputs::Features(x) => Inputs::Features(rows(x)),
            Inputs::Tokens { ids, context, vocab } => Inputs::Tokens {
                ids: idx
                    .iter()
                    .flat_map(|&i| ids[i * context..(i + 1) * context].iter().copied())
                    .collect(),
                context: *context,
                vocab: *vocab,
            },
        };
        let targets = match &self.targets {
            Targets::Real(y) => Targets::Real(rows(y)),
            Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        };
        Dataset { inputs, targets }
    }

    /// The first `n` examples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.gather(&idx)
    }

    fn feature_matrix(&self) -> Result<Matrix> {
        match &self.inputs {
            Inputs::Features(x) => Ok(x.clone()),
            Inputs::Tokens { ids, context, vocab } => {
                if let Some(bad) = ids.iter().find(|&&t| t >= *vocab) {
                    return Err(Error::InvalidInput(format!(
                        "token id {bad} outside vocabulary of {vocab}"
                    )));
                }
                let rows = ids.len() / context;
                let width = context * vocab;
                let mut x = Matrix::zeros(rows.max(1), width);
                for (k, &t) in ids.iter().enumerate() {
                    let (r, pos) = (k / context, k % context);
                    x.as_mut_slice()[r * width + pos * vocab + t] = 1.0;
                }
                Ok(x)
            }
        }
    }
}

/// A deterministic problem instance: initial parameters plus train and
/// validation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub kind: TaskKind,
    pub seed: u64,
    pub params: Params,
    pub train: Dataset,
    pub val: Dataset,
    /// Byte for each `char-lm` class id.
    pub vocab: Option<Vec<u8>>,
    /// `W*` of `lowrank-regression`.
    pub planted: Option<Matrix>,
    /// `½·mean‖ε‖²` of the training noise of `lowrank-regression`.
    pub noise_floor: Option<f64>,
}

pub fn make_task(kind: TaskKind, seed: u64) -> Result<Task> {
    make_task_with_corpus(kind, seed, None)
}

/// As [`make_task`], with `corpus` replacing the bundled text for `char-lm`.
pub fn make_task_with_corpus(kind: TaskKind, seed: u64, corpus: Option<&[u8]>) -> Result<Task> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        TaskKind::LowrankRegression => Ok(lowrank_regression(&mut rng, seed)),
        TaskKind::MlpClassify => Ok(mlp_classify(&mut rng, seed)),
        TaskKind::CharLm => char_lm(&mut rng, seed, corpus.unwrap_or(BUNDLED_CORPUS.as_bytes())),
    }
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn lowrank_regression(rng: &mut ChaCha8Rng, seed: u64) -> Task {
    let d = REGRESSION_DIM;
    let a = gaussian(rng, d, PLANTED_RANK, 1.0);
    let b = gaussian(rng, PLANTED_RANK, d, 1.0);
    let planted = a.matmul(&b).expect("conformable").scaled(1.0 / 8.0);
    let mut split = |n: usize| {
        let x = gaussian(rng, n, d, 1.0);
        let noise = gaussian(rng, n, d, NOISE_STD);
        let y = x.matmul_t(&planted).expect("conformable").add(&noise).expect("same shape");
        (Dataset { inputs: Inputs::Features(x), targets: Targets::Real(y) }, noise)
    };
    let (train, noise) = split(TRAIN_EXAMPLES);
    let (val, _) = split(VAL_EXAMPLES);
    let floor = 0.5 * noise.as_slice().iter().map(|e| e * e).sum::<f64>() / TRAIN_EXAMPLES as f64;
    Task {
        kind: TaskKind::LowrankRegression,
        seed,
        params: BTreeMap::from([("w".to_string(), Matrix::zeros(d, d))]),
        train,
        val,
        vocab: None,
        planted: Some(planted),
        noise_floor: Some(floor),
    }
}

fn mlp_params(rng: &mut ChaCha8Rng, inputs: usize, w1_scale: f64, outputs: usize) -> Params {
    BTreeMap::from([
        ("w1".to_string(), gaussian(rng, HIDDEN, inputs, w1_scale)),
        ("b1".to_string(), Matrix::zeros(1, HIDDEN)),
        ("w2".to_string(), gaussian(rng, outputs, HIDDEN, 1.0 / (HIDDEN as f64).sqrt())),
        ("b2".to_string(), Matrix::zeros(1, outputs)),
    ])
}

fn mlp_classify(rng: &mut ChaCha8Rng, seed: u64) -> Task {
    let d = REGRESSION_DIM;
    let means = gaussian(rng, CLASSES, d, 0.3);
    let mut split = |n: usize| {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..CLASSES)).collect();
        let noise = gaussian(rng, n, d, 1.0);
        let x = Matrix::from_fn(n, d, |i, j| means[(labels[i], j)] + noise[(i, j)]);
        Dataset { inputs: Inputs::Features(x), targets: Targets::Classes(labels) }
    };
    let train = split(TRAIN_EXAMPLES);
    let val = split(VAL_EXAMPLES);
    Task {
        kind: TaskKind::MlpClassify,
        seed,
        params: mlp_params(rng, d, 1.0 / (d as f64).sqrt(), CLASSES),
        train,
        val,
        vocab: None,
        planted: None,
        noise_floor: None,
    }
}

fn char_lm(rng: &mut ChaCha8Rng, seed: u64, corpus: &[u8]) -> Result<Task> {
    if corpus.len() <= CONTEXT + 1 {
        return Err(Error::InvalidInput(format!(
            "corpus of {} bytes is too short for a context of {CONTEXT}",
            corpus.len()
        )));
    }
    let vocab: Vec<u8> = corpus.iter().copied().collect::<BTreeSet<u8>>().into_iter().collect();
    let mut id = [0usize; 256];
    for (i, &b) in vocab.iter().enumerate() {
        id[b as usize] = i;
    }
    let tokens: Vec<usize> = corpus.iter().map(|&b| id[b as usize]).collect();
    let examples = tokens.len() - CONTEXT;
    let cut = examples * 9 / 10;
    let split = |range: std::ops::Range<usize>| Dataset {
        inputs: Inputs::Tokens {
            ids: range.clone().flat_map(|t| tokens[t..t + CONTEXT].iter().copied()).collect(),
            context: CONTEXT,
            vocab: vocab.len(),
        },
        targets: Targets::Classes(range.map(|t| tokens[t + CONTEXT]).collect()),
    };
    let (train, val) = (split(0..cut), split(cut..examples));
    Ok(Task {
        kind: TaskKind::CharLm,
        seed,
        params: mlp_params(rng, CONTEXT * vocab.len(), 0.5, vocab.len()),
        train,
        val,
        vocab: Some(vocab),
        planted: None,
        noise_floor: None,
    })
}

impl Task {
    /// Builds and evaluates the loss graph for `batch`.
    pub fn graph(&self, params: &Params, batch: &Dataset) -> Result<(Graph, Var)> {
        let get = |name: &str| {
            params
                .get(name)
                .cloned()
                .ok_or_else(|| Error::InvalidInput(format!("missing parameter `{name}`")))
        };
        let mut g = Graph::new();
        let x = g.input(batch.feature_matrix()?);
        let loss = match self.kind {
            TaskKind::LowrankRegression => {
                let Targets::Real(y) = &batch.targets else {
                    return Err(Error::InvalidInput("regression needs real targets".into()));
                };
                let w = g.param("w", get("w")?);
                let y = g.input(y.clone());
                let pred = g.matmul_t(x, w)?;
                let diff = g.sub(pred, y)?;
                let ss = g.sum_squares(diff)?;
                g.scale(ss, 0.5 / batch.len() as f64)?
            }
            TaskKind::MlpClassify | TaskKind::CharLm => {
                let Targets::Classes(labels) = &batch.targets else {
                    return Err(Error::InvalidInput("classification needs class targets".into()));
                };
                let w1 = g.param("w1", get("w1")?);
                let b1 = g.param("b1", get("b1")?);
                let w2 = g.param("w2", get("w2")?);
                let b2 = g.param("b2", get("b2")?);
                let pre = g.matmul_t(x, w1)?;
                let pre = g.add_row(pre, b1)?;
                let h = g.tanh(pre)?;
                let logits = g.matmul_t(h, w2)?;
                let logits = g.add_row(logits, b2)?;
                g.cross_entropy(logits, labels)?
            }
        };
        g.forward()?;
        Ok((g, loss))
    }

    pub fn loss(&self, params: &Params, batch: &Dataset) -> Result<f64> {
        let (g, loss) = self.graph(params, batch)?;
        g.scalar(loss)
    }

    pub fn loss_and_grads(&self, params: &Params, batch: &Dataset) -> Result<(f64, Params)> {
        let (g, loss) = self.graph(params, batch)?;
        Ok((g.scalar(loss)?, g.backward(loss)?))
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Matrix::len).sum()
    }
}
