//! A small reverse-mode tape over dense matrices.
//!
//! Nodes are appended in creation order, which is also a topological order,
//! so `forward` and `backward` are single linear sweeps.

use std::collections::BTreeMap;

use natgalore_core::Matrix;

use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Param(String),
    Input,
    /// `a·b`
    MatMul(Var, Var),
    /// `a·bᵀ`
    MatMulT(Var, Var),
    /// `a + 1·b` with `b` a single row
    AddRow(Var, Var),
    Tanh(Var),
    Sub(Var, Var),
    /// `Σ x²` as a 1×1 matrix
    SumSquares(Var),
    Scale(Var, f64),
    /// Mean softmax cross-entropy of each row against its target column.
    CrossEntropy(Var, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: (usize, usize),
    value: Option<Matrix>,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    evaluated: bool,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Binds a named parameter. Its gradient is reported under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Matrix) -> Var {
        self.leaf(Op::Param(name.into()), value)
    }

    /// A constant input; no gradient is reported for it.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.leaf(Op::Input, value)
    }

    fn leaf(&mut self, op: Op, value: Matrix) -> Var {
        self.evaluated = false;
        self.nodes.push(Node {
            op,
            shape: value.shape(),
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, shape: (usize, usize)) -> Var {
        self.evaluated = false;
        self.nodes.push(Node {
            op,
            shape,
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> Result<(usize, usize)> {
        self.nodes
            .get(v.0)
            .map(|n| n.shape)
            .ok_or_else(|| Error::Usage(format!("node {} does not belong to this graph", v.0)))
    }

    fn mismatch(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
        Error::InvalidInput(format!("{op}: incompatible shapes {a:?} and {b:?}"))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a)?, self.shape(b)?);
        if sa.1 != sb.0 {
            return Err(Self::mismatch("matmul", sa, sb));
        }
        Ok(self.push(Op::MatMul(a, b), (sa.0, sb.1)))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a)?, self.shape(b)?);
        if sa.1 != sb.1 {
            return Err(Self::mismatch("matmul_t", sa, sb));
        }
        Ok(self.push(Op::MatMulT(a, b), (sa.0, sb.0)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a)?, self.shape(row)?);
        if sb != (1, sa.1) {
            return Err(Self::mismatch("add_row", sa, sb));
        }
        Ok(self.push(Op::AddRow(a, row), sa))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a)?;
        Ok(self.push(Op::Tanh(a), s))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a)?, self.shape(b)?);
        if sa != sb {
            return Err(Self::mismatch("sub", sa, sb));
        }
        Ok(self.push(Op::Sub(a, b), sa))
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        self.shape(a)?;
        Ok(self.push(Op::SumSquares(a), (1, 1)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let s = self.shape(a)?;
        Ok(self.push(Op::Scale(a, c), s))
    }

    /// Mean over rows of `−log softmax(row)[target]`. Targets must index a
    /// column of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (rows, cols) = self.shape(logits)?;
        if targets.len() != rows {
            return Err(Error::InvalidInput(format!(
                "cross_entropy: {} targets for {rows} rows",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::InvalidInput(format!(
                "cross_entropy: target {bad} out of range for {cols} classes"
            )));
        }
        Ok(self.push(Op::CrossEntropy(logits, targets.to_vec()), (1, 1)))
    }

    /// Evaluates every node not yet computed.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if self.nodes[i].value.is_some() {
                continue;
            }
            let value = self.eval(i)?;
            self.nodes[i].value = Some(value);
        }
        self.evaluated = true;
        Ok(())
    }

    fn val(&self, v: Var) -> &Matrix {
        self.nodes[v.0].value.as_ref().expect("operands are evaluated first")
    }

    fn eval(&self, i: usize) -> Result<Matrix> {
        let out = match &self.nodes[i].op {
            Op::Param(_) | Op::Input => unreachable!("leaves carry their value"),
            Op::MatMul(a, b) => self.val(*a).matmul(self.val(*b))?,
            Op::MatMulT(a, b) => self.val(*a).matmul_t(self.val(*b))?,
            Op::AddRow(a, b) => {
                let mut out = self.val(*a).clone();
                let row = self.val(*b).as_slice();
                let cols = out.cols();
                for chunk in out.as_mut_slice().chunks_mut(cols) {
                    for (x, r) in chunk.iter_mut().zip(row) {
                        *x += r;
                    }
                }
                out
            }
            Op::Tanh(a) => map(self.val(*a), f64::tanh),
            Op::Sub(a, b) => self.val(*a).sub(self.val(*b))?,
            Op::SumSquares(a) => {
                let s = self.val(*a).as_slice().iter().map(|x| x * x).sum();
                Matrix::from_vec(1, 1, vec![s])?
            }
            Op::Scale(a, c) => self.val(*a).scaled(*c),
            Op::CrossEntropy(l, targets) => {
                let logits = self.val(*l);
                let mut total = 0.0;
                for (r, &t) in targets.iter().enumerate() {
                    let row = logits.row(r);
                    total += log_sum_exp(row) - row[t];
                }
                Matrix::from_vec(1, 1, vec![total / targets.len() as f64])?
            }
        };
        Ok(out)
    }

    /// Value of a node; leaves are always available, other nodes only after
    /// [`Graph::forward`].
    pub fn value(&self, v: Var) -> Result<&Matrix> {
        self.shape(v)?;
        self.nodes[v.0]
            .value
            .as_ref()
            .ok_or_else(|| Error::Usage("value requested before forward".into()))
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        let m = self.value(v)?;
        if m.shape() != (1, 1) {
            return Err(Error::InvalidInput(format!("node is {:?}, not scalar", m.shape())));
        }
        Ok(m[(0, 0)])
    }

    /// Gradients of a scalar `loss` with respect to every bound parameter.
    pub fn backward(&self, loss: Var) -> Result<BTreeMap<String, Matrix>> {
        self.backward_with_seed(loss, 1.0)
    }

    /// As [`Graph::backward`] with upstream gradient `seed` on `loss`.
    pub fn backward_with_seed(&self, loss: Var, seed: f64) -> Result<BTreeMap<String, Matrix>> {
        if !self.evaluated {
            return Err(Error::Usage("backward called before forward".into()));
        }
        if self.shape(loss)? != (1, 1) {
            return Err(Error::InvalidInput("backward needs a scalar loss".into()));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::from_vec(1, 1, vec![seed])?);
        let mut grads: BTreeMap<String, Matrix> = BTreeMap::new();

        for i in (0..=loss.0).rev() {
            let Some(up) = adj[i].take() else {
                if let Op::Param(name) = &self.nodes[i].op {
                    let (r, c) = self.nodes[i].shape;
                    grads.entry(name.clone()).or_insert_with(|| Matrix::zeros(r, c));
                }
                continue;
            };
            match &self.nodes[i].op {
                Op::Param(name) => match grads.get_mut(name) {
                    Some(g) => g.axpy(1.0, &up)?,
                    None => {
                        grads.insert(name.clone(), up);
                    }
                },
                Op::Input => {}
                Op::MatMul(a, b) => {
                    accumulate(&mut adj, *a, up.matmul_t(self.val(*b))?)?;
                    accumulate(&mut adj, *b, self.val(*a).t_matmul(&up)?)?;
                }
                Op::MatMulT(a, b) => {
                    accumulate(&mut adj, *a, up.matmul(self.val(*b))?)?;
                    accumulate(&mut adj, *b, up.t_matmul(self.val(*a))?)?;
                }
                Op::AddRow(a, b) => {
                    let mut sums = vec![0.0; up.cols()];
                    for chunk in up.as_slice().chunks(up.cols()) {
                        for (s, x) in sums.iter_mut().zip(chunk) {
                            *s += x;
                        }
                    }
                    accumulate(&mut adj, *b, Matrix::from_vec(1, sums.len(), sums)?)?;
                    accumulate(&mut adj, *a, up)?;
                }
                Op::Tanh(a) => {
                    let y = self.val(Var(i));
                    let mut d = up;
                    for (x, t) in d.as_mut_slice().iter_mut().zip(y.as_slice()) {
                        *x *= 1.0 - t * t;
                    }
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, up.scaled(-1.0))?;
                    accumulate(&mut adj, *a, up)?;
                }
                Op::SumSquares(a) => {
                    let s = up[(0, 0)];
                    accumulate(&mut adj, *a, self.val(*a).scaled(2.0 * s))?;
                }
                Op::Scale(a, c) => accumulate(&mut adj, *a, up.scaled(*c))?,
                Op::CrossEntropy(l, targets) => {
                    let logits = self.val(*l);
                    let w = up[(0, 0)] / targets.len() as f64;
                    let mut d = Matrix::zeros(logits.rows(), logits.cols());
                    let cols = logits.cols();
                    for (r, &t) in targets.iter().enumerate() {
                        let row = logits.row(r);
                        let lse = log_sum_exp(row);
                        let out = &mut d.as_mut_slice()[r * cols..(r + 1) * cols];
                        for (o, x) in out.iter_mut().zip(row) {
                            *o = w * (x - lse).exp();
                        }
                        out[t] -= w;
                    }
                    accumulate(&mut adj, *l, d)?;
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(adj: &mut [Option<Matrix>], v: Var, d: Matrix) -> Result<()> {
    match &mut adj[v.0] {
        Some(acc) => acc.axpy(1.0, &d)?,
        slot @ None => *slot = Some(d),
    }
    Ok(())
}

fn map(a: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let mut out = a.clone();
    out.as_mut_slice().iter_mut().for_each(|x| *x = f(*x));
    out
}

pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
