//! Inverse empirical-Fisher transform on projected gradients.
//!
//! The empirical Fisher is `F = λI + GGᵀ` with `G = [vec(g_k), vec(g_{k-1}), …]`
//! the last `s` vectorized projected gradients. Applying `F⁻¹` uses the
//! Woodbury identity so that only an `s × s` system is ever factored:
//!
//! ```text
//! y = Gᵀg
//! S = I + GᵀG / λ
//! S z = y                      (Cholesky)
//! F⁻¹g = g / λ − G z / λ²
//! ```
//!
//! Nothing of size `d × d` is formed; scratch storage is `O(s² + d)`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_factor, Matrix};

pub const DEFAULT_LAMBDA: f64 = 1e-2;
pub const DEFAULT_HISTORY: usize = 4;

/// Ring buffer of the last `capacity` vectorized projected gradients plus the
/// damping `λ`. A capacity of zero disables the transform entirely.
#[derive(Debug, Clone, PartialEq)]
pub struct GradHistory {
    /// Oldest first.
    columns: VecDeque<Vec<f64>>,
    capacity: usize,
    lambda: f64,
}

impl GradHistory {
    pub fn new(capacity: usize, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(alloc::format!(
                "damping lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(GradHistory {
            columns: VecDeque::with_capacity(capacity),
            capacity,
            lambda,
        })
    }

    /// Rebuilds a history from saved columns, oldest first.
    pub fn from_parts(capacity: usize, lambda: f64, columns: Vec<Vec<f64>>) -> Result<Self> {
        let mut h = GradHistory::new(capacity, lambda)?;
        if columns.len() > capacity {
            return Err(Error::InvalidInput(alloc::format!(
                "{} history columns exceed capacity {capacity}",
                columns.len()
            )));
        }
        if let Some(first) = columns.first() {
            let d = first.len();
            if let Some(bad) = columns.iter().find(|c| c.len() != d) {
                return Err(Error::LengthMismatch {
                    op: "GradHistory::from_parts",
                    expected: d,
                    found: bad.len(),
                });
            }
        }
        h.columns.extend(columns);
        Ok(h)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Length of the stored vectors, if any are stored.
    pub fn dim(&self) -> Option<usize> {
        self.columns.front().map(Vec::len)
    }

    /// Stored columns, oldest first.
    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.columns.iter().map(Vec::as_slice)
    }

    /// Element capacity actually held by the buffer.
    pub fn allocated_elements(&self) -> usize {
        self.columns.iter().map(Vec::capacity).sum()
    }

    /// Appends `vec(g_low)`, evicting the oldest column when full.
    pub fn push(&mut self, g_low: &Matrix) -> Result<()> {
        if self.capacity == 0 {
            return Ok(());
        }
        if let Some(d) = self.dim() {
            if g_low.len() != d {
                return Err(Error::LengthMismatch {
                    op: "GradHistory::push",
                    expected: d,
                    found: g_low.len(),
                });
            }
        }
        let column = if self.columns.len() == self.capacity {
            let mut recycled = self.columns.pop_front().expect("full buffer is non-empty");
            recycled.copy_from_slice(g_low.as_slice());
            recycled
        } else {
            g_low.as_slice().to_vec()
        };
        self.columns.push_back(column);
        Ok(())
    }

    pub fn reset(&mut self) {
        self.columns.clear();
    }

    /// `(λI + GGᵀ)⁻¹ vec(g_low)`, reshaped like `g_low`.
    ///
    /// With no stored columns the gradient is returned unchanged.
    pub fn apply_inverse_fim(&self, g_low: &Matrix) -> Result<Matrix> {
        self.woodbury(g_low, 1.0).map(|(out, _)| out)
    }

    /// Same as [`apply_inverse_fim`](Self::apply_inverse_fim), also returning
    /// how many `f64` elements the call allocated.
    pub fn apply_inverse_fim_traced(&self, g_low: &Matrix) -> Result<(Matrix, usize)> {
        self.woodbury(g_low, 1.0)
    }

    /// Woodbury solve with the sign of the low-rank correction exposed, so
    /// self-checks can confirm they notice a corrupted transform.
    #[doc(hidden)]
    pub fn apply_inverse_fim_with_correction_sign(
        &self,
        g_low: &Matrix,
        sign: f64,
    ) -> Result<Matrix> {
        self.woodbury(g_low, sign).map(|(out, _)| out)
    }

    /// Second algebraic route: `g/λ − G (λI + GᵀG)⁻¹ Gᵀg / λ`.
    ///
    /// Mathematically identical to [`apply_inverse_fim`](Self::apply_inverse_fim);
    /// kept for cross-checking.
    pub fn apply_inverse_fim_unscaled(&self, g_low: &Matrix) -> Result<Matrix> {
        if self.columns.is_empty() {
            return Ok(g_low.clone());
        }
        self.check_dim(g_low)?;
        let lam = self.lambda;
        let s = self.columns.len();
        let y = self.gram_rhs(g_low.as_slice());
        let mut m = Matrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                let v = dot(self.col(i), self.col(j));
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
            m[(i, i)] += lam;
        }
        let w = cholesky_factor(&m)?.solve(&y)?;
        let mut out = g_low.scaled(1.0 / lam);
        let data = out.as_mut_slice();
        for (i, wi) in w.iter().enumerate() {
            let c = wi / lam;
            for (o, gv) in data.iter_mut().zip(self.col(i)) {
                *o -= c * gv;
            }
        }
        Ok(out)
    }

    fn woodbury(&self, g_low: &Matrix, sign: f64) -> Result<(Matrix, usize)> {
        if self.columns.is_empty() {
            return Ok((g_low.clone(), g_low.len()));
        }
        self.check_dim(g_low)?;
        let lam = self.lambda;
        let s = self.columns.len();

        let y = self.gram_rhs(g_low.as_slice());
        let mut gram = Matrix::zeros(s, s);
        for i in 0..s {
            for j in i..s {
                let v = dot(self.col(i), self.col(j)) / lam;
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
            gram[(i, i)] += 1.0;
        }
        let factor = cholesky_factor(&gram)?;
        let z = factor.solve(&y)?;

        let mut out = g_low.scaled(1.0 / lam);
        let data = out.as_mut_slice();
        let inv_lam2 = sign / (lam * lam);
        for (i, zi) in z.iter().enumerate() {
            let c = zi * inv_lam2;
            for (o, gv) in data.iter_mut().zip(self.col(i)) {
                *o -= c * gv;
            }
        }
        // y, S, L, z, output
        let scratch = y.len() + gram.len() + factor.l().len() + z.len() + out.len();
        Ok((out, scratch))
    }

    /// Column `i` of `G`, newest first.
    fn col(&self, i: usize) -> &[f64] {
        &self.columns[self.columns.len() - 1 - i]
    }

    fn gram_rhs(&self, g: &[f64]) -> Vec<f64> {
        let s = self.columns.len();
        let mut y = vec![0.0; s];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = dot(self.col(i), g);
        }
        y
    }

    fn check_dim(&self, g_low: &Matrix) -> Result<()> {
        match self.dim() {
            Some(d) if d != g_low.len() => Err(Error::LengthMismatch {
                op: "apply_inverse_fim",
                expected: d,
                found: g_low.len(),
            }),
            _ => Ok(()),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
