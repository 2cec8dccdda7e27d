//! Adam moments over (possibly projected and preconditioned) gradients.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Where `ε` enters the denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EpsPlacement {
    /// `m / √(v + ε)`
    InsideSqrt,
    /// `m / (√v + ε)`
    OutsideSqrt,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias_correction: bool,
    pub eps_placement: EpsPlacement,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bias_correction: true,
            eps_placement: EpsPlacement::InsideSqrt,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| (0.0..1.0).contains(&b);
        if !beta_ok(self.beta1) || !beta_ok(self.beta2) {
            return Err(Error::InvalidInput("adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidInput("adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Matrix,
    v: Matrix,
    step_count: u64,
    config: AdamConfig,
}

impl AdamState {
    /// Zeroed moments of the given shape.
    pub fn new(rows: usize, cols: usize, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step_count: 0,
            config,
        })
    }

    pub fn from_parts(m: Matrix, v: Matrix, step_count: u64, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        m.check_same_shape("AdamState::from_parts", &v)?;
        if v.as_slice().iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidInput("second moment has negative entries".into()));
        }
        Ok(AdamState {
            m,
            v,
            step_count,
            config,
        })
    }

    pub fn m(&self) -> &Matrix {
        &self.m
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn shape(&self) -> (usize, usize) {
        self.m.shape()
    }

    pub fn allocated_elements(&self) -> usize {
        self.m.capacity() + self.v.capacity()
    }

    /// Advances the moments with `g` and returns the update direction.
    ///
    /// The state is left untouched on error.
    pub fn update(&mut self, g: &Matrix) -> Result<Matrix> {
        self.m.check_same_shape("adam_update", g)?;
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient);
        }
        let AdamConfig {
            beta1,
            beta2,
            epsilon,
            bias_correction,
            eps_placement,
        } = self.config;

        let t = self.step_count + 1;
        let (c1, c2) = if bias_correction {
            let t = t as f64;
            (1.0 - libm::pow(beta1, t), 1.0 - libm::pow(beta2, t))
        } else {
            (1.0, 1.0)
        };

        let mut out = Matrix::zeros(g.rows(), g.cols());
        let ms = self.m.as_mut_slice();
        let vs = self.v.as_mut_slice();
        for (((u, m), v), &gi) in out
            .as_mut_slice()
            .iter_mut()
            .zip(ms.iter_mut())
            .zip(vs.iter_mut())
            .zip(g.as_slice())
        {
            *m = beta1 * *m + (1.0 - beta1) * gi;
            *v = beta2 * *v + (1.0 - beta2) * gi * gi;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *u = match eps_placement {
                EpsPlacement::InsideSqrt => m_hat / libm::sqrt(v_hat + epsilon),
                EpsPlacement::OutsideSqrt => m_hat / (libm::sqrt(v_hat) + epsilon),
            };
        }
        self.step_count = t;
        Ok(out)
    }
}

/// Decoupled weight decay: `θ ← θ·(1 − lr·rate)`.
pub fn apply_weight_decay(theta: &mut Matrix, rate: f64, lr: f64) {
    if rate != 0.0 {
        theta.scale_mut(1.0 - lr * rate);
    }
}
