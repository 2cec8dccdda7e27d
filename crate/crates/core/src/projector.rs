//! Per-parameter low-rank subspace.
//!
//! For an `n × m` parameter the projector keeps either the leading left
//! singular vectors `P` (`n × r`, gradients map to `Pᵀg`, `r × m`) or the
//! leading right singular vectors `Q` (`m × r`, gradients map to `gQ`,
//! `n × r`) of the gradient it was last refreshed from.

use crate::error::{Error, Result};
use crate::linalg::{compact_svd, Matrix};

/// Which side of the parameter the subspace lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Side that yields the smaller projected state: left when `n ≤ m`.
    pub fn for_shape(rows: usize, cols: usize) -> Side {
        if rows <= cols {
            Side::Left
        } else {
            Side::Right
        }
    }

    /// Shape of a projected `rows × cols` gradient at rank `r`.
    pub fn projected_shape(self, rows: usize, cols: usize, rank: usize) -> (usize, usize) {
        match self {
            Side::Left => (rank, cols),
            Side::Right => (rows, rank),
        }
    }
}

pub const DEFAULT_REFRESH_PERIOD: u64 = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    factor: Option<Matrix>,
    param_shape: Option<(usize, usize)>,
    side: Side,
    rank: usize,
    refresh_period: u64,
    last_refresh_step: Option<u64>,
}

impl Projector {
    /// Uninitialized projector; the first [`should_refresh`](Self::should_refresh) is `true`.
    pub fn new(side: Side, rank: usize, refresh_period: u64) -> Result<Self> {
        if rank == 0 {
            return Err(Error::InvalidInput("projector rank must be at least 1".into()));
        }
        if refresh_period == 0 {
            return Err(Error::InvalidInput("refresh period must be at least 1".into()));
        }
        Ok(Projector {
            factor: None,
            param_shape: None,
            side,
            rank,
            refresh_period,
            last_refresh_step: None,
        })
    }

    /// Projector freshly computed from `grad` at `step`.
    pub fn from_gradient(
        grad: &Matrix,
        rank: usize,
        side: Side,
        refresh_period: u64,
        step: u64,
    ) -> Result<Self> {
        let mut p = Projector::new(side, rank, refresh_period)?;
        p.refresh(grad, step)?;
        Ok(p)
    }

    /// Rebuilds a projector from saved state.
    pub fn from_parts(
        side: Side,
        rank: usize,
        refresh_period: u64,
        last_refresh_step: Option<u64>,
        param_shape: Option<(usize, usize)>,
        factor: Option<Matrix>,
    ) -> Result<Self> {
        let mut p = Projector::new(side, rank, refresh_period)?;
        match (&factor, param_shape, last_refresh_step) {
            (None, None, None) => {}
            (Some(f), Some((n, m)), Some(_)) => {
                let rows = match side {
                    Side::Left => n,
                    Side::Right => m,
                };
                if f.shape() != (rows, rank) {
                    return Err(Error::ShapeMismatch {
                        op: "Projector::from_parts",
                        expected: (rows, rank),
                        found: f.shape(),
                    });
                }
            }
            _ => {
                return Err(Error::InvalidInput(
                    "projector factor, shape and refresh step must be all set or all absent".into(),
                ))
            }
        }
        p.factor = factor;
        p.param_shape = param_shape;
        p.last_refresh_step = last_refresh_step;
        Ok(p)
    }

    /// Recomputes the factor from the leading singular vectors of `grad`.
    pub fn refresh(&mut self, grad: &Matrix, step: u64) -> Result<()> {
        let (n, m) = grad.shape();
        if let Some(shape) = self.param_shape {
            if shape != (n, m) {
                return Err(Error::ShapeMismatch {
                    op: "Projector::refresh",
                    expected: shape,
                    found: (n, m),
                });
            }
        }
        if self.rank > n.min(m) {
            return Err(Error::InvalidInput(alloc::format!(
                "projector rank {} exceeds min dimension of a {n}x{m} parameter",
                self.rank
            )));
        }
        let svd = compact_svd(grad, self.rank)?;
        self.factor = Some(match self.side {
            Side::Left => svd.p,
            Side::Right => svd.q,
        });
        self.param_shape = Some((n, m));
        self.last_refresh_step = Some(step);
        Ok(())
    }

    /// True on first use, then whenever `refresh_period` steps have elapsed.
    pub fn should_refresh(&self, step: u64) -> bool {
        match self.last_refresh_step {
            None => true,
            Some(last) => step.saturating_sub(last) >= self.refresh_period,
        }
    }

    /// `Pᵀ·grad` (left) or `grad·Q` (right).
    pub fn project(&self, grad: &Matrix) -> Result<Matrix> {
        let (factor, shape) = self.initialized()?;
        if grad.shape() != shape {
            return Err(Error::ShapeMismatch {
                op: "project",
                expected: shape,
                found: grad.shape(),
            });
        }
        match self.side {
            Side::Left => factor.t_matmul(grad),
            Side::Right => grad.matmul(factor),
        }
    }

    /// `P·u` (left) or `u·Qᵀ` (right), shaped like the parameter.
    pub fn project_back(&self, u: &Matrix) -> Result<Matrix> {
        let (factor, (n, m)) = self.initialized()?;
        let expected = self.side.projected_shape(n, m, self.rank);
        if u.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "project_back",
                expected,
                found: u.shape(),
            });
        }
        match self.side {
            Side::Left => factor.matmul(u),
            Side::Right => u.matmul_t(factor),
        }
    }

    fn initialized(&self) -> Result<(&Matrix, (usize, usize))> {
        match (&self.factor, self.param_shape) {
            (Some(f), Some(shape)) => Ok((f, shape)),
            _ => Err(Error::InvalidInput("projector used before first refresh".into())),
        }
    }

    pub fn factor(&self) -> Option<&Matrix> {
        self.factor.as_ref()
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn refresh_period(&self) -> u64 {
        self.refresh_period
    }

    pub fn last_refresh_step(&self) -> Option<u64> {
        self.last_refresh_step
    }

    pub fn param_shape(&self) -> Option<(usize, usize)> {
        self.param_shape
    }
}
