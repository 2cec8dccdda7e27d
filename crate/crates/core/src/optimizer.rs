//! The stepping optimizer: per-slot refresh, projection, inverse-Fisher
//! transform, Adam and back-projection.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::adam::{apply_weight_decay, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::memory::{MemoryReport, SlotMemory};
use crate::natgrad::{GradHistory, DEFAULT_HISTORY, DEFAULT_LAMBDA};
use crate::projector::{Projector, Side, DEFAULT_REFRESH_PERIOD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Adam in the full parameter space.
    Adam,
    /// Adam on rank-`r` projected gradients.
    Galore,
    /// Projected gradients preconditioned by the inverse empirical Fisher.
    NaturalGalore,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Adam, Mode::Galore, Mode::NaturalGalore];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Adam => "adam",
            Mode::Galore => "galore",
            Mode::NaturalGalore => "natural-galore",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Mode::Adam),
            "galore" => Ok(Mode::Galore),
            "natural-galore" | "natural_galore" | "natgalore" => Ok(Mode::NaturalGalore),
            other => Err(Error::InvalidInput(alloc::format!("unknown optimizer mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub mode: Mode,
    pub lr: f64,
    pub rank: usize,
    pub refresh_period: u64,
    /// Tikhonov damping of the empirical Fisher.
    pub lambda: f64,
    /// Number of past projected gradients in the Fisher window.
    pub history: usize,
    /// Extra scale on projected updates.
    pub alpha: f64,
    pub weight_decay: f64,
    pub adam: AdamConfig,
    /// Parameters whose smaller dimension is below this stay full-space.
    pub min_dim_for_projection: usize,
    /// Forces the projection side; `None` picks the side with the smaller state.
    pub side: Option<Side>,
    /// Drop the gradient window when the subspace is recomputed, since its
    /// columns are coordinates in the old basis.
    pub clear_history_on_refresh: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            mode: Mode::NaturalGalore,
            lr: 1e-3,
            rank: 8,
            refresh_period: DEFAULT_REFRESH_PERIOD,
            lambda: DEFAULT_LAMBDA,
            history: DEFAULT_HISTORY,
            alpha: 1.0,
            weight_decay: 0.0,
            adam: AdamConfig::default(),
            min_dim_for_projection: 2,
            side: None,
            clear_history_on_refresh: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it turns the optimizer into a no-op, which the
        // harness uses as a control.
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::InvalidInput(alloc::format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.rank == 0 {
            return Err(Error::InvalidInput("rank must be at least 1".into()));
        }
        if self.refresh_period == 0 {
            return Err(Error::InvalidInput("refresh period must be at least 1".into()));
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput("lambda must be positive".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidInput("alpha must be finite and >= 0".into()));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::InvalidInput("weight decay must be finite and >= 0".into()));
        }
        self.adam.validate()
    }

    /// Whether a `rows × cols` parameter is projected under this config.
    pub fn projects(&self, rows: usize, cols: usize) -> bool {
        self.mode != Mode::Adam && rows.min(cols) >= self.min_dim_for_projection.max(1)
    }
}

/// Settings resolved for one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotConfig {
    /// Rank after clamping to the parameter's smaller dimension.
    pub rank: usize,
    pub refresh_period: u64,
    pub lambda: f64,
    pub history: usize,
    pub alpha: f64,
}

/// What one slot did during a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotStep {
    pub refreshed: bool,
    /// `‖u‖_F` of the Adam direction before back-projection.
    pub update_norm: f64,
}

/// A named parameter and all optimizer state attached to it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlot {
    name: String,
    theta: Matrix,
    projector: Option<Projector>,
    history: Option<GradHistory>,
    adam: AdamState,
    config: SlotConfig,
}

impl ParamSlot {
    pub fn new(name: impl Into<String>, theta: Matrix, cfg: &OptimizerConfig) -> Result<Self> {
        let (n, m) = theta.shape();
        let rank = cfg.rank.min(n.min(m));
        let config = SlotConfig {
            rank,
            refresh_period: cfg.refresh_period,
            lambda: cfg.lambda,
            history: cfg.history,
            alpha: cfg.alpha,
        };
        let (projector, history, adam) = if cfg.projects(n, m) {
            let side = cfg.side.unwrap_or_else(|| Side::for_shape(n, m));
            let (pr, pc) = side.projected_shape(n, m, rank);
            let history = match cfg.mode {
                Mode::NaturalGalore => Some(GradHistory::new(cfg.history, cfg.lambda)?),
                _ => None,
            };
            (
                Some(Projector::new(side, rank, cfg.refresh_period)?),
                history,
                AdamState::new(pr, pc, cfg.adam)?,
            )
        } else {
            (None, None, AdamState::new(n, m, cfg.adam)?)
        };
        Ok(ParamSlot {
            name: name.into(),
            theta,
            projector,
            history,
            adam,
            config,
        })
    }

    /// Reassembles a slot from saved parts, checking shape consistency.
    pub fn from_parts(
        name: String,
        theta: Matrix,
        projector: Option<Projector>,
        history: Option<GradHistory>,
        adam: AdamState,
        config: SlotConfig,
    ) -> Result<Self> {
        let (n, m) = theta.shape();
        let expected = match &projector {
            Some(p) => {
                if let Some(shape) = p.param_shape() {
                    if shape != (n, m) {
                        return Err(Error::ShapeMismatch {
                            op: "ParamSlot::from_parts",
                            expected: (n, m),
                            found: shape,
                        });
                    }
                }
                p.side().projected_shape(n, m, p.rank())
            }
            None => {
                if history.is_some() {
                    return Err(Error::InvalidInput(
                        "full-space slot cannot carry a gradient history".into(),
                    ));
                }
                (n, m)
            }
        };
        if adam.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "ParamSlot::from_parts",
                expected,
                found: adam.shape(),
            });
        }
        Ok(ParamSlot {
            name,
            theta,
            projector,
            history,
            adam,
            config,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    pub fn projector(&self) -> Option<&Projector> {
        self.projector.as_ref()
    }

    pub fn history(&self) -> Option<&GradHistory> {
        self.history.as_ref()
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn config(&self) -> &SlotConfig {
        &self.config
    }

    pub fn is_projected(&self) -> bool {
        self.projector.is_some()
    }

    /// Runs one optimizer step on this slot.
    pub fn step(&mut self, grad: &Matrix, cfg: &OptimizerConfig, step: u64) -> Result<SlotStep> {
        self.theta.check_same_shape("ParamSlot::step", grad)?;
        let non_finite = |name: &str| Error::NonFiniteSlot {
            slot: name.to_string(),
            step,
        };
        if !grad.is_finite() {
            return Err(non_finite(&self.name));
        }

        let Some(projector) = self.projector.as_mut() else {
            let u = self.adam.update(grad).map_err(|_| non_finite(&self.name))?;
            self.theta.axpy(-cfg.lr, &u)?;
            apply_weight_decay(&mut self.theta, cfg.weight_decay, cfg.lr);
            if !self.theta.is_finite() {
                return Err(non_finite(&self.name));
            }
            return Ok(SlotStep {
                refreshed: false,
                update_norm: u.frobenius_norm(),
            });
        };

        let mut refreshed = false;
        if projector.should_refresh(step) {
            let had_factor = projector.factor().is_some();
            projector.refresh(grad, step)?;
            refreshed = true;
            if had_factor && cfg.clear_history_on_refresh {
                if let Some(h) = self.history.as_mut() {
                    h.reset();
                }
            }
        }

        let g_low = projector.project(grad)?;
        let g_dir = match self.history.as_mut() {
            Some(h) => {
                h.push(&g_low)?;
                h.apply_inverse_fim(&g_low).map_err(|e| match e {
                    Error::NotPositiveDefinite { pivot } => Error::NumericalFailure {
                        slot: self.name.clone(),
                        step,
                        pivot,
                    },
                    other => other,
                })?
            }
            None => g_low,
        };
        let u = self.adam.update(&g_dir).map_err(|e| match e {
            Error::NonFiniteGradient => non_finite(&self.name),
            other => other,
        })?;
        let delta = projector.project_back(&u)?;
        self.theta.axpy(-cfg.lr * self.config.alpha, &delta)?;
        apply_weight_decay(&mut self.theta, cfg.weight_decay, cfg.lr);
        if !self.theta.is_finite() {
            return Err(non_finite(&self.name));
        }
        Ok(SlotStep {
            refreshed,
            update_norm: u.frobenius_norm(),
        })
    }

    /// Element counts from formulas over this slot's shapes and settings.
    pub fn memory(&self) -> SlotMemory {
        let (n, m) = self.theta.shape();
        let projection = self.projector.as_ref().map(|p| (p.side(), p.rank()));
        let history = self.history.as_ref().map_or(0, GradHistory::capacity);
        SlotMemory::estimate(self.name.clone(), n, m, projection, history)
    }

    /// Element counts read off the live buffers.
    pub fn allocated(&self) -> SlotMemory {
        let (n, m) = self.theta.shape();
        let projection = self.projector.as_ref().map(|p| (p.side(), p.rank()));
        let live = self.history.as_ref().map_or(0, GradHistory::len);
        let mut mem = SlotMemory::estimate(self.name.clone(), n, m, projection, live);
        mem.parameters = self.theta.capacity();
        mem.projector = self
            .projector
            .as_ref()
            .and_then(Projector::factor)
            .map_or(0, Matrix::capacity);
        mem.moments = self.adam.allocated_elements();
        mem.history = self.history.as_ref().map_or(0, GradHistory::allocated_elements);
        let (pr, pc) = self.adam.shape();
        mem.gradients = pr * pc;
        mem
    }
}

/// Drop-in optimizer over a set of named parameter slots.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    slots: Vec<ParamSlot>,
    step: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            slots: Vec::new(),
            step: 0,
        })
    }

    pub fn from_parts(config: OptimizerConfig, slots: Vec<ParamSlot>, step: u64) -> Result<Self> {
        config.validate()?;
        let mut opt = Optimizer::new(config)?;
        for slot in slots {
            opt.insert(slot)?;
        }
        opt.step = step;
        Ok(opt)
    }

    /// Registers a parameter under a unique name.
    pub fn add_param(&mut self, name: impl Into<String>, theta: Matrix) -> Result<()> {
        let slot = ParamSlot::new(name, theta, &self.config)?;
        self.insert(slot)
    }

    fn insert(&mut self, slot: ParamSlot) -> Result<()> {
        if self.slots.iter().any(|s| s.name == slot.name) {
            return Err(Error::DuplicateSlot(slot.name));
        }
        self.slots.push(slot);
        Ok(())
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Index of the next step.
    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&ParamSlot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn param(&self, name: &str) -> Option<&Matrix> {
        self.slot(name).map(ParamSlot::theta)
    }

    /// Applies one step to every slot.
    ///
    /// Every gradient is checked for presence, shape and finiteness before any
    /// slot is touched.
    pub fn step(&mut self, grads: &BTreeMap<String, Matrix>) -> Result<Vec<SlotStep>> {
        let step = self.step;
        for slot in &self.slots {
            let g = grads
                .get(&slot.name)
                .ok_or_else(|| Error::MissingGradient(slot.name.clone()))?;
            slot.theta.check_same_shape("Optimizer::step", g)?;
            if !g.is_finite() {
                return Err(Error::NonFiniteSlot {
                    slot: slot.name.clone(),
                    step,
                });
            }
        }
        let mut out = Vec::with_capacity(self.slots.len());
        for slot in &mut self.slots {
            out.push(slot.step(&grads[&slot.name], &self.config, step)?);
        }
        self.step += 1;
        Ok(out)
    }

    pub fn memory_report(&self) -> MemoryReport {
        MemoryReport::new(self.slots.iter().map(ParamSlot::memory).collect())
    }

    /// Report built from live buffer capacities instead of formulas.
    pub fn allocated_report(&self) -> MemoryReport {
        MemoryReport::new(self.slots.iter().map(ParamSlot::allocated).collect())
    }
}
