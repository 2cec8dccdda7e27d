//! Element accounting for optimizer state.
//!
//! Counts are in scalars, not bytes; [`SlotMemory::bytes`] scales by a chosen
//! width. The baseline is full-space Adam: one gradient plus two moments,
//! `3·n·m` elements per slot.

use alloc::string::String;
use alloc::vec::Vec;

use crate::projector::Side;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotMemory {
    pub name: String,
    pub shape: (usize, usize),
    /// Projection side and rank, or `None` for a full-space slot.
    pub projection: Option<(Side, usize)>,
    /// History window length `s` (zero when no Fisher transform).
    pub history_len: usize,
    pub parameters: usize,
    /// Gradient the state is built on: `n·m` full-space, `r·m` (or `n·r`) projected.
    pub gradients: usize,
    pub projector: usize,
    pub moments: usize,
    pub history: usize,
}

impl SlotMemory {
    pub fn estimate(
        name: String,
        rows: usize,
        cols: usize,
        projection: Option<(Side, usize)>,
        history_len: usize,
    ) -> Self {
        let full = rows * cols;
        let (gradients, projector) = match projection {
            None => (full, 0),
            Some((side, r)) => {
                let (pr, pc) = side.projected_shape(rows, cols, r);
                let factor_rows = match side {
                    Side::Left => rows,
                    Side::Right => cols,
                };
                (pr * pc, factor_rows * r)
            }
        };
        let history_len = if projection.is_some() { history_len } else { 0 };
        SlotMemory {
            name,
            shape: (rows, cols),
            projection,
            history_len,
            parameters: full,
            gradients,
            projector,
            moments: 2 * gradients,
            history: history_len * gradients,
        }
    }

    /// Everything the optimizer keeps besides the parameters.
    pub fn optimizer_state(&self) -> usize {
        self.gradients + self.projector + self.moments + self.history
    }

    /// Full-space Adam state for the same parameter: `3·n·m`.
    pub fn baseline(&self) -> usize {
        3 * self.shape.0 * self.shape.1
    }

    /// Optimizer state relative to the full-space Adam baseline.
    pub fn ratio(&self) -> f64 {
        self.optimizer_state() as f64 / self.baseline() as f64
    }

    /// Moment storage relative to full-space moments (`r/n` for a square left-projected slot).
    pub fn moment_ratio(&self) -> f64 {
        self.moments as f64 / (2 * self.shape.0 * self.shape.1) as f64
    }

    /// History storage as a multiple of moment storage.
    pub fn history_to_moments(&self) -> f64 {
        self.history as f64 / self.moments as f64
    }

    pub fn bytes(elements: usize, width: usize) -> usize {
        elements * width
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryReport {
    pub slots: Vec<SlotMemory>,
    pub total: SlotMemory,
}

impl MemoryReport {
    pub fn new(slots: Vec<SlotMemory>) -> Self {
        let mut total = SlotMemory {
            name: String::from("total"),
            shape: (0, 0),
            projection: None,
            history_len: 0,
            parameters: 0,
            gradients: 0,
            projector: 0,
            moments: 0,
            history: 0,
        };
        let mut baseline = 0;
        for s in &slots {
            total.parameters += s.parameters;
            total.gradients += s.gradients;
            total.projector += s.projector;
            total.moments += s.moments;
            total.history += s.history;
            total.history_len = total.history_len.max(s.history_len);
            baseline += s.baseline();
        }
        // Encode the summed baseline as a 1 × (total n·m) shape so the
        // per-slot ratio helpers work on the total too.
        total.shape = (1, baseline / 3);
        MemoryReport { slots, total }
    }

    pub fn baseline(&self) -> usize {
        self.total.baseline()
    }

    pub fn ratio(&self) -> f64 {
        if self.baseline() == 0 {
            return 0.0;
        }
        self.total.ratio()
    }
}
