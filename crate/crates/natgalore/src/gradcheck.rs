//! Reverse-mode gradients against central finite differences.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tasks::{Dataset, Params, Task};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;
/// Denominator floor of the relative error, so that entries whose gradient
/// is exactly zero compare absolutely instead of dividing by zero.
pub const FLOOR: f64 = 1e-8;
pub const MAX_CHECKED: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
}

impl GradCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.checked > 0 && self.max_rel_error <= tol
    }
}

pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Checks up to `max_checked` coordinates, sampled with `seed` when the
/// model has more.
pub fn check(task: &Task, params: &Params, batch: &Dataset, max_checked: usize, seed: u64) -> Result<GradCheck> {
    let (_, grads) = task.loss_and_grads(params, batch)?;
    let coords: Vec<(String, usize)> = params
        .iter()
        .flat_map(|(name, m)| (0..m.len()).map(move |i| (name.clone(), i)))
        .collect();
    let picked: Vec<usize> = if coords.len() > max_checked {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, coords.len(), max_checked).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..coords.len()).collect()
    };

    let mut probe = params.clone();
    let mut out = GradCheck { checked: 0, max_rel_error: 0.0, worst: None };
    for k in picked {
        let (name, i) = &coords[k];
        let orig = params[name].as_slice()[*i];
        let mut eval = |x: f64| -> Result<f64> {
            probe.get_mut(name).expect("same keys").as_mut_slice()[*i] = x;
            task.loss(&probe, batch)
        };
        let up = eval(orig + STEP)?;
        let down = eval(orig - STEP)?;
        eval(orig)?;
        let fd = (up - down) / (2.0 * STEP);
        let err = relative_error(grads[name].as_slice()[*i], fd, FLOOR);
        out.checked += 1;
        if err > out.max_rel_error || out.worst.is_none() {
            out.max_rel_error = out.max_rel_error.max(err);
            out.worst = Some((name.clone(), *i));
        }
    }
    Ok(out)
}

/// Gradient check on the task's initial parameters nudged off any symmetric
/// starting point, over the first `batch` training examples.
pub fn check_task(task: &Task, batch: usize, seed: u64) -> Result<GradCheck> {
    let mut params = task.params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for m in params.values_mut() {
        for x in m.as_mut_slice() {
            *x += 0.1 * rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal);
        }
    }
    check(task, &params, &task.train.head(batch), MAX_CHECKED, seed)
}
