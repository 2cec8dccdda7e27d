//! Self-check suites run by `natgalore verify`.
//!
//! Each suite compares a kernel against a small independent reference
//! implemented here, and reports a single pass/fail line. Output depends
//! only on fixed seeds, so repeated runs print identical text.

use std::collections::BTreeMap;
use std::fmt;

use natgalore_core::linalg::{cholesky_factor, compact_svd, solve_cholesky};
use natgalore_core::{GradHistory, Matrix, Mode, Optimizer, OptimizerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::gradcheck;
use crate::tasks::{make_task, TaskKind};
use crate::train::{train, TrainConfig};

/// Deliberate defects for checking that the suites notice breakage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the low-rank Woodbury correction.
    WoodburySign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {:<15} {}", self.name, self.detail)
    }
}

pub const SUITES: [&str; 5] = ["woodbury", "svd", "cholesky", "gradcheck", "mode-reduction"];

pub fn run_all(fault: Option<Fault>) -> Vec<SuiteResult> {
    SUITES.iter().map(|s| run_suite(s, fault)).collect()
}

pub fn run_suite(name: &str, fault: Option<Fault>) -> SuiteResult {
    let outcome = match name {
        "woodbury" => woodbury(fault),
        "svd" => svd(),
        "cholesky" => cholesky(),
        "gradcheck" => gradcheck_suite(),
        "mode-reduction" => mode_reduction(),
        other => Err(crate::Error::InvalidInput(format!("unknown suite `{other}`"))),
    };
    let name = SUITES.iter().copied().find(|s| *s == name).unwrap_or("unknown");
    match outcome {
        Ok((passed, detail)) => SuiteResult { name, passed, detail },
        Err(e) => SuiteResult { name, passed: false, detail: format!("error: {e}") },
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, &x)| [r.as_slice(), &[x]].concat()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).expect("non-empty");
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| m[i][j] * x[j]).sum();
        x[i] = (m[i][n] - tail) / m[i][i];
    }
    x
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn woodbury(fault: Option<Fault>) -> Result<(bool, String)> {
    let sign = if fault == Some(Fault::WoodburySign) { -1.0 } else { 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(0x57_00d);
    let (mut worst_oracle, mut worst_resid) = (0.0f64, 0.0f64);
    let instances = 200;
    for _ in 0..instances {
        let d = rng.random_range(1..=64);
        let s = rng.random_range(1..=8);
        let lambda = [1e-4, 1e-2, 1.0][rng.random_range(0..3)];
        let cols: Vec<Vec<f64>> = (0..s).map(|_| (0..d).map(|_| normal(&mut rng)).collect()).collect();
        let g: Vec<f64> = (0..d).map(|_| normal(&mut rng)).collect();
        let mut h = GradHistory::new(s, lambda)?;
        for c in &cols {
            h.push(&Matrix::column_vector(c))?;
        }
        let out = h.apply_inverse_fim_with_correction_sign(&Matrix::column_vector(&g), sign)?;
        let fim: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| cols.iter().map(|c| c[i] * c[j]).sum::<f64>() + if i == j { lambda } else { 0.0 })
                    .collect()
            })
            .collect();
        let oracle = dense_solve(&fim, &g);
        let diff: Vec<f64> = out.as_slice().iter().zip(&oracle).map(|(a, b)| a - b).collect();
        worst_oracle = worst_oracle.max(max_abs(&diff) / max_abs(&oracle));
        let back: Vec<f64> = fim
            .iter()
            .map(|row| row.iter().zip(out.as_slice()).map(|(a, b)| a * b).sum())
            .collect();
        let resid: Vec<f64> = back.iter().zip(&g).map(|(a, b)| a - b).collect();
        worst_resid = worst_resid.max(max_abs(&resid) / max_abs(&g));
    }
    let passed = worst_oracle <= 1e-10 && worst_resid <= 1e-8;
    Ok((
        passed,
        format!("{instances} instances, oracle rel err {worst_oracle:.2e}, residual {worst_resid:.2e}"),
    ))
}

fn gram_error(f: &Matrix) -> f64 {
    let g = f.t_matmul(f).expect("conformable");
    let mut worst = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            worst = worst.max((g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

fn svd() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5_7d);
    let (mut ortho, mut recon) = (0.0f64, 0.0f64);
    let cases = 100;
    for _ in 0..cases {
        let n = rng.random_range(1..=24);
        let m = rng.random_range(1..=24);
        let r = rng.random_range(1..=n.min(m));
        let a = random(&mut rng, n, m);
        let f = compact_svd(&a, r)?;
        ortho = ortho.max(gram_error(&f.p)).max(gram_error(&f.q));

        let k = rng.random_range(1..=r);
        let low = random(&mut rng, n, k).matmul(&random(&mut rng, k, m))?;
        let f = compact_svd(&low, r)?;
        let err = f.reconstruct().sub(&low)?.frobenius_norm() / low.frobenius_norm();
        recon = recon.max(err);
    }
    Ok((
        ortho <= 1e-10 && recon <= 1e-8,
        format!("{cases} cases, orthogonality {ortho:.2e}, exact-rank reconstruction {recon:.2e}"),
    ))
}

fn cholesky() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc401);
    let mut worst = 0.0f64;
    let solves = 1000;
    for t in 0..solves {
        let k = 1 + t % 16;
        let b = random(&mut rng, k, k + 2);
        let mut spd = b.matmul_t(&b)?;
        for i in 0..k {
            spd.as_mut_slice()[i * k + i] += 1e-3;
        }
        let y: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let z = solve_cholesky(&cholesky_factor(&spd)?, &y)?;
        let resid: Vec<f64> = (0..k)
            .map(|i| spd.row(i).iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() - y[i])
            .collect();
        worst = worst.max(max_abs(&resid) / max_abs(&y));
    }
    Ok((worst <= 1e-9, format!("{solves} SPD solves, worst residual {worst:.2e}")))
}

fn gradcheck_suite() -> Result<(bool, String)> {
    let mut parts = Vec::new();
    let mut passed = true;
    for kind in TaskKind::ALL {
        let task = make_task(kind, 0)?;
        let gc = gradcheck::check_task(&task, 16, 0)?;
        passed &= gc.passed(gradcheck::TOLERANCE);
        parts.push(format!("{kind} {:.2e} ({} params)", gc.max_rel_error, gc.checked));
    }
    Ok((passed, parts.join(", ")))
}

/// Longhand scalar Adam with bias correction and ε inside the root.
fn scalar_adam(g: f64, m: &mut f64, v: &mut f64, t: i32) -> f64 {
    *m = 0.9 * *m + (1.0 - 0.9) * g;
    *v = 0.999 * *v + (1.0 - 0.999) * g * g;
    let mh = *m / (1.0 - 0.9f64.powf(t as f64));
    let vh = *v / (1.0 - 0.999f64.powf(t as f64));
    mh / (vh + 1e-8).sqrt()
}

fn mode_reduction() -> Result<(bool, String)> {
    let task = make_task(TaskKind::LowrankRegression, 0)?;
    let tc = TrainConfig { budget: 50, timing: false, ..TrainConfig::default() };
    let base = OptimizerConfig { lr: 3e-2, refresh_period: 20, ..OptimizerConfig::default() };
    let galore = train(&task, &OptimizerConfig { mode: Mode::Galore, ..base.clone() }, &tc)?;
    let natural = train(&task, &OptimizerConfig { mode: Mode::NaturalGalore, history: 0, ..base }, &tc)?;
    let bitwise = galore.optimizer.slots().iter().zip(natural.optimizer.slots()).all(|(a, b)| {
        a.theta().as_slice().iter().zip(b.theta().as_slice()).all(|(x, y)| x.to_bits() == y.to_bits())
    }) && galore.records.iter().zip(&natural.records).all(|(a, b)| {
        a.train_loss.to_bits() == b.train_loss.to_bits() && a.val_loss.to_bits() == b.val_loss.to_bits()
    });

    let mut opt = Optimizer::new(OptimizerConfig { mode: Mode::Adam, lr: 0.05, ..OptimizerConfig::default() })?;
    opt.add_param("x", Matrix::from_vec(1, 1, vec![0.25])?)?;
    let (mut x, mut m, mut v) = (0.25f64, 0.0, 0.0);
    let mut drift = 0.0f64;
    for t in 1..=100 {
        let theta = opt.param("x").expect("bound")[(0, 0)];
        let g = Matrix::from_vec(1, 1, vec![theta - 3.0 + theta.cos()])?;
        opt.step(&BTreeMap::from([("x".to_string(), g)]))?;
        x -= 0.05 * scalar_adam(x - 3.0 + x.cos(), &mut m, &mut v, t);
        drift = drift.max((opt.param("x").expect("bound")[(0, 0)] - x).abs());
    }
    Ok((
        bitwise && drift <= 1e-14,
        format!("galore vs empty-history natural bitwise: {bitwise}, adam vs scalar reference drift {drift:.2e}"),
    ))
}
