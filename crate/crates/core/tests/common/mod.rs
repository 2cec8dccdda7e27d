//! Independent reference implementations used as test oracles.
//!
//! None of these call into the crate's kernels beyond the `Matrix` container.
#![allow(dead_code)]

use natgalore_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Property-test config with a pinned generator seed, so every run draws
/// the same cases.
pub fn cases(n: u32) -> proptest::test_runner::Config {
    proptest::test_runner::Config {
        cases: n,
        rng_seed: proptest::test_runner::RngSeed::Fixed(0x6e67_6c72),
        ..proptest::test_runner::Config::default()
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

/// `Σ_k u_k v_kᵀ` of `rank` random Gaussian outer products.
pub fn planted_rank(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rank: usize) -> Matrix {
    let u = random_matrix(rng, rows, rank);
    let v = random_matrix(rng, rank, cols);
    naive_matmul(&u, &v)
}

/// Textbook triple loop, summing over `k` in ascending order from zero.
pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    let mut c = vec![0.0; a.rows() * b.cols()];
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let mut acc = 0.0;
            for k in 0..a.cols() {
                acc += a[(i, k)] * b[(k, j)];
            }
            c[i * b.cols() + j] = acc;
        }
    }
    Matrix::from_vec(a.rows(), b.cols(), c).unwrap()
}

pub fn naive_transpose(a: &Matrix) -> Matrix {
    Matrix::from_fn(a.cols(), a.rows(), |i, j| a[(j, i)])
}

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = a.row(i).to_vec();
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = m[i][n];
        for j in i + 1..n {
            acc -= m[i][j] * x[j];
        }
        x[i] = acc / m[i][i];
    }
    x
}

/// Full SVD by one-sided Jacobi applied directly to `a` (or `aᵀ` when wide).
/// Returns `(U, σ, V)` with `σ` sorted descending and `min(n, m)` columns.
pub fn jacobi_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let wide = a.rows() < a.cols();
    let work = if wide { naive_transpose(a) } else { a.clone() };
    let (n, m) = work.shape();
    let mut u: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| work[(i, j)]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..m)
        .map(|j| (0..m).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..m {
            for q in p + 1..m {
                let a_pp: f64 = u[p].iter().map(|x| x * x).sum();
                let a_qq: f64 = u[q].iter().map(|x| x * x).sum();
                let a_pq: f64 = u[p].iter().zip(&u[q]).map(|(x, y)| x * y).sum();
                if a_pq == 0.0 {
                    continue;
                }
                off = off.max(a_pq.abs() / (a_pp * a_qq).sqrt().max(f64::MIN_POSITIVE));
                let tau = (a_qq - a_pp) / (2.0 * a_pq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let (x, y) = (u[p][i], u[q][i]);
                    u[p][i] = c * x - s * y;
                    u[q][i] = s * x + c * y;
                }
                for i in 0..m {
                    let (x, y) = (v[p][i], v[q][i]);
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
            }
        }
        if off < 1e-15 {
            break;
        }
    }
    let mut triplets: Vec<(f64, Vec<f64>, Vec<f64>)> = (0..m)
        .map(|j| {
            let s: f64 = u[j].iter().map(|x| x * x).sum::<f64>().sqrt();
            let uj = if s > 0.0 { u[j].iter().map(|x| x / s).collect() } else { u[j].clone() };
            (s, uj, v[j].clone())
        })
        .collect();
    triplets.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sig: Vec<f64> = triplets.iter().map(|t| t.0).collect();
    let left = Matrix::from_fn(n, m, |i, j| triplets[j].1[i]);
    let right = Matrix::from_fn(m, m, |i, j| triplets[j].2[i]);
    if wide {
        (right, sig, left)
    } else {
        (left, sig, right)
    }
}

/// Leading `r` columns.
pub fn leading_columns(a: &Matrix, r: usize) -> Matrix {
    Matrix::from_fn(a.rows(), r, |i, j| a[(i, j)])
}

/// `‖(I − B Bᵀ) A‖_F` for orthonormal `A`, `B`: an upper bound on the sine of
/// the largest principal angle between their spans.
pub fn subspace_gap(a: &Matrix, b: &Matrix) -> f64 {
    let bta = naive_matmul(&naive_transpose(b), a);
    let proj = naive_matmul(b, &bta);
    let mut s = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let d = a[(i, j)] - proj[(i, j)];
            s += d * d;
        }
    }
    s.sqrt()
}

pub fn gram_error(f: &Matrix) -> f64 {
    let g = naive_matmul(&naive_transpose(f), f);
    let mut worst = 0.0f64;
    for i in 0..g.rows() {
        for j in 0..g.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn inf_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Dense `(λI + GGᵀ)⁻¹ g` with `G` given column-wise.
pub fn dense_inverse_fim(columns: &[Vec<f64>], lambda: f64, g: &[f64]) -> Vec<f64> {
    let f = dense_fim(columns, lambda, g.len());
    gauss_solve(&f, g)
}

pub fn dense_fim(columns: &[Vec<f64>], lambda: f64, d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| {
        let mut v = if i == j { lambda } else { 0.0 };
        for c in columns {
            v += c[i] * c[j];
        }
        v
    })
}

pub fn dense_matvec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(x).map(|(p, q)| p * q).sum())
        .collect()
}

/// Scalar Adam, written out longhand.
pub struct ScalarAdam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub eps_inside: bool,
    pub bias_correction: bool,
    pub m: f64,
    pub v: f64,
    pub t: i32,
}

impl ScalarAdam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        ScalarAdam {
            beta1,
            beta2,
            eps,
            eps_inside: true,
            bias_correction: true,
            m: 0.0,
            v: 0.0,
            t: 0,
        }
    }

    pub fn direction(&mut self, g: f64) -> f64 {
        self.t += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g;
        let (mh, vh) = if self.bias_correction {
            (
                self.m / (1.0 - self.beta1.powf(self.t as f64)),
                self.v / (1.0 - self.beta2.powf(self.t as f64)),
            )
        } else {
            (self.m, self.v)
        };
        if self.eps_inside {
            mh / (vh + self.eps).sqrt()
        } else {
            mh / (vh.sqrt() + self.eps)
        }
    }
}
