//! Leading singular triplets by block subspace iteration.
//!
//! Each sweep multiplies an orthonormal block through `A` and `Aᵀ` and then
//! runs a Rayleigh–Ritz step: the small `m × k` matrix `AᵀP` is diagonalized by
//! one-sided Jacobi rotations, which yields ordered singular values and
//! rotates the block onto the current singular-vector estimates. The block is
//! oversampled past `r` so the leading `r` values converge at the rate
//! `σ_{k+1}/σ_r` instead of `σ_{r+1}/σ_r`.

use alloc::vec;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 1000;
/// Relative change in the leading singular values that counts as converged.
pub const TOLERANCE: f64 = 1e-10;

const JACOBI_MAX_SWEEPS: usize = 80;

/// `A ≈ P · diag(σ) · Qᵀ` restricted to the leading `r` triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactSvd {
    pub p: Matrix,
    pub sigma: Vec<f64>,
    pub q: Matrix,
    pub iterations: usize,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `P · diag(σ) · Qᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut ps = self.p.clone();
        for i in 0..ps.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                ps[(i, j)] *= s;
            }
        }
        ps.matmul_t(&self.q).expect("factor shapes agree")
    }
}

/// Leading-`r` compact SVD of `a`.
///
/// Columns of `P` are sign-normalized so their largest-magnitude entry is
/// positive; `Q` follows the same flips.
pub fn compact_svd(a: &Matrix, r: usize) -> Result<CompactSvd> {
    let (n, m) = a.shape();
    let kmax = n.min(m);
    if r == 0 || r > kmax {
        return Err(Error::InvalidInput(alloc::format!(
            "compact_svd: rank {r} outside 1..={kmax} for a {n}x{m} matrix"
        )));
    }
    if !a.is_finite() {
        return Err(Error::InvalidInput("compact_svd: non-finite input".into()));
    }
    let k = kmax.min(2 * r + 8);

    let mut rng = SplitMix64(0x9E37_79B9_7F4A_7C15);
    let start = Matrix::from_fn(m, k, |_, _| rng.next_signed());
    let mut q = orthonormalize(&start);
    let mut prev: Option<Vec<f64>> = None;

    for it in 1..=MAX_ITERATIONS {
        let p = orthonormalize(&a.matmul(&q)?);
        let mut z = a.t_matmul(&p)?;
        let (w, sigma) = jacobi_columns(&mut z);

        let converged = match &prev {
            None => false,
            Some(old) => {
                let top = sigma[0];
                top == 0.0
                    || (0..r).all(|i| (sigma[i] - old[i]).abs() <= TOLERANCE * top)
            }
        };
        q = orthonormalize(&z);
        if converged {
            let p_full = p.matmul(&w)?;
            let mut p_out = Matrix::zeros(n, r);
            let mut q_out = Matrix::zeros(m, r);
            for j in 0..r {
                p_out.set_column(j, &p_full.column(j));
                q_out.set_column(j, &q.column(j));
            }
            fix_signs(&mut p_out, &mut q_out);
            return Ok(CompactSvd {
                p: p_out,
                sigma: sigma[..r].to_vec(),
                q: q_out,
                iterations: it,
            });
        }
        prev = Some(sigma);
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
    })
}

/// One-sided Jacobi on the columns of `z`.
///
/// On return the columns of `z` are mutually orthogonal and sorted by
/// decreasing norm; the accumulated orthogonal rotation `W` (so that
/// `z_out = z_in · W`) and the column norms are returned.
fn jacobi_columns(z: &mut Matrix) -> (Matrix, Vec<f64>) {
    let (rows, k) = z.shape();
    let mut w = Matrix::identity(k);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in p + 1..k {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..rows {
                    let (x, y) = (z[(i, p)], z[(i, q)]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(z, p, q, c, s);
                rotate(&mut w, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..k)
        .map(|j| libm::sqrt((0..rows).map(|i| z[(i, j)] * z[(i, j)]).sum::<f64>()))
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    let z_sorted = Matrix::from_fn(rows, k, |i, j| z[(i, order[j])]);
    let w_sorted = Matrix::from_fn(k, k, |i, j| w[(i, order[j])]);
    *z = z_sorted;
    (w_sorted, order.iter().map(|&j| norms[j]).collect())
}

fn rotate(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..a.rows() {
        let (x, y) = (a[(i, p)], a[(i, q)]);
        a[(i, p)] = c * x - s * y;
        a[(i, q)] = s * x + c * y;
    }
}

/// Orthonormal basis with the same leading span as `y`'s columns.
///
/// Columns that collapse under Gram–Schmidt (rank deficiency) are replaced by
/// the coordinate vector with the largest component outside the basis so
/// far, so the result always has orthonormal columns.
fn orthonormalize(y: &Matrix) -> Matrix {
    let (n, k) = y.shape();
    debug_assert!(k <= n);
    let scale = (0..k)
        .map(|j| column_norm(y, j))
        .fold(0.0_f64, f64::max);
    let mut out = Matrix::zeros(n, k);
    for j in 0..k {
        let mut v = y.column(j);
        let before = norm(&v);
        let mut after = orthogonalize_against(&mut v, &out, j);
        if scale == 0.0 || after <= 1e-10 * before.max(scale) {
            // Some axis keeps at least sqrt((n - j)/n) of its length.
            let mut best = (0.0, Vec::new());
            for axis in 0..n {
                let mut e = vec![0.0; n];
                e[axis] = 1.0;
                let left = orthogonalize_against(&mut e, &out, j);
                if left > best.0 {
                    best = (left, e);
                }
            }
            (after, v) = best;
        }
        for x in &mut v {
            *x /= after;
        }
        out.set_column(j, &v);
    }
    out
}

/// Two passes of modified Gram–Schmidt against the first `upto` columns of
/// `basis`; returns the remaining norm.
fn orthogonalize_against(v: &mut [f64], basis: &Matrix, upto: usize) -> f64 {
    let n = v.len();
    for _ in 0..2 {
        for c in 0..upto {
            let dot: f64 = (0..n).map(|i| basis[(i, c)] * v[i]).sum();
            for (i, x) in v.iter_mut().enumerate() {
                *x -= dot * basis[(i, c)];
            }
        }
    }
    norm(v)
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

fn column_norm(a: &Matrix, j: usize) -> f64 {
    libm::sqrt((0..a.rows()).map(|i| a[(i, j)] * a[(i, j)]).sum::<f64>())
}

/// Makes the largest-magnitude entry of every `P` column positive.
fn fix_signs(p: &mut Matrix, q: &mut Matrix) {
    for j in 0..p.cols() {
        let mut best = 0usize;
        for i in 1..p.rows() {
            if p[(i, j)].abs() > p[(best, j)].abs() {
                best = i;
            }
        }
        if p[(best, j)] < 0.0 {
            for i in 0..p.rows() {
                p[(i, j)] = -p[(i, j)];
            }
            for i in 0..q.rows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
}

/// Deterministic start-block generator.
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn next_signed(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}
