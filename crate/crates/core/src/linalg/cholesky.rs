use alloc::vec;
use alloc::vec::Vec;

use super::Matrix;
use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`cholesky_factor`].
const SYMMETRY_TOL: f64 = 1e-12;

/// Lower-triangular `L` with `LLᵀ = S`.
///
/// The strictly upper triangle is exactly zero and the diagonal is strictly
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    l: Matrix,
}

impl CholeskyFactor {
    pub fn l(&self) -> &Matrix {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Smallest diagonal entry of `L`.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.l[(i, i)])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn solve(&self, y: &[f64]) -> Result<Vec<f64>> {
        solve_cholesky(self, y)
    }
}

/// Factors a symmetric positive-definite matrix.
pub fn cholesky_factor(s: &Matrix) -> Result<CholeskyFactor> {
    let k = s.rows();
    if s.cols() != k {
        return Err(Error::ShapeMismatch {
            op: "cholesky_factor",
            expected: (k, k),
            found: s.shape(),
        });
    }
    let scale = s.max_abs().max(f64::MIN_POSITIVE);
    for i in 0..k {
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(alloc::format!(
                    "cholesky_factor: matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let mut l = Matrix::zeros(k, k);
    for j in 0..k {
        let mut d = s[(j, j)];
        for p in 0..j {
            d -= l[(j, p)] * l[(j, p)];
        }
        // NaN lands here too.
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let djj = libm::sqrt(d);
        l[(j, j)] = djj;
        for i in j + 1..k {
            let mut acc = s[(i, j)];
            for p in 0..j {
                acc -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = acc / djj;
        }
    }
    Ok(CholeskyFactor { l })
}

/// Solves `LLᵀz = y` by forward then backward substitution.
pub fn solve_cholesky(f: &CholeskyFactor, y: &[f64]) -> Result<Vec<f64>> {
    let k = f.dim();
    if y.len() != k {
        return Err(Error::LengthMismatch {
            op: "solve_cholesky",
            expected: k,
            found: y.len(),
        });
    }
    let l = &f.l;
    // L w = y
    let mut w = vec![0.0; k];
    for i in 0..k {
        let mut acc = y[i];
        for p in 0..i {
            acc -= l[(i, p)] * w[p];
        }
        w[i] = acc / l[(i, i)];
    }
    // Lᵀ z = w, in place
    for i in (0..k).rev() {
        let mut acc = w[i];
        for p in i + 1..k {
            acc -= l[(p, i)] * w[p];
        }
        w[i] = acc / l[(i, i)];
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let f = cholesky_factor(&Matrix::identity(4)).unwrap();
        assert_eq!(f.l(), &Matrix::identity(4));
        assert_eq!(f.solve(&[1.0, -2.0, 3.0, 0.5]).unwrap(), alloc::vec![1.0, -2.0, 3.0, 0.5]);
    }

    #[test]
    fn two_by_two_by_hand() {
        // [[4,2],[2,3]] = [[2,0],[1,√2]]·[[2,1],[0,√2]]
        let s = Matrix::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let f = cholesky_factor(&s).unwrap();
        assert_eq!(f.l()[(0, 0)], 2.0);
        assert_eq!(f.l()[(0, 1)], 0.0);
        assert_eq!(f.l()[(1, 0)], 1.0);
        assert!((f.l()[(1, 1)] - libm::sqrt(2.0)).abs() < 1e-15);
        let z = f.solve(&[4.0, 2.0]).unwrap();
        assert!((z[0] - 1.0).abs() < 1e-15 && z[1].abs() < 1e-15);
    }

    #[test]
    fn indefinite_reports_pivot() {
        let s = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert_eq!(cholesky_factor(&s), Err(Error::NotPositiveDefinite { pivot: 1 }));
        let z = Matrix::from_rows(&[&[0.0]]);
        assert_eq!(cholesky_factor(&z), Err(Error::NotPositiveDefinite { pivot: 0 }));
    }

    #[test]
    fn nan_is_not_positive_definite() {
        let mut s = Matrix::identity(2);
        s[(1, 1)] = f64::NAN;
        assert!(matches!(cholesky_factor(&s), Err(Error::NotPositiveDefinite { pivot: 1 })));
    }

    #[test]
    fn rejects_asymmetric_and_non_square() {
        let s = Matrix::from_rows(&[&[2.0, 1.0], &[0.0, 2.0]]);
        assert!(matches!(cholesky_factor(&s), Err(Error::InvalidInput(_))));
        assert!(matches!(
            cholesky_factor(&Matrix::zeros(2, 3)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn solve_rejects_length_mismatch() {
        let f = cholesky_factor(&Matrix::identity(3)).unwrap();
        assert!(matches!(f.solve(&[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
    }
}
