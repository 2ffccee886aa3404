//! Dense linear algebra used by the fitting and correlation layers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// LU factorization with partial pivoting, plus the diagnostics that the
/// fitters report alongside their solutions.
#[derive(Debug, Clone)]
pub struct Factorization {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub det: f64,
    /// Smallest |U_ii| divided by the largest |U_ii|.
    pub min_pivot_ratio: f64,
}

impl Factorization {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::domain(format!(
                "expected a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("matrix has non-finite entries"));
        }
        let lu = a.clone().lu();
        let det = lu.determinant();
        let u = lu.u();
        let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let min_pivot_ratio = if max > 0.0 { min / max } else { 0.0 };
        Ok(Self {
            lu,
            det,
            min_pivot_ratio,
        })
    }

    pub fn solve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if self.min_pivot_ratio == 0.0 {
            return Err(Error::Singular("zero pivot in LU factorization".into()));
        }
        self.lu
            .solve(y)
            .ok_or_else(|| Error::Singular("LU solve failed".into()))
    }
}

/// Solves `A x = y` by partial-pivoting LU.
pub fn solve_linear(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != y.len() {
        return Err(Error::domain("right-hand side length does not match matrix"));
    }
    Factorization::new(a)?.solve(y)
}

/// Determinant from the same LU factorization used by [`solve_linear`].
pub fn determinant(a: &DMatrix<f64>) -> Result<f64> {
    Ok(Factorization::new(a)?.det)
}

/// Lower-triangular Cholesky factor L with L·Lᵀ = A.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !a.is_square() {
        return Err(Error::domain("cholesky requires a square matrix"));
    }
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            let scale = a[(i, j)].abs().max(a[(j, i)].abs()).max(1.0);
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * scale {
                return Err(Error::NotPositiveDefinite(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    a.clone()
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::NotPositiveDefinite("cholesky factorization failed".into()))
}

/// Outcome of a least-squares solve.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    pub solution: DVector<f64>,
    pub residual_norm: f64,
    /// Smallest |R_ii| over the largest, after column scaling.
    pub min_diag_ratio: f64,
}

/// Minimizes ‖A x − y‖₂ by Householder QR on the max-abs column-scaled
/// design matrix.
pub fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquares> {
    let (m, k) = a.shape();
    if m != y.len() {
        return Err(Error::domain("right-hand side length does not match rows"));
    }
    if m < k {
        return Err(Error::domain(format!(
            "least squares needs at least as many rows ({m}) as columns ({k})"
        )));
    }
    let mut scaled = a.clone();
    let mut scales = vec![1.0; k];
    for (j, s) in scales.iter_mut().enumerate() {
        let col_max = scaled.column(j).amax();
        if col_max == 0.0 || !col_max.is_finite() {
            return Err(Error::Conditioning {
                message: format!("design column {j} is zero or non-finite"),
                det: 0.0,
                pivot_ratio: 0.0,
            });
        }
        *s = col_max;
        scaled.column_mut(j).unscale_mut(col_max);
    }
    let qr = scaled.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if max > 0.0 { min / max } else { 0.0 };
    if ratio < 1e-14 {
        return Err(Error::Conditioning {
            message: "design matrix is rank deficient".into(),
            det: diag.iter().product(),
            pivot_ratio: ratio,
        });
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, k).into_owned();
    let mut x = r
        .solve_upper_triangular(&head)
        .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
    for (xi, s) in x.iter_mut().zip(&scales) {
        *xi /= s;
    }
    let residual = a * &x - y;
    Ok(LeastSquares {
        solution: x,
        residual_norm: residual.norm(),
        min_diag_ratio: ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_solve() {
        let a = DMatrix::<f64>::identity(4, 4);
        let y = DVector::from_vec(vec![1.0, -2.0, 3.5, 0.25]);
        assert_eq!(solve_linear(&a, &y).unwrap(), y);
    }

    #[test]
    fn singular_solve_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve_linear(&a, &y), Err(Error::Singular(_))));
    }

    #[test]
    fn cholesky_2x2_closed_form() {
        let r = 0.907;
        let a = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
        let l = cholesky(&a).unwrap();
        assert!((l[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 0)] - r).abs() < 1e-15);
        assert!((l[(1, 1)] - (1.0 - r * r).sqrt()).abs() < 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.5, 1.5, 1.0]);
        assert!(matches!(cholesky(&a), Err(Error::NotPositiveDefinite(_))));
    }

    #[test]
    fn least_squares_exact_line() {
        let xs = [0.0f64, 1.0, 2.0, 3.0];
        let a = DMatrix::from_fn(4, 2, |i, j| xs[i].powi(j as i32));
        let y = DVector::from_iterator(4, xs.iter().map(|x| 2.0 + 0.5 * x));
        let ls = least_squares(&a, &y).unwrap();
        assert!((ls.solution[0] - 2.0).abs() < 1e-12);
        assert!((ls.solution[1] - 0.5).abs() < 1e-12);
        assert!(ls.residual_norm < 1e-12);
    }

    #[test]
    fn least_squares_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(least_squares(&a, &y), Err(Error::Conditioning { .. })));
    }

    fn random_matrix(n: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| vals[i * n + j])
    }

    proptest! {
        #[test]
        fn solve_agrees_with_product(vals in prop::collection::vec(-1.0f64..1.0, 25),
                                     y in prop::collection::vec(-1.0f64..1.0, 5)) {
            // Diagonal boost keeps the matrix well conditioned.
            let a = random_matrix(5, &vals) + DMatrix::identity(5, 5) * 6.0;
            let y = DVector::from_vec(y);
            let x = solve_linear(&a, &y).unwrap();
            let back = &a * &x;
            for i in 0..5 {
                prop_assert!((back[i] - y[i]).abs() <= 1e-9 * y.amax().max(1.0));
            }
            let det = determinant(&a).unwrap();
            prop_assert!((det - a.determinant()).abs() <= 1e-9 * det.abs());
        }

        #[test]
        fn cholesky_round_trip(vals in prop::collection::vec(-1.0f64..1.0, 16)) {
            let m = random_matrix(4, &vals);
            let a = m.transpose() * &m + DMatrix::identity(4, 4);
            let l = cholesky(&a).unwrap();
            let back = &l * l.transpose();
            for (u, v) in back.iter().zip(a.iter()) {
                prop_assert!((u - v).abs() <= 1e-12);
            }
        }
    }
}
