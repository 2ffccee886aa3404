//! Numerical building blocks: normal functions, incomplete gamma/beta,
//! quadrature, dense linear algebra and scalar root finding.

mod linalg;
mod normal;
mod quadrature;
mod roots;
mod special;

pub use linalg::{cholesky, determinant, least_squares, solve_linear, Factorization, LeastSquares};
pub use normal::{normal_cdf, normal_pdf, normal_quantile, normal_sf};
pub use quadrature::{integrate, normal_expectation, QuadratureSpec};
pub use roots::{find_root_bracketed, find_root_monotone, find_root_newton, RootTolerance};
pub use special::{gamma, ln_gamma, reg_inc_beta, reg_inc_gamma, reg_inc_gamma_upper};

/// Neumaier-compensated sum of the terms after ordering them by increasing
/// magnitude.
pub fn compensated_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut sum = 0.0;
    let mut c = 0.0;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancellation() {
        let v = compensated_sum(vec![1e16, 1.0, -1e16, 1.0]);
        assert_eq!(v, 2.0);
    }
}
