//! The polynomial relation between the correlation of two polynomial
//! models and the correlation of their normal drivers.
//!
//! For X₁ = Σ a₁ⱼ Z₁ʲ and X₂ = Σ a₂ₖ Z₂ᵏ with corr(Z₁, Z₂) = ρ_z,
//! E[X₁X₂] = Σⱼₖ a₁ⱼ a₂ₖ E[Z₁ʲ Z₂ᵏ] is a polynomial in ρ_z, so
//! ρ_x σ₁σ₂ + μ₁μ₂ = Σᵢ bᵢ ρ_zⁱ and the required ρ_z is a root of that
//! polynomial on [−1, 1].

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{cholesky, compensated_sum, find_root_newton};
use crate::poly_model::{PolynomialModel, MAX_DEGREE};

/// Slack allowed when a requested correlation sits on a feasibility bound.
pub const BOUND_SLACK: f64 = 1e-9;

fn factorial(n: u32) -> u128 {
    (1..=n as u128).product()
}

/// Coefficients (index = power of ρ_z) of E[Z₁ⁱ Z₂ʲ] for standard normals
/// with correlation ρ_z. Computed in exact integer arithmetic and rounded
/// once to f64.
pub fn bivariate_normal_moment(i: usize, j: usize) -> Vec<f64> {
    assert!(i <= MAX_DEGREE && j <= MAX_DEGREE, "order above {MAX_DEGREE}");
    let mut coeffs = vec![0.0; i.min(j) + 1];
    if (i + j) % 2 == 1 {
        return coeffs;
    }
    let odd = i % 2 == 1;
    let (s, t) = (i as u32 / 2, j as u32 / 2);
    for k in 0..=s.min(t) {
        // (2s)!(2t)!·2^{2k} / (2^{s+t} (s−k)! (t−k)! (2k)!) for even orders,
        // (2s+1)!(2t+1)!·2^{2k} / (2^{s+t} (s−k)! (t−k)! (2k+1)!) for odd.
        let left = (factorial(i as u32) / factorial(s - k)) >> (s - k);
        let right = (factorial(j as u32) / factorial(t - k)) >> (t - k);
        let power = if odd { 2 * k + 1 } else { 2 * k };
        let value = left * right / factorial(power);
        coeffs[power as usize] = value as f64;
    }
    coeffs
}

/// Which means and standard deviations enter the normalization of
/// E[X₁X₂] into a correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum MomentSource {
    /// Moments implied by the polynomial models themselves.
    Model,
    /// Externally supplied moments, typically those of the target marginals.
    Target {
        mu1: f64,
        sigma1: f64,
        mu2: f64,
        sigma2: f64,
    },
}

/// E[X₁X₂] = Σ bᵢ ρ_zⁱ together with the moments used to turn it into a
/// correlation g(ρ_z).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoPolynomial {
    pub b: Vec<f64>,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl RhoPolynomial {
    pub fn degree(&self) -> usize {
        self.b.len() - 1
    }

    /// Σ bᵢ ρⁱ.
    pub fn product_moment(&self, rho: f64) -> f64 {
        self.b.iter().rev().fold(0.0, |acc, &c| acc * rho + c)
    }

    /// g(ρ_z) = (Σ bᵢ ρ_zⁱ − μ₁μ₂) / (σ₁σ₂).
    pub fn g(&self, rho: f64) -> f64 {
        (self.product_moment(rho) - self.mu1 * self.mu2) / (self.sigma1 * self.sigma2)
    }

    pub fn dg(&self, rho: f64) -> f64 {
        let n = self.degree();
        if n == 0 {
            return 0.0;
        }
        let mut acc = n as f64 * self.b[n];
        for i in (1..n).rev() {
            acc = acc * rho + i as f64 * self.b[i];
        }
        acc / (self.sigma1 * self.sigma2)
    }

    /// Whether g is nondecreasing on a uniform grid of `points` over [−1, 1].
    pub fn is_nondecreasing(&self, points: usize) -> bool {
        let step = 2.0 / (points - 1) as f64;
        let mut prev = self.g(-1.0);
        for i in 1..points {
            let v = self.g(-1.0 + step * i as f64);
            let tol = 1e-12 * v.abs().max(1.0);
            if v < prev - tol {
                return false;
            }
            prev = v;
        }
        true
    }

    fn check_spread(&self) -> Result<()> {
        let s = self.sigma1 * self.sigma2;
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegenerateMarginal(format!(
                "σ₁σ₂ = {s}; correlation is undefined"
            )));
        }
        Ok(())
    }
}

/// Assembles the ρ_z polynomial for a model pair.
pub fn build_rho_polynomial(
    m1: &PolynomialModel,
    m2: &PolynomialModel,
    source: MomentSource,
) -> Result<RhoPolynomial> {
    let (a1, a2) = (m1.coeffs(), m2.coeffs());
    let n = m1.degree().max(m2.degree());
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    for (j, &x) in a1.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (k, &y) in a2.iter().enumerate() {
            if y == 0.0 || (j + k) % 2 == 1 {
                continue;
            }
            for (i, c) in bivariate_normal_moment(j, k).into_iter().enumerate() {
                if c != 0.0 {
                    buckets[i].push(x * y * c);
                }
            }
        }
    }
    let b: Vec<f64> = buckets.into_iter().map(compensated_sum).collect();
    let (mu1, sigma1, mu2, sigma2) = match source {
        MomentSource::Model => {
            let (mu1, sigma1) = m1.model_moments()?;
            let (mu2, sigma2) = m2.model_moments()?;
            (mu1, sigma1, mu2, sigma2)
        }
        MomentSource::Target {
            mu1,
            sigma1,
            mu2,
            sigma2,
        } => (mu1, sigma1, mu2, sigma2),
    };
    Ok(RhoPolynomial {
        b,
        mu1,
        mu2,
        sigma1,
        sigma2,
    })
}

/// Attainable correlation range (g(−1), g(1)), clamped to [−1, 1].
pub fn rho_x_bounds(rp: &RhoPolynomial) -> Result<(f64, f64)> {
    rp.check_spread()?;
    Ok((rp.g(-1.0).clamp(-1.0, 1.0), rp.g(1.0).clamp(-1.0, 1.0)))
}

/// The normal-space correlation ρ_z ∈ [−1, 1] with g(ρ_z) = ρ_x and
/// ρ_z·ρ_x ≥ 0.
pub fn solve_rho_z(rp: &RhoPolynomial, rho_x: f64) -> Result<f64> {
    solve_rho_z_for_pair(rp, rho_x, (0, 1))
}

fn solve_rho_z_for_pair(rp: &RhoPolynomial, rho_x: f64, pair: (usize, usize)) -> Result<f64> {
    let (lower, upper) = rho_x_bounds(rp)?;
    if !rho_x.is_finite() || rho_x < lower - BOUND_SLACK || rho_x > upper + BOUND_SLACK {
        return Err(Error::InfeasibleCorrelation {
            i: pair.0,
            j: pair.1,
            rho_x,
            lower,
            upper,
        });
    }
    if rho_x == 0.0 {
        return Ok(0.0);
    }
    let target = rho_x.clamp(lower, upper);
    let (lo, hi) = if target > 0.0 { (0.0, 1.0) } else { (-1.0, 0.0) };
    let f = |r: f64| rp.g(r) - target;
    // g(0) may differ from 0 slightly when the moments are not model-implied;
    // the sign constraint keeps the root on the side of ρ_x.
    if f(lo) * f(hi) > 0.0 {
        return Ok(if f(lo).abs() < f(hi).abs() { lo } else { hi });
    }
    find_root_newton(f, |r| rp.dg(r), lo, hi, 1e-14)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RzOptions {
    /// Replace a non-positive-definite ρ_z matrix by its eigenvalue-clipped
    /// nearest correlation matrix instead of failing.
    pub nearest_pd: bool,
}

/// Normal-space correlation matrix and its Cholesky factor.
#[derive(Debug, Clone)]
pub struct RzSolution {
    pub rz: DMatrix<f64>,
    pub l: DMatrix<f64>,
    /// Whether eigenvalue clipping modified the solved matrix.
    pub repaired: bool,
}

/// Validates a target correlation matrix: square, symmetric, unit
/// diagonal, entries in [−1, 1] and positive definite.
pub fn validate_correlation_matrix(rx: &DMatrix<f64>) -> Result<()> {
    if !rx.is_square() || rx.nrows() == 0 {
        return Err(Error::schema("correlation", "matrix must be square and non-empty"));
    }
    let n = rx.nrows();
    for i in 0..n {
        if (rx[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::schema(
                "correlation",
                format!("diagonal entry ({i}, {i}) is {}, expected 1", rx[(i, i)]),
            ));
        }
        for j in 0..n {
            let v = rx[(i, j)];
            if !v.is_finite() || v.abs() > 1.0 {
                return Err(Error::schema(
                    "correlation",
                    format!("entry ({i}, {j}) = {v} is outside [-1, 1]"),
                ));
            }
            if (v - rx[(j, i)]).abs() > 1e-12 {
                return Err(Error::schema(
                    "correlation",
                    format!("matrix is not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    cholesky(rx).map_err(|_| {
        Error::NotPositiveDefinite("target correlation matrix is not positive definite".into())
    })?;
    Ok(())
}

/// Solves every off-diagonal entry of `rx` for its normal-space
/// counterpart and factors the result.
pub fn build_rz(models: &[PolynomialModel], rx: &DMatrix<f64>, opts: RzOptions) -> Result<RzSolution> {
    build_rz_with(models, rx, None, opts)
}

/// As [`build_rz`], optionally normalizing with externally supplied
/// (μ, σ) per marginal instead of the model-implied moments.
pub fn build_rz_with(
    models: &[PolynomialModel],
    rx: &DMatrix<f64>,
    target_moments: Option<&[(f64, f64)]>,
    opts: RzOptions,
) -> Result<RzSolution> {
    validate_correlation_matrix(rx)?;
    let m = models.len();
    if rx.nrows() != m {
        return Err(Error::schema(
            "correlation",
            format!("matrix is {0}x{0} but there are {m} marginals", rx.nrows()),
        ));
    }
    if let Some(tm) = target_moments {
        if tm.len() != m {
            return Err(Error::domain("one (mean, std) pair is needed per marginal"));
        }
    }
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .collect();
    let solved: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let source = match target_moments {
                None => MomentSource::Model,
                Some(tm) => MomentSource::Target {
                    mu1: tm[i].0,
                    sigma1: tm[i].1,
                    mu2: tm[j].0,
                    sigma2: tm[j].1,
                },
            };
            let rp = build_rho_polynomial(&models[i], &models[j], source)?;
            solve_rho_z_for_pair(&rp, rx[(i, j)], (i, j))
        })
        .collect();
    let mut rz = DMatrix::identity(m, m);
    for (&(i, j), v) in pairs.iter().zip(solved) {
        let v = v?;
        rz[(i, j)] = v;
        rz[(j, i)] = v;
    }
    match cholesky(&rz) {
        Ok(l) => Ok(RzSolution {
            rz,
            l,
            repaired: false,
        }),
        Err(_) if opts.nearest_pd => {
            let fixed = nearest_correlation(&rz);
            let l = cholesky(&fixed)?;
            Ok(RzSolution {
                rz: fixed,
                l,
                repaired: true,
            })
        }
        Err(_) => Err(Error::NotPositiveDefinite(
            "equivalent normal correlation matrix is not positive definite; \
             rerun with the nearest-PD option to clip its eigenvalues"
                .into(),
        )),
    }
}

/// Eigenvalue floor applied by [`nearest_correlation`].
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Clips the eigenvalues of a symmetric matrix at [`EIGEN_FLOOR`] and
/// rescales the result back to unit diagonal.
pub fn nearest_correlation(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = a.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
    let v = &eig.eigenvectors;
    let mut b = v * DMatrix::from_diagonal(&clipped) * v.transpose();
    let d: Vec<f64> = (0..b.nrows()).map(|i| b[(i, i)].sqrt()).collect();
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            b[(i, j)] /= d[i] * d[j];
        }
    }
    for i in 0..b.nrows() {
        b[(i, i)] = 1.0;
        for j in 0..i {
            let s = 0.5 * (b[(i, j)] + b[(j, i)]);
            b[(i, j)] = s;
            b[(j, i)] = s;
        }
    }
    b
}
