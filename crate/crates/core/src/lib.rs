//! Polynomial normal transformation models.
//!
//! A continuous marginal is approximated by a polynomial in a standard
//! normal variable, `X ≈ Σ a_k Z^k`, fitted either by matching probability
//! weighted moments or by least-squares percentile matching. Pairs of such
//! models give a closed-form polynomial relation between the correlation of
//! the normal drivers and the correlation of the marginals, which drives
//! NORTA-style generation of correlated non-normal random vectors.

pub mod cli;
pub mod config;
pub mod correlation;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod fixtures;
pub mod fit_percentile;
pub mod fit_pwm;
pub mod numerics;
pub mod poly_model;
pub mod sampler;

pub use correlation::{build_rho_polynomial, build_rz, rho_x_bounds, solve_rho_z, MomentSource, RhoPolynomial, RzOptions};
pub use distributions::{Family, QuantileTable, TargetDistribution};
pub use error::{Error, Result};
pub use fit_percentile::{fit_percentile, NodePlan};
pub use fit_pwm::{fit_pwm, normal_pwm_matrix, pwm_from_distribution, pwm_from_sample, PwmVector};
pub use poly_model::{FitMethod, PolynomialModel, MAX_DEGREE};
pub use sampler::{generate, normal_stream, sample_correlation, RngSpec, SampleMatrix, VectorModel};
