//! Coefficient estimation by probability-weighted-moment matching.
//!
//! The r-th PWM of the target, β_r = E[F(X)^r X], is linear in the model
//! coefficients: β_r = Σ_k a_k M[r][k] with M[r][k] = ∫ Φ(z)^r z^k φ(z) dz.
//! Matching the first n + 1 PWMs is therefore a single (n+1)×(n+1) solve.

use std::cell::RefCell;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::TargetDistribution;
use crate::error::{Error, Result};
use crate::numerics::{integrate, normal_cdf, normal_pdf, Factorization, QuadratureSpec};
use crate::poly_model::{FitMethod, PolynomialModel, MAX_DEGREE};

/// Highest degree fitted from analytic PWMs without an explicit override.
pub const ANALYTIC_DEGREE_CAP: usize = 12;
/// Highest degree fitted from sample PWMs without an explicit override.
pub const SAMPLE_DEGREE_CAP: usize = 9;
/// Minimum accepted |U_ii| ratio in the LU factorization.
pub const MIN_PIVOT_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Provenance {
    Analytic,
    Sample { size: usize },
}

/// β₀ … β_n of a marginal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PwmVector {
    pub beta: Vec<f64>,
    pub provenance: Provenance,
}

impl PwmVector {
    pub fn order(&self) -> usize {
        self.beta.len() - 1
    }
}

/// β_r = ∫₀¹ F⁻¹(p) p^r dp for r = 0 … n, integrated in z = Φ⁻¹(p) over
/// the truncated normal window so that unbounded quantiles are damped by φ.
pub fn pwm_from_distribution(d: &TargetDistribution, n: usize) -> Result<PwmVector> {
    pwm_from_distribution_with(d, n, &QuadratureSpec::tight())
}

pub fn pwm_from_distribution_with(
    d: &TargetDistribution,
    n: usize,
    spec: &QuadratureSpec,
) -> Result<PwmVector> {
    check_order(n)?;
    spec.validate()?;
    let t = spec.normal_truncation;
    let cache: RefCell<HashMap<u64, f64>> = RefCell::new(HashMap::new());
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let marginal = |z: f64| -> f64 {
        if let Some(&v) = cache.borrow().get(&z.to_bits()) {
            return v;
        }
        let v = match d.quantile_of_z(z) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        };
        cache.borrow_mut().insert(z.to_bits(), v);
        v
    };

    let scale = d.std().max(d.mean().abs()).max(f64::MIN_POSITIVE);
    for (z, tail) in [(-t, "lower"), (t, "upper")] {
        let edge = marginal(z).abs() * normal_pdf(z);
        if !edge.is_finite() || edge > 1e-10 * scale {
            return Err(Error::Integration {
                context: format!(
                    "{} tail of {} does not decay within |z| ≤ {t}",
                    tail,
                    d.label()
                ),
                estimate: f64::NAN,
                error: edge,
            });
        }
    }

    let mut beta = Vec::with_capacity(n + 1);
    for r in 0..=n {
        let f = |z: f64| marginal(z) * normal_cdf(z).powi(r as i32) * normal_pdf(z);
        let lower = integrate(f, -t, 0.0, spec);
        let upper = integrate(f, 0.0, t, spec);
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        let value = lower
            .and_then(|a| upper.map(|b| a + b))
            .map_err(|e| relabel(e, &format!("beta_{r} of {}", d.label())))?;
        beta.push(value);
    }
    let tol = 1e-8 * scale;
    if (beta[0] - d.mean()).abs() > tol {
        return Err(Error::Integration {
            context: format!(
                "beta_0 of {} disagrees with the mean {} (tail truncation)",
                d.label(),
                d.mean()
            ),
            estimate: beta[0],
            error: (beta[0] - d.mean()).abs(),
        });
    }
    Ok(PwmVector {
        beta,
        provenance: Provenance::Analytic,
    })
}

/// Unbiased sample estimator of β₀ … β_n from an unordered sample.
pub fn pwm_from_sample(x: &[f64], n: usize) -> Result<PwmVector> {
    check_order(n)?;
    let m = x.len();
    if m <= n {
        return Err(Error::InsufficientSample {
            size: m,
            required: n + 1,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("sample contains non-finite values"));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut beta = vec![0.0; n + 1];
    let mut weights = vec![0.0; n + 1];
    for (idx, &xi) in sorted.iter().enumerate() {
        let i = idx + 1;
        // weights[r] = Π_{j=1..r} (i − j)/(m − j), built up one factor at a time.
        weights[0] = 1.0;
        for r in 1..=n {
            weights[r] = if i > r {
                weights[r - 1] * (i - r) as f64 / (m - r) as f64
            } else {
                0.0
            };
        }
        for (b, w) in beta.iter_mut().zip(&weights) {
            *b += w * xi;
        }
    }
    for b in &mut beta {
        *b /= m as f64;
    }
    Ok(PwmVector {
        beta,
        provenance: Provenance::Sample { size: m },
    })
}

/// M[r][k] = ∫ Φ(z)^r z^k φ(z) dz for r, k = 0 … n, with its determinant.
#[derive(Debug, Clone)]
pub struct NormalPwmMatrix {
    entries: DMatrix<f64>,
    factorization: Factorization,
}

impl NormalPwmMatrix {
    pub fn order(&self) -> usize {
        self.entries.nrows() - 1
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, r: usize, k: usize) -> f64 {
        self.entries[(r, k)]
    }

    pub fn det(&self) -> f64 {
        self.factorization.det
    }

    pub fn min_pivot_ratio(&self) -> f64 {
        self.factorization.min_pivot_ratio
    }

    /// β_r of a polynomial model: Σ_k a_k M[r][k].
    pub fn model_pwms(&self, model: &PolynomialModel) -> Result<Vec<f64>> {
        if model.degree() > self.order() {
            return Err(Error::domain("model degree exceeds matrix order"));
        }
        Ok((0..=self.order())
            .map(|r| {
                model
                    .coeffs()
                    .iter()
                    .enumerate()
                    .map(|(k, a)| a * self.entries[(r, k)])
                    .sum()
            })
            .collect())
    }
}

/// Assembles the normal-PWM matrix. Entries are independent integrals and
/// are evaluated in parallel; each one is a pure function of (r, k, spec).
pub fn normal_pwm_matrix(n: usize, spec: &QuadratureSpec) -> Result<NormalPwmMatrix> {
    check_order(n)?;
    spec.validate()?;
    let t = spec.normal_truncation;
    let size = n + 1;
    let values: Vec<Result<f64>> = (0..size * size)
        .into_par_iter()
        .map(|idx| {
            let (r, k) = (idx / size, idx % size);
            let f = |z: f64| normal_cdf(z).powi(r as i32) * z.powi(k as i32) * normal_pdf(z);
            let lower = integrate(f, -t, 0.0, spec)?;
            let upper = integrate(f, 0.0, t, spec)?;
            Ok(lower + upper)
        })
        .collect();
    let mut entries = DMatrix::zeros(size, size);
    for (idx, v) in values.into_iter().enumerate() {
        let (r, k) = (idx / size, idx % size);
        entries[(r, k)] = v.map_err(|e| relabel(e, &format!("M[{r}][{k}]")))?;
    }
    let factorization = Factorization::new(&entries)?;
    Ok(NormalPwmMatrix {
        entries,
        factorization,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PwmFitOptions {
    /// Permit degrees above the analytic (12) or sample (9) caps.
    pub allow_high_degree: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditioningReport {
    pub det: f64,
    pub min_pivot_ratio: f64,
    /// max_r |Σ_k a_k M[r][k] − β_r|
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct PwmFit {
    pub model: PolynomialModel,
    pub report: ConditioningReport,
}

/// Solves M·a = β for the model coefficients.
pub fn fit_pwm(target: &PwmVector, m: &NormalPwmMatrix, opts: PwmFitOptions) -> Result<PwmFit> {
    let n = target.order();
    if n != m.order() {
        return Err(Error::domain(format!(
            "PWM order {n} does not match matrix order {}",
            m.order()
        )));
    }
    let cap = match target.provenance {
        Provenance::Analytic => ANALYTIC_DEGREE_CAP,
        Provenance::Sample { .. } => SAMPLE_DEGREE_CAP,
    };
    if n > cap && !opts.allow_high_degree {
        return Err(Error::Conditioning {
            message: format!(
                "degree {n} exceeds the recommended cap of {cap} for this PWM source; \
                 pass an explicit override to fit it anyway"
            ),
            det: m.det(),
            pivot_ratio: m.min_pivot_ratio(),
        });
    }
    if m.min_pivot_ratio() < MIN_PIVOT_RATIO {
        return Err(Error::Conditioning {
            message: "normal-PWM matrix is singular to working precision".into(),
            det: m.det(),
            pivot_ratio: m.min_pivot_ratio(),
        });
    }
    let beta = DVector::from_column_slice(&target.beta);
    let a = m.factorization.solve(&beta)?;
    let mut model = PolynomialModel::new(a.iter().copied().collect(), FitMethod::Pwm)?;
    let back = m.model_pwms(&model)?;
    let residual = back
        .iter()
        .zip(&target.beta)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max);
    if let Provenance::Sample { size } = target.provenance {
        model = model.with_source(format!("sample[n={size}]"));
    }
    Ok(PwmFit {
        model,
        report: ConditioningReport {
            det: m.det(),
            min_pivot_ratio: m.min_pivot_ratio(),
            residual,
        },
    })
}

/// PWM fit of a catalog distribution at degree `n`.
pub fn fit_pwm_distribution(
    d: &TargetDistribution,
    n: usize,
    opts: PwmFitOptions,
) -> Result<PwmFit> {
    let beta = pwm_from_distribution(d, n)?;
    let m = normal_pwm_matrix(n, &QuadratureSpec::tight())?;
    let mut fit = fit_pwm(&beta, &m, opts)?;
    fit.model = fit.model.with_source(d.label());
    Ok(fit)
}

/// PWM fit of an observed sample at degree `n`.
pub fn fit_pwm_sample(x: &[f64], n: usize, opts: PwmFitOptions) -> Result<PwmFit> {
    let beta = pwm_from_sample(x, n)?;
    let m = normal_pwm_matrix(n, &QuadratureSpec::tight())?;
    fit_pwm(&beta, &m, opts)
}

fn check_order(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DEGREE {
        return Err(Error::domain(format!(
            "PWM order must be in 1..={MAX_DEGREE}, got {n}"
        )));
    }
    Ok(())
}

fn relabel(e: Error, what: &str) -> Error {
    match e {
        Error::Integration {
            context,
            estimate,
            error,
        } => Error::Integration {
            context: format!("{what}: {context}"),
            estimate,
            error,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;
    use crate::poly_model::normal_raw_moment;

    fn dist(f: Family, p: &[f64]) -> TargetDistribution {
        TargetDistribution::new(f, p).unwrap()
    }

    const INV_2_SQRT_PI: f64 = 0.282_094_791_773_878_14;

    #[test]
    fn uniform_pwms() {
        let b = pwm_from_distribution(&dist(Family::Uniform, &[0.0, 1.0]), 4).unwrap();
        for (r, v) in b.beta.iter().enumerate() {
            assert!((v - 1.0 / (r as f64 + 2.0)).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn exponential_pwms() {
        let b = pwm_from_distribution(&dist(Family::Exponential, &[1.0]), 1).unwrap();
        assert!((b.beta[0] - 1.0).abs() < 1e-10);
        assert!((b.beta[1] - 0.75).abs() < 1e-10);
    }

    #[test]
    fn normal_pwms() {
        let b = pwm_from_distribution(&dist(Family::Normal, &[0.0, 1.0]), 1).unwrap();
        assert!(b.beta[0].abs() < 1e-13);
        assert!((b.beta[1] - INV_2_SQRT_PI).abs() < 1e-12);
    }

    #[test]
    fn heavy_tail_is_reported() {
        let err = pwm_from_distribution(&dist(Family::StudentT, &[2.5]), 3).unwrap_err();
        match err {
            Error::Integration { context, .. } => assert!(context.contains("tail")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn constant_sample() {
        let b = pwm_from_sample(&[2.5; 40], 6).unwrap();
        for (r, v) in b.beta.iter().enumerate() {
            assert!((v - 2.5 / (r as f64 + 1.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn two_point_sample() {
        let b = pwm_from_sample(&[3.0, -1.0], 1).unwrap();
        assert_eq!(b.beta[0], 1.0);
        assert_eq!(b.beta[1], 1.5);
        assert!(matches!(
            pwm_from_sample(&[1.0, 2.0], 2),
            Err(Error::InsufficientSample { size: 2, required: 3 })
        ));
    }

    #[test]
    fn matrix_examples() {
        let m = normal_pwm_matrix(3, &QuadratureSpec::default()).unwrap();
        assert!((m.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((m.get(1, 1) - INV_2_SQRT_PI).abs() < 1e-12);
        for k in 0..=3 {
            assert!((m.get(0, k) - normal_raw_moment(k)).abs() < 1e-12);
        }
        assert!((m.det() / 8.2291e-4 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn normal_target_recovers_identity() {
        let fit = fit_pwm_distribution(&dist(Family::Normal, &[0.0, 1.0]), 3, PwmFitOptions::default())
            .unwrap();
        let want = [0.0, 1.0, 0.0, 0.0];
        for (a, w) in fit.model.coeffs().iter().zip(want) {
            assert!((a - w).abs() < 1e-8);
        }
    }

    #[test]
    fn uniform_degree_one() {
        // 2x2 closed form: a0 = 1/2, a1 = (1/3 − 1/4) / (1/(2√π)).
        let fit = fit_pwm_distribution(&dist(Family::Uniform, &[0.0, 1.0]), 1, PwmFitOptions::default())
            .unwrap();
        let a = fit.model.coeffs();
        assert!((a[0] - 0.5).abs() < 1e-12);
        assert!((a[1] - (1.0 / 12.0) / INV_2_SQRT_PI).abs() < 1e-10);
        // Model and target medians coincide at p = 0.5.
        assert!((fit.model.evaluate(0.0) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn degree_caps() {
        let d = dist(Family::Uniform, &[0.0, 1.0]);
        let err = fit_pwm_distribution(&d, 13, PwmFitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Conditioning { .. }));
        let sample: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let err = fit_pwm_sample(&sample, 10, PwmFitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Conditioning { .. }));
        assert!(fit_pwm_sample(&sample, 5, PwmFitOptions::default()).is_ok());
    }

    #[test]
    fn order_mismatch() {
        let m = normal_pwm_matrix(2, &QuadratureSpec::default()).unwrap();
        let b = pwm_from_sample(&[1.0, 2.0, 3.0, 4.0], 3).unwrap();
        assert!(fit_pwm(&b, &m, PwmFitOptions::default()).is_err());
    }

    fn dominant(a: &[f64]) -> f64 {
        a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(48))]

        #[test]
        fn affine_equivariance(
            x in proptest::collection::vec(-50.0f64..50.0, 30..80),
            c in 0.1f64..10.0,
            d in -10.0f64..10.0,
            n in 1usize..=5,
        ) {
            let base = fit_pwm_sample(&x, n, PwmFitOptions::default()).unwrap();
            let y: Vec<f64> = x.iter().map(|v| c * v + d).collect();
            let moved = fit_pwm_sample(&y, n, PwmFitOptions::default()).unwrap();
            let mut expect: Vec<f64> = base.model.coeffs().iter().map(|a| c * a).collect();
            expect[0] += d;
            let scale = dominant(&expect);
            for (got, want) in moved.model.coeffs().iter().zip(&expect) {
                proptest::prop_assert!((got - want).abs() <= 1e-9 * scale, "{got} vs {want}");
            }
        }

        #[test]
        fn model_pwms_round_trip(coeffs in proptest::collection::vec(-2.0f64..2.0, 2..=7)) {
            let model = PolynomialModel::new(coeffs.clone(), FitMethod::Exact).unwrap();
            let n = model.degree();
            let m = normal_pwm_matrix(n, &QuadratureSpec::tight()).unwrap();
            let beta = m.model_pwms(&model).unwrap();
            let target = PwmVector { beta, provenance: Provenance::Analytic };
            let fit = fit_pwm(&target, &m, PwmFitOptions::default()).unwrap();
            proptest::prop_assert!(fit.report.residual <= 1e-9);
            let scale = dominant(&coeffs).max(1.0);
            for (got, want) in fit.model.coeffs().iter().zip(&coeffs) {
                proptest::prop_assert!((got - want).abs() <= 1e-7 * scale, "{got} vs {want}");
            }
        }

        #[test]
        fn constant_sample_weights(c in -1e3f64..1e3, size in 2usize..300, n in 1usize..=9) {
            let n = n.min(size - 1);
            let b = pwm_from_sample(&vec![c; size], n).unwrap();
            for (r, v) in b.beta.iter().enumerate() {
                let want = c / (r as f64 + 1.0);
                proptest::prop_assert!((v - want).abs() <= 1e-12 * c.abs().max(1e-300), "r={r}: {v} vs {want}");
            }
        }
    }
}
