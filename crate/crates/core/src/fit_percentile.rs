//! Coefficient estimation by least-squares percentile matching.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::TargetDistribution;
use crate::error::{Error, Result};
use crate::numerics::{least_squares, normal_quantile};
use crate::poly_model::{FitMethod, PolynomialModel, MAX_DEGREE};

/// Probability nodes at which target and model percentiles are matched.
///
/// By default 14, 16 and 15 nodes are spread evenly over `[α, 0.01)`,
/// `[0.01, 0.99)` and `[0.99, 1 − α]`, which concentrates half of the
/// nodes in the tails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodePlan {
    pub alpha: f64,
    pub counts: (usize, usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit_nodes: Option<Vec<f64>>,
}

impl Default for NodePlan {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            counts: (14, 16, 15),
            explicit_nodes: None,
        }
    }
}

impl NodePlan {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn explicit(nodes: Vec<f64>) -> Self {
        Self {
            explicit_nodes: Some(nodes),
            ..Self::default()
        }
    }

    /// `count` nodes spaced evenly over the closed interval `[lo, hi]`.
    pub fn even(count: usize, lo: f64, hi: f64) -> Self {
        let nodes = if count == 1 {
            vec![lo]
        } else {
            (0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect()
        };
        Self::explicit(nodes)
    }

    pub fn build_nodes(&self) -> Result<Vec<f64>> {
        if let Some(nodes) = &self.explicit_nodes {
            if nodes.is_empty() {
                return Err(Error::domain("explicit node list is empty"));
            }
            if nodes.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                return Err(Error::domain("explicit nodes must lie in (0, 1)"));
            }
            if nodes.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::domain("explicit nodes must be strictly increasing"));
            }
            return Ok(nodes.clone());
        }
        let a = self.alpha;
        if !(a > 0.0 && a < 0.01) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 0.01) so the tail blocks do not overlap, got {a}"
            )));
        }
        let (low, mid, high) = self.counts;
        if low == 0 || mid == 0 || high == 0 {
            return Err(Error::domain("every node block needs at least one node"));
        }
        let mut nodes = Vec::with_capacity(low + mid + high);
        // Half-open blocks [start, end): node i sits at start + i·(end − start)/count.
        let half_open = |nodes: &mut Vec<f64>, start: f64, end: f64, count: usize| {
            let h = (end - start) / count as f64;
            nodes.extend((0..count).map(|i| start + h * i as f64));
        };
        half_open(&mut nodes, a, 0.01, low);
        half_open(&mut nodes, 0.01, 0.99, mid);
        let top = 1.0 - a;
        if high == 1 {
            nodes.push(top);
        } else {
            let h = (top - 0.99) / (high - 1) as f64;
            nodes.extend((0..high).map(|i| if i == high - 1 { top } else { 0.99 + h * i as f64 }));
        }
        Ok(nodes)
    }

    /// The probability range spanned by the nodes.
    pub fn probit_range(&self) -> Result<(f64, f64)> {
        let nodes = self.build_nodes()?;
        Ok((nodes[0], nodes[nodes.len() - 1]))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileReport {
    pub nodes: usize,
    pub residual_norm: f64,
    pub max_abs_residual: f64,
    pub min_diag_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct PercentileFit {
    pub model: PolynomialModel,
    pub report: PercentileReport,
}

/// Least-squares fit of Σ a_k z_p^k to x_p = F⁻¹(p) at z_p = Φ⁻¹(p).
pub fn fit_percentile(d: &TargetDistribution, degree: usize, plan: &NodePlan) -> Result<PercentileFit> {
    let nodes = plan.build_nodes()?;
    let xs = nodes
        .iter()
        .map(|&p| d.quantile(p))
        .collect::<Result<Vec<f64>>>()?;
    let mut fit = fit_percentile_points(&nodes, &xs, degree)?;
    fit.model = fit.model.with_source(d.label());
    Ok(fit)
}

/// Least-squares fit from explicit (p, x_p) pairs, e.g. empirical percentiles.
pub fn fit_percentile_points(probs: &[f64], xs: &[f64], degree: usize) -> Result<PercentileFit> {
    if degree == 0 || degree > MAX_DEGREE {
        return Err(Error::domain(format!(
            "degree must be in 1..={MAX_DEGREE}, got {degree}"
        )));
    }
    if probs.len() != xs.len() {
        return Err(Error::domain("probability and percentile lists differ in length"));
    }
    if probs.len() < degree + 1 {
        return Err(Error::domain(format!(
            "{} nodes cannot determine a degree-{degree} polynomial",
            probs.len()
        )));
    }
    let zs = probs
        .iter()
        .map(|&p| normal_quantile(p))
        .collect::<Result<Vec<f64>>>()?;
    let design = DMatrix::from_fn(zs.len(), degree + 1, |i, k| zs[i].powi(k as i32));
    let rhs = DVector::from_column_slice(xs);
    let ls = least_squares(&design, &rhs)?;
    let model = PolynomialModel::new(ls.solution.iter().copied().collect(), FitMethod::Percentile)?
        .with_probit_range((probs[0], probs[probs.len() - 1]));
    let max_abs_residual = zs
        .iter()
        .zip(xs)
        .map(|(&z, &x)| (model.evaluate(z) - x).abs())
        .fold(0.0, f64::max);
    Ok(PercentileFit {
        model,
        report: PercentileReport {
            nodes: zs.len(),
            residual_norm: ls.residual_norm,
            max_abs_residual,
            min_diag_ratio: ls.min_diag_ratio,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;

    #[test]
    fn default_plan_has_45_nodes() {
        let nodes = NodePlan::default().build_nodes().unwrap();
        assert_eq!(nodes.len(), 45);
        assert_eq!(nodes[0], 1e-4);
        assert_eq!(nodes[44], 1.0 - 1e-4);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert!(nodes[13] < 0.01 && nodes[14] == 0.01);
        assert!(nodes[29] < 0.99 && nodes[30] == 0.99);
    }

    #[test]
    fn explicit_nodes_verbatim() {
        let plan = NodePlan::even(17, 0.001, 0.999);
        let nodes = plan.build_nodes().unwrap();
        assert_eq!(nodes.len(), 17);
        assert_eq!(nodes[0], 0.001);
        assert!((nodes[16] - 0.999).abs() < 1e-15);
        assert!((nodes[8] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn overlapping_alpha_rejected() {
        assert!(NodePlan::with_alpha(0.02).build_nodes().is_err());
        assert!(NodePlan::explicit(vec![0.2, 0.1]).build_nodes().is_err());
    }

    #[test]
    fn normal_degree_one_is_exact() {
        let d = TargetDistribution::new(Family::Normal, &[3.0, 0.5]).unwrap();
        let fit = fit_percentile(&d, 1, &NodePlan::default()).unwrap();
        let a = fit.model.coeffs();
        assert!((a[0] - 3.0).abs() < 1e-10);
        assert!((a[1] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn too_few_nodes() {
        let d = TargetDistribution::new(Family::Normal, &[0.0, 1.0]).unwrap();
        let err = fit_percentile(&d, 5, &NodePlan::even(4, 0.1, 0.9)).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn symmetric_target_has_small_even_terms() {
        let d = TargetDistribution::new(Family::Beta, &[2.0, 2.0]).unwrap();
        let fit = fit_percentile(&d, 11, &NodePlan::even(17, 0.001, 0.999)).unwrap();
        let a = fit.model.coeffs();
        for k in (2..=11).step_by(2) {
            assert!(a[k].abs() <= 1e-6 * a[1].abs(), "a[{k}] = {}", a[k]);
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::test_runner::Config::with_cases(48))]

        #[test]
        fn interpolation_limit(degree in 1usize..=9, lo in 0.001f64..0.05, hi in 0.95f64..0.999, pick in 0usize..4) {
            let d = match pick {
                0 => TargetDistribution::new(Family::Gumbel, &[0.5, 2.0]),
                1 => TargetDistribution::new(Family::Lognormal, &[0.0, 0.6]),
                2 => TargetDistribution::new(Family::Gamma, &[3.0, 1.5]),
                _ => TargetDistribution::new(Family::Beta, &[2.0, 5.0]),
            }
            .unwrap();
            let plan = NodePlan::even(degree + 1, lo, hi);
            let fit = fit_percentile(&d, degree, &plan).unwrap();
            for p in plan.build_nodes().unwrap() {
                let x = d.quantile(p).unwrap();
                let xs = fit.model.evaluate(normal_quantile(p).unwrap());
                proptest::prop_assert!((xs - x).abs() <= 1e-9 * x.abs().max(1.0), "p={p}: {xs} vs {x}");
            }
        }
    }
}
