//! Fit quality: relative percentile error ε_p = |x*_p − x_p| / |x_p| · 100
//! over an even probability grid, and histogram data comparing the model's
//! sampled density with the target density.

use rayon::prelude::*;
use serde::Serialize;

use crate::distributions::TargetDistribution;
use crate::error::{Error, Result};
use crate::numerics::normal_quantile;
use crate::poly_model::PolynomialModel;
use crate::sampler::{normal_stream, RngSpec};

/// Points with |x_p| below this multiple of the target σ are skipped.
pub const ZERO_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonPoint {
    pub p: f64,
    pub x_p: f64,
    pub x_p_star: f64,
    /// `None` when the point was skipped by the zero guard.
    pub eps_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub probit_range: (f64, f64),
    pub grid_size: usize,
    pub eps_avg: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub skipped_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<EpsilonPoint>>,
}

impl FitReport {
    /// The per-point table as CSV with columns p, x_p, x_p_star, eps_percent.
    /// Skipped points have an empty eps_percent field.
    pub fn points_csv(&self) -> Option<String> {
        let points = self.points.as_ref()?;
        let mut out = String::from("p,x_p,x_p_star,eps_percent\n");
        for pt in points {
            let eps = pt.eps_percent.map(|e| format!("{e:.17e}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{eps}\n",
                pt.p, pt.x_p, pt.x_p_star
            ));
        }
        Some(out)
    }
}

/// Average of the retained ε values in grid order.
pub fn eps_average(points: &[EpsilonPoint]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for e in points.iter().filter_map(|p| p.eps_percent) {
        sum += e;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// ε_p statistics on `grid` evenly spaced probabilities spanning `range`.
pub fn epsilon_report(
    m: &PolynomialModel,
    d: &TargetDistribution,
    range: (f64, f64),
    grid: usize,
    keep_points: bool,
) -> Result<FitReport> {
    let (lo, hi) = range;
    if !(lo > 0.0 && hi < 1.0 && lo < hi) {
        return Err(Error::domain(format!(
            "probit range must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"
        )));
    }
    if grid < 2 {
        return Err(Error::domain("grid needs at least 2 points"));
    }
    let guard = ZERO_GUARD * d.std();
    let step = (hi - lo) / (grid - 1) as f64;
    let points = (0..grid)
        .into_par_iter()
        .map(|i| {
            let p = if i == grid - 1 { hi } else { lo + step * i as f64 };
            let x_p = d.quantile(p)?;
            let x_p_star = m.evaluate(normal_quantile(p)?);
            let eps_percent = if x_p.abs() < guard {
                None
            } else {
                Some(((x_p_star - x_p) / x_p).abs() * 100.0)
            };
            Ok(EpsilonPoint {
                p,
                x_p,
                x_p_star,
                eps_percent,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eps_min = f64::INFINITY;
    let mut eps_max: f64 = 0.0;
    let mut skipped = 0;
    for pt in &points {
        match pt.eps_percent {
            Some(e) => {
                eps_min = eps_min.min(e);
                eps_max = eps_max.max(e);
            }
            None => skipped += 1,
        }
    }
    if skipped == grid {
        eps_min = 0.0;
    }
    Ok(FitReport {
        probit_range: range,
        grid_size: grid,
        eps_avg: eps_average(&points),
        eps_min,
        eps_max,
        skipped_points: skipped,
        points: keep_points.then_some(points),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityBin {
    pub lo: f64,
    pub hi: f64,
    /// Fraction of draws in the bin divided by its width.
    pub empirical: f64,
    /// Target density at the bin centre.
    pub analytic: f64,
    /// Target probability of the bin divided by its width.
    pub analytic_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityTable {
    pub draws: usize,
    /// Draws that fell outside the binned range.
    pub outside: usize,
    pub bins: Vec<DensityBin>,
}

impl DensityTable {
    /// max over bins of |empirical − analytic|.
    pub fn sup_gap(&self) -> f64 {
        self.bins
            .iter()
            .map(|b| (b.empirical - b.analytic).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("lo,hi,empirical,analytic,analytic_mass\n");
        for b in &self.bins {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                b.lo, b.hi, b.empirical, b.analytic, b.analytic_mass
            ));
        }
        out
    }
}

/// Histogram of `draws` model samples against the target density.
///
/// Bins span `range` when given, otherwise the sample's own min and max.
pub fn density_compare(
    m: &PolynomialModel,
    d: &TargetDistribution,
    bins: usize,
    draws: usize,
    seed: u64,
    range: Option<(f64, f64)>,
) -> Result<DensityTable> {
    if bins == 0 || draws < bins * 100 {
        return Err(Error::domain(format!(
            "need at least 100 draws per bin ({bins} bins, {draws} draws)"
        )));
    }
    let xs = m.transform_sample(&normal_stream(RngSpec::new(seed), draws));
    let (mut lo, mut hi) = match range {
        Some(r) => r,
        None => xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x))),
    };
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::domain(format!("invalid histogram range ({lo}, {hi})")));
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut outside = 0;
    for &x in &xs {
        if !(lo..=hi).contains(&x) {
            outside += 1;
            continue;
        }
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let table = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let a = lo + width * k as f64;
            let b = if k == bins - 1 { hi } else { a + width };
            DensityBin {
                lo: a,
                hi: b,
                empirical: c as f64 / (draws as f64 * (b - a)),
                analytic: d.pdf(0.5 * (a + b)),
                analytic_mass: (d.cdf(b) - d.cdf(a)) / (b - a),
            }
        })
        .collect();
    Ok(DensityTable {
        draws,
        outside,
        bins: table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::Family;
    use crate::fixtures::reference_model;
    use crate::poly_model::FitMethod;

    #[test]
    fn affine_model_is_exact() {
        let d = TargetDistribution::new(Family::Normal, &[2.0, 3.0]).unwrap();
        let m = PolynomialModel::affine(2.0, 3.0).unwrap();
        let r = epsilon_report(&m, &d, (0.001, 0.999), 1000, false).unwrap();
        assert!(r.eps_max < 1e-9, "{}", r.eps_max);
        assert!(r.eps_min <= r.eps_avg && r.eps_avg <= r.eps_max);
    }

    #[test]
    fn zero_quantile_skipped() {
        let d = TargetDistribution::new(Family::Normal, &[0.0, 1.0]).unwrap();
        let m = PolynomialModel::identity();
        let r = epsilon_report(&m, &d, (0.25, 0.75), 3, true).unwrap();
        assert_eq!(r.skipped_points, 1);
        assert_eq!(r.points.as_ref().unwrap()[1].eps_percent, None);
    }

    #[test]
    fn average_reproducible_from_points() {
        let d = TargetDistribution::new(Family::Exponential, &[1.0]).unwrap();
        let m = PolynomialModel::new(vec![1.0, 1.0, 0.3], FitMethod::Exact).unwrap();
        let r = epsilon_report(&m, &d, (0.01, 0.99), 500, true).unwrap();
        assert_eq!(eps_average(r.points.as_ref().unwrap()).to_bits(), r.eps_avg.to_bits());
        let csv = r.points_csv().unwrap();
        assert!(csv.starts_with("p,x_p,x_p_star,eps_percent\n"));
        assert_eq!(csv.lines().count(), 501);
    }

    #[test]
    fn bad_range_rejected() {
        let d = TargetDistribution::new(Family::Normal, &[0.0, 1.0]).unwrap();
        let m = PolynomialModel::identity();
        assert!(epsilon_report(&m, &d, (0.0, 0.5), 10, false).is_err());
        assert!(epsilon_report(&m, &d, (0.1, 0.5), 1, false).is_err());
    }

    #[test]
    fn identity_density_within_binomial_error() {
        let d = TargetDistribution::new(Family::Normal, &[0.0, 1.0]).unwrap();
        let m = PolynomialModel::identity();
        let draws = 1_000_000;
        let t = density_compare(&m, &d, 50, draws, 17, Some((-4.0, 4.0))).unwrap();
        for b in &t.bins {
            let w = b.hi - b.lo;
            let p = b.analytic_mass * w;
            let se = (p * (1.0 - p) / draws as f64).sqrt() / w;
            assert!((b.empirical - b.analytic_mass).abs() <= 5.0 * se, "{b:?}");
        }
    }

    #[test]
    fn degenerate_model_single_bin() {
        let d = TargetDistribution::new(Family::Normal, &[0.0, 1.0]).unwrap();
        let m = PolynomialModel::new(vec![2.5, 0.0], FitMethod::Exact).unwrap();
        let t = density_compare(&m, &d, 10, 1000, 1, None).unwrap();
        let occupied = t.bins.iter().filter(|b| b.empirical > 0.0).count();
        assert_eq!(occupied, 1);
    }

    #[test]
    fn too_few_draws_rejected() {
        let d = TargetDistribution::new(Family::Normal, &[0.0, 1.0]).unwrap();
        let m = PolynomialModel::identity();
        assert!(density_compare(&m, &d, 50, 4999, 1, None).is_err());
    }

    #[test]
    fn published_models_meet_their_error_bounds() {
        let beta = TargetDistribution::new(Family::Beta, &[2.0, 2.0]).unwrap();
        let r = epsilon_report(&reference_model("beta22-pwm11"), &beta, (0.001, 0.999), 10_000, false).unwrap();
        assert!(r.eps_max <= 0.15 && r.eps_avg <= 1e-3, "{r:?}");
        let ln = TargetDistribution::new(Family::Lognormal, &[0.0, 1.0]).unwrap();
        let r = epsilon_report(&reference_model("lognormal-pct11"), &ln, (0.001, 0.999), 10_000, false).unwrap();
        assert!(r.eps_max <= 0.1, "{r:?}");
        assert!(r.eps_min <= r.eps_avg && r.eps_avg <= r.eps_max && r.eps_min >= 0.0);
    }

    #[test]
    fn taylor_ladder_never_gets_worse() {
        let ln = TargetDistribution::new(Family::Lognormal, &[0.0, 1.0]).unwrap();
        let mut coeffs = vec![1.0, 1.0];
        let mut fact = 1.0;
        let mut last = f64::INFINITY;
        for k in 2..=11 {
            fact *= k as f64;
            coeffs.push(1.0 / fact);
            if k < 5 {
                continue;
            }
            let m = PolynomialModel::new(coeffs.clone(), FitMethod::Exact).unwrap();
            let e = epsilon_report(&m, &ln, (0.001, 0.999), 2000, false).unwrap().eps_max;
            assert!(e <= last, "degree {k}: {e} > {last}");
            last = e;
        }
    }

    #[test]
    fn published_beta_model_density() {
        let beta = TargetDistribution::new(Family::Beta, &[2.0, 2.0]).unwrap();
        let t = density_compare(&reference_model("beta22-pwm11"), &beta, 50, 1_000_000, 11, Some((0.0, 1.0))).unwrap();
        assert!(t.sup_gap() <= 0.02, "{}", t.sup_gap());
    }

    #[test]
    fn low_degree_beta_pwm_error_rows() {
        use crate::fit_pwm::{fit_pwm_distribution, PwmFitOptions};
        let beta = TargetDistribution::new(Family::Beta, &[2.0, 2.0]).unwrap();
        // (degree, avg, min, max) in percent, two significant digits.
        for (n, avg, min, max) in [(3, 1.2, 1.8e-5, 389.0), (5, 0.15, 8.0e-6, 54.0)] {
            let m = fit_pwm_distribution(&beta, n, PwmFitOptions::default()).unwrap().model;
            let r = epsilon_report(&m, &beta, (0.001, 0.999), 10_000, false).unwrap();
            for (got, want) in [(r.eps_avg, avg), (r.eps_min, min), (r.eps_max, max)] {
                assert!((got / want - 1.0).abs() < 0.05, "degree {n}: {got} vs {want}");
            }
        }
    }
}
