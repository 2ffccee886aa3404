//! Reference reproductions bundled with the crate. Each fixture is a JSON
//! document describing a computation, the expected values and the
//! tolerances; [`run_fixture`] evaluates it into a list of checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{parse_json, read_json, CorrelationSpec, DistributionSpec, FitSpec};
use crate::correlation::{build_rho_polynomial, solve_rho_z, MomentSource};
use crate::diagnostics::epsilon_report;
use crate::distributions::{Family, TargetDistribution};
use crate::error::{Error, Result};
use crate::fit_percentile::{fit_percentile, NodePlan};
use crate::fit_pwm::normal_pwm_matrix;
use crate::numerics::QuadratureSpec;
use crate::poly_model::{ModelFile, PolynomialModel};
use crate::sampler::{generate, sample_correlation};

/// Bundled fixtures by name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("pwm-determinants", include_str!("../fixtures/pwm_determinants.json")),
    ("beta22-pwm11", include_str!("../fixtures/beta22_pwm11.json")),
    ("lognormal-pct11", include_str!("../fixtures/lognormal_pct11.json")),
    ("percentile-families", include_str!("../fixtures/percentile_families.json")),
    ("lognormal-pair-rho", include_str!("../fixtures/lognormal_pair_rho.json")),
    ("trivariate", include_str!("../fixtures/trivariate.json")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBounds {
    pub range: (f64, f64),
    pub grid: usize,
    pub max_percent: f64,
    #[serde(default)]
    pub avg_percent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: Family,
    /// Closed range per parameter.
    pub params: Vec<(f64, f64)>,
    pub alpha: f64,
    pub eps_max_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Fixture {
    PwmDeterminants {
        description: String,
        expected: Vec<f64>,
        rel_tol: f64,
        /// Orders up to this one use `rel_tol`; higher ones `max_ratio`.
        rel_tol_through: usize,
        max_ratio: f64,
    },
    ModelFit {
        description: String,
        distribution: DistributionSpec,
        fit: FitSpec,
        expected_model: ModelFile,
        coeff_tol: f64,
        epsilon: EpsilonBounds,
    },
    PercentileSweep {
        description: String,
        degree: usize,
        grid: usize,
        tolerance_factor: f64,
        rows: Vec<SweepRow>,
    },
    RhoTable {
        description: String,
        model1: ModelFile,
        model2: ModelFile,
        tol: f64,
        rows: Vec<(f64, f64)>,
    },
    Vector {
        description: String,
        spec: CorrelationSpec,
        expected_rz: Vec<Vec<f64>>,
        rz_tol: f64,
        sample_tol: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureOutcome {
    pub name: String,
    pub description: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

/// Loads a bundled fixture by name, or a fixture file by path.
pub fn load_fixture(name_or_path: &str) -> Result<(String, Fixture)> {
    if let Some((name, text)) = BUNDLED.iter().find(|(n, _)| *n == name_or_path) {
        return Ok((name.to_string(), parse_json(text)?));
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        return Ok((name, read_json(path)?));
    }
    let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
    Err(Error::schema(
        "fixture",
        format!("unknown fixture `{name_or_path}`; bundled: {}", names.join(", ")),
    ))
}

pub fn run_fixture(name: &str, fixture: &Fixture) -> Result<FixtureOutcome> {
    let (description, checks) = match fixture {
        Fixture::PwmDeterminants {
            description,
            expected,
            rel_tol,
            rel_tol_through,
            max_ratio,
        } => (description, determinant_checks(expected, *rel_tol, *rel_tol_through, *max_ratio)?),
        Fixture::ModelFit {
            description,
            distribution,
            fit,
            expected_model,
            coeff_tol,
            epsilon,
        } => (
            description,
            model_fit_checks(distribution, fit, expected_model, *coeff_tol, epsilon)?,
        ),
        Fixture::PercentileSweep {
            description,
            degree,
            grid,
            tolerance_factor,
            rows,
        } => (description, sweep_checks(*degree, *grid, *tolerance_factor, rows)?),
        Fixture::RhoTable {
            description,
            model1,
            model2,
            tol,
            rows,
        } => (description, rho_checks(model1, model2, *tol, rows)?),
        Fixture::Vector {
            description,
            spec,
            expected_rz,
            rz_tol,
            sample_tol,
        } => (description, vector_checks(spec, expected_rz, *rz_tol, *sample_tol)?),
    };
    Ok(FixtureOutcome {
        name: name.to_string(),
        description: description.clone(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

fn determinant_checks(expected: &[f64], rel_tol: f64, through: usize, max_ratio: f64) -> Result<Vec<Check>> {
    let spec = QuadratureSpec::default();
    let mut checks = Vec::new();
    for (i, &e) in expected.iter().enumerate() {
        let n = i + 1;
        let det = normal_pwm_matrix(n, &spec)?.det();
        if n <= through {
            checks.push(Check::at_most(format!("det[{n}] relative error"), (det / e - 1.0).abs(), rel_tol));
        } else {
            let ratio = (det / e).max(e / det);
            checks.push(Check::at_most(format!("det[{n}] ratio"), ratio, max_ratio));
        }
    }
    Ok(checks)
}

fn model_fit_checks(
    dist: &DistributionSpec,
    fit: &FitSpec,
    expected: &ModelFile,
    coeff_tol: f64,
    eps: &EpsilonBounds,
) -> Result<Vec<Check>> {
    let d = dist.build()?;
    let (model, _) = fit.fit_distribution(&d)?;
    let reference = PolynomialModel::try_from(expected.clone())?;
    let mut checks = Vec::new();
    if reference.degree() != model.degree() {
        return Err(Error::schema("expected_model.degree", "does not match the fitted degree"));
    }
    for (k, (a, b)) in model.coeffs().iter().zip(reference.coeffs()).enumerate() {
        checks.push(Check::at_most(format!("a[{k}] abs error"), (a - b).abs(), coeff_tol));
    }
    let report = epsilon_report(&model, &d, eps.range, eps.grid, false)?;
    checks.push(Check::at_most("eps_max %", report.eps_max, eps.max_percent));
    if let Some(avg) = eps.avg_percent {
        checks.push(Check::at_most("eps_avg %", report.eps_avg, avg));
    }
    Ok(checks)
}

/// The finite-variance member closest to a box's lower corner.
fn finite_variance_floor(family: Family, index: usize, v: f64) -> f64 {
    match (family, index) {
        (Family::StudentT, 0) if v <= 2.0 => 3.0,
        (Family::F, 1) if v <= 4.0 => 5.0,
        _ => v,
    }
}

/// The reference model stored in a bundled model-fit fixture.
#[cfg(test)]
pub(crate) fn reference_model(name: &str) -> PolynomialModel {
    match load_fixture(name).unwrap().1 {
        Fixture::ModelFit { expected_model, .. } => PolynomialModel::try_from(expected_model).unwrap(),
        other => panic!("{name} is not a model fit: {other:?}"),
    }
}

/// Low, middle and high value of each parameter range, deduplicated.
pub fn corner_grid(row: &SweepRow) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = row
        .params
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let mut vals = vec![lo, 0.5 * (lo + hi), hi];
            vals.dedup();
            vals.into_iter()
                .map(|v| finite_variance_floor(row.family, i, v))
                .collect()
        })
        .collect();
    let mut grid = vec![Vec::new()];
    for axis in axes {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    grid.dedup();
    grid
}

/// eps_max of a degree-`degree` percentile fit with the default node plan
/// at `alpha`, measured on `grid` points of [α, 1 − α].
pub fn percentile_eps_max(d: &TargetDistribution, degree: usize, alpha: f64, grid: usize) -> Result<f64> {
    let fit = fit_percentile(d, degree, &NodePlan::with_alpha(alpha))?;
    Ok(epsilon_report(&fit.model, d, (alpha, 1.0 - alpha), grid, false)?.eps_max)
}

fn sweep_checks(degree: usize, grid: usize, factor: f64, rows: &[SweepRow]) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for row in rows {
        for params in corner_grid(row) {
            let d = TargetDistribution::new(row.family, &params)?;
            let eps = percentile_eps_max(&d, degree, row.alpha, grid)?;
            checks.push(Check::at_most(
                format!("{} eps_max %", d.label()),
                eps,
                factor * row.eps_max_percent,
            ));
        }
    }
    Ok(checks)
}

fn rho_checks(m1: &ModelFile, m2: &ModelFile, tol: f64, rows: &[(f64, f64)]) -> Result<Vec<Check>> {
    let a = PolynomialModel::try_from(m1.clone())?;
    let b = PolynomialModel::try_from(m2.clone())?;
    let rp = build_rho_polynomial(&a, &b, MomentSource::Model)?;
    rows.iter()
        .map(|&(rx, expected)| {
            let rz = solve_rho_z(&rp, rx)?;
            Ok(Check::at_most(format!("rho_z({rx}) abs error"), (rz - expected).abs(), tol))
        })
        .collect()
}

fn vector_checks(spec: &CorrelationSpec, expected_rz: &[Vec<f64>], rz_tol: f64, sample_tol: f64) -> Result<Vec<Check>> {
    let resolved = spec.resolve(Path::new("."))?;
    let vm = resolved.vector_model()?;
    let m = vm.dimension();
    let mut checks = Vec::new();
    for i in 0..m {
        for j in 0..i {
            let err = (vm.normal_correlation()[(i, j)] - expected_rz[i][j]).abs();
            checks.push(Check::at_most(format!("rz[{i}][{j}] abs error"), err, rz_tol));
        }
    }
    let samples = generate(&vm, resolved.generation.count, resolved.rng());
    let r = sample_correlation(&samples)?;
    for i in 0..m {
        for j in 0..i {
            let err = (r[(i, j)] - resolved.rx[(i, j)]).abs();
            checks.push(Check::at_most(format!("sample r[{i}][{j}] abs error"), err, sample_tol));
        }
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_parse() {
        for (name, _) in BUNDLED {
            load_fixture(name).unwrap();
        }
        assert!(matches!(load_fixture("nope"), Err(Error::Schema { .. })));
    }

    #[test]
    fn corner_grids() {
        let row = SweepRow {
            family: Family::F,
            params: vec![(4.0, 100.0), (4.0, 100.0)],
            alpha: 1e-4,
            eps_max_percent: 0.09,
        };
        let g = corner_grid(&row);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![4.0, 5.0]);
        let fixed = SweepRow {
            family: Family::Uniform,
            params: vec![(0.0, 0.0), (1.0, 1.0)],
            alpha: 1e-3,
            eps_max_percent: 0.0035,
        };
        assert_eq!(corner_grid(&fixed), vec![vec![0.0, 1.0]]);
    }

    #[test]
    fn rho_fixture_passes() {
        let (name, f) = load_fixture("lognormal-pair-rho").unwrap();
        let out = run_fixture(&name, &f).unwrap();
        assert!(out.pass, "{out:?}");
        assert_eq!(out.checks.len(), 7);
    }
}
