//! Declarative inputs for the command-line workflow: distribution strings,
//! sample files, fit settings and the correlation spec file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::correlation::RzOptions;
use crate::distributions::{Family, QuantileTable, TargetDistribution};
use crate::error::{Error, Result};
use crate::fit_percentile::{fit_percentile, fit_percentile_points, NodePlan, PercentileReport};
use crate::fit_pwm::{fit_pwm_distribution, fit_pwm_sample, ConditioningReport, PwmFitOptions};
use crate::poly_model::{FitMethod, ModelFile, PolynomialModel};
use crate::sampler::{RngSpec, VectorModel};

/// Version stamped into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

/// Parses `family:p1,p2,...`, e.g. `beta:2,2` or `exponential:1`.
pub fn parse_distribution(s: &str) -> Result<TargetDistribution> {
    let (name, rest) = s.split_once(':').unwrap_or((s, ""));
    let family: Family = name.trim().parse()?;
    let params = rest
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::schema("dist", format!("parameter `{t}`: {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    TargetDistribution::new(family, &params)
}

/// Reads and deserializes a JSON file, naming the offending key on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_json(&text)
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        Error::schema(if key == "." { "<root>".into() } else { key }, e.into_inner().to_string())
    })
}

pub fn read_model(path: &Path) -> Result<PolynomialModel> {
    read_json::<ModelFile>(path)?.try_into()
}

/// Numeric values of one CSV column. A first row that does not parse as
/// numbers is taken as a header. `column` is a header name or a 0-based
/// index; the first column is used when it is `None`.
pub fn read_sample_column(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?);
    }
    let has_header = rows
        .first()
        .is_some_and(|r| r.iter().any(|f| f.parse::<f64>().is_err()));
    let index = match column {
        None => 0,
        Some(c) => match c.parse::<usize>() {
            Ok(i) => i,
            Err(_) => {
                let header = rows.first().filter(|_| has_header).ok_or_else(|| {
                    Error::schema("column", format!("`{c}` given but {} has no header", path.display()))
                })?;
                header.iter().position(|h| h == c).ok_or_else(|| {
                    Error::schema("column", format!("no column named `{c}` in {}", path.display()))
                })?
            }
        },
    };
    let body = if has_header { &rows[1..] } else { &rows[..] };
    body.iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i + 1 + has_header as usize;
            let field = r.get(index).ok_or_else(|| {
                Error::schema(
                    "column",
                    format!("{}:{line}: missing column {index}", path.display()),
                )
            })?;
            field.parse::<f64>().map_err(|e| {
                Error::schema("sample", format!("{}:{line}: `{field}`: {e}", path.display()))
            })
        })
        .collect()
}

/// Linear-interpolation empirical quantile of sorted data.
pub fn empirical_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fit settings shared by the `fit` command and spec marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSpec {
    #[serde(default = "default_method")]
    pub method: FitMethod,
    #[serde(default)]
    pub degree: Option<usize>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub nodes: Option<[usize; 3]>,
    #[serde(default)]
    pub node_list: Option<Vec<f64>>,
    #[serde(default)]
    pub allow_high_degree: bool,
}

fn default_method() -> FitMethod {
    FitMethod::Pwm
}

impl Default for FitSpec {
    fn default() -> Self {
        Self {
            method: FitMethod::Pwm,
            degree: None,
            alpha: None,
            nodes: None,
            node_list: None,
            allow_high_degree: false,
        }
    }
}

/// Solver diagnostics of a fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum FitDiagnostics {
    Pwm(ConditioningReport),
    Percentile(PercentileReport),
}

impl FitSpec {
    pub fn degree(&self) -> usize {
        self.degree.unwrap_or(match self.method {
            FitMethod::Percentile => 19,
            _ => 11,
        })
    }

    pub fn node_plan(&self) -> Result<NodePlan> {
        if let Some(list) = &self.node_list {
            return Ok(NodePlan::explicit(list.clone()));
        }
        let mut plan = NodePlan::with_alpha(self.alpha.unwrap_or(1e-4));
        if let Some([l, m, h]) = self.nodes {
            plan.counts = (l, m, h);
        }
        Ok(plan)
    }

    fn check_method(&self) -> Result<()> {
        if self.method == FitMethod::Exact {
            return Err(Error::schema("method", "expected `pwm` or `percentile`"));
        }
        Ok(())
    }

    fn pwm_options(&self) -> PwmFitOptions {
        PwmFitOptions {
            allow_high_degree: self.allow_high_degree,
        }
    }

    pub fn fit_distribution(&self, d: &TargetDistribution) -> Result<(PolynomialModel, FitDiagnostics)> {
        self.check_method()?;
        match self.method {
            FitMethod::Percentile => {
                let fit = fit_percentile(d, self.degree(), &self.node_plan()?)?;
                Ok((fit.model, FitDiagnostics::Percentile(fit.report)))
            }
            _ => {
                let fit = fit_pwm_distribution(d, self.degree(), self.pwm_options())?;
                Ok((fit.model, FitDiagnostics::Pwm(fit.report)))
            }
        }
    }

    pub fn fit_sample(&self, x: &[f64]) -> Result<(PolynomialModel, FitDiagnostics)> {
        self.check_method()?;
        match self.method {
            FitMethod::Percentile => {
                if x.len() < 2 {
                    return Err(Error::InsufficientSample { size: x.len(), required: 2 });
                }
                let mut sorted = x.to_vec();
                sorted.sort_by(f64::total_cmp);
                let nodes = self.node_plan()?.build_nodes()?;
                let xs: Vec<f64> = nodes.iter().map(|&p| empirical_quantile(&sorted, p)).collect();
                let fit = fit_percentile_points(&nodes, &xs, self.degree())?;
                let model = fit.model.with_source(format!("sample[n={}]", x.len()));
                Ok((model, FitDiagnostics::Percentile(fit.report)))
            }
            _ => {
                let fit = fit_pwm_sample(x, self.degree(), self.pwm_options())?;
                Ok((fit.model, FitDiagnostics::Pwm(fit.report)))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub family: Family,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_table: Option<QuantileTable>,
}

impl DistributionSpec {
    pub fn build(&self) -> Result<TargetDistribution> {
        match (&self.family, &self.quantile_table) {
            (Family::Custom, Some(t)) => TargetDistribution::custom(QuantileTable::new(t.p.clone(), t.x.clone())?),
            (Family::Custom, None) => Err(Error::schema("quantile_table", "required for the custom family")),
            (_, Some(_)) => Err(Error::schema("quantile_table", "only allowed for the custom family")),
            (f, None) => TargetDistribution::new(*f, &self.params),
        }
    }
}

/// A model given inline or as a path to a model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(String),
    Inline(ModelFile),
}

/// A sample file, optionally naming the column to use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleRef {
    Path(String),
    Column { path: String, column: Option<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginalSpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleRef>,
    /// Overrides the spec-level fit settings for this marginal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSpec>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentChoice {
    #[default]
    Model,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSpec {
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

fn default_count() -> usize {
    1000
}

impl Default for GenerationSpec {
    fn default() -> Self {
        Self {
            count: default_count(),
            seed: 0,
            stream_id: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub samples: Option<String>,
    #[serde(default)]
    pub report: Option<String>,
}

/// Root of the spec file consumed by `rho --spec` and `gen --spec`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub marginals: Vec<MarginalSpec>,
    #[serde(default)]
    pub fit: FitSpec,
    /// Target correlation matrix, one array per row.
    pub correlation: Vec<Vec<f64>>,
    #[serde(default)]
    pub moments: MomentChoice,
    #[serde(default)]
    pub nearest_pd: bool,
    #[serde(default)]
    pub generation: GenerationSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A marginal after its model has been loaded or fitted.
#[derive(Debug, Clone)]
pub struct ResolvedMarginal {
    pub label: String,
    pub model: PolynomialModel,
    pub target: Option<TargetDistribution>,
    /// (mean, std) of the target when known: the distribution's or the sample's.
    pub target_moments: Option<(f64, f64)>,
    pub diagnostics: Option<FitDiagnostics>,
}

#[derive(Debug, Clone)]
pub struct ResolvedSpec {
    pub marginals: Vec<ResolvedMarginal>,
    pub rx: DMatrix<f64>,
    pub moments: MomentChoice,
    pub options: RzOptions,
    pub generation: GenerationSpec,
    pub output: OutputSpec,
}

impl CorrelationSpec {
    pub fn load(path: &Path) -> Result<ResolvedSpec> {
        let spec: CorrelationSpec = read_json(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        spec.resolve(&base)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<ResolvedSpec> {
        parse_json::<CorrelationSpec>(text)?.resolve(base)
    }

    /// Checks structural invariants without fitting anything.
    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                return Err(Error::schema(
                    "schema_version",
                    format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
                ));
            }
        }
        let m = self.marginals.len();
        if m == 0 {
            return Err(Error::schema("marginals", "at least one marginal is required"));
        }
        let mut seen = HashSet::new();
        for (i, mg) in self.marginals.iter().enumerate() {
            if mg.label.trim().is_empty() {
                return Err(Error::schema(format!("marginals[{i}].label"), "must not be empty"));
            }
            if !seen.insert(mg.label.as_str()) {
                return Err(Error::schema(
                    format!("marginals[{i}].label"),
                    format!("duplicate label `{}`", mg.label),
                ));
            }
            let sources = mg.distribution.is_some() as u8 + mg.model.is_some() as u8 + mg.sample.is_some() as u8;
            if sources != 1 {
                return Err(Error::schema(
                    format!("marginals[{i}]"),
                    "exactly one of `distribution`, `model` or `sample` is required",
                ));
            }
        }
        if self.correlation.len() != m {
            return Err(Error::schema(
                "correlation",
                format!("{} rows for {m} marginals", self.correlation.len()),
            ));
        }
        for (i, row) in self.correlation.iter().enumerate() {
            if row.len() != m {
                return Err(Error::schema(
                    format!("correlation[{i}]"),
                    format!("{} entries for {m} marginals", row.len()),
                ));
            }
            if row[i] != 1.0 {
                return Err(Error::schema(format!("correlation[{i}][{i}]"), "diagonal must be 1"));
            }
            for (j, &v) in row.iter().enumerate() {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(Error::schema(format!("correlation[{i}][{j}]"), "must lie in [-1, 1]"));
                }
                if v != self.correlation[j][i] {
                    return Err(Error::schema(
                        format!("correlation[{i}][{j}]"),
                        format!("matrix is not symmetric ({v} vs {})", self.correlation[j][i]),
                    ));
                }
            }
        }
        if self.generation.count == 0 {
            return Err(Error::schema("generation.count", "must be at least 1"));
        }
        Ok(())
    }

    /// Validates, then loads or fits every marginal. Relative paths are
    /// taken from `base`.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedSpec> {
        self.validate()?;
        let m = self.marginals.len();
        let at = |p: &str| -> PathBuf {
            let p = Path::new(p);
            if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
        };
        let mut marginals = Vec::with_capacity(m);
        for (i, mg) in self.marginals.iter().enumerate() {
            let key = |k: &str| format!("marginals[{i}].{k}");
            let fit = mg.fit.as_ref().unwrap_or(&self.fit);
            let resolved = if let Some(ds) = &mg.distribution {
                let d = ds.build().map_err(|e| rekey(e, &key("distribution")))?;
                let (model, diag) = fit.fit_distribution(&d).map_err(|e| rekey(e, &key("fit")))?;
                ResolvedMarginal {
                    label: mg.label.clone(),
                    model: model.with_source(d.label()),
                    target_moments: Some(d.moments()),
                    target: Some(d),
                    diagnostics: Some(diag),
                }
            } else if let Some(mr) = &mg.model {
                let model = match mr {
                    ModelRef::Path(p) => read_model(&at(p)),
                    ModelRef::Inline(f) => PolynomialModel::try_from(f.clone()),
                }
                .map_err(|e| rekey(e, &key("model")))?;
                ResolvedMarginal {
                    label: mg.label.clone(),
                    model,
                    target: None,
                    target_moments: None,
                    diagnostics: None,
                }
            } else {
                let (path, column) = match mg.sample.as_ref().expect("validated") {
                    SampleRef::Path(p) => (p.as_str(), None),
                    SampleRef::Column { path, column } => (path.as_str(), column.as_deref()),
                };
                let x = read_sample_column(&at(path), column)?;
                let (model, diag) = fit.fit_sample(&x).map_err(|e| rekey(e, &key("fit")))?;
                let n = x.len() as f64;
                let mean = x.iter().sum::<f64>() / n;
                let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                ResolvedMarginal {
                    label: mg.label.clone(),
                    model,
                    target: None,
                    target_moments: Some((mean, sd)),
                    diagnostics: Some(diag),
                }
            };
            marginals.push(resolved);
        }
        if self.moments == MomentChoice::Target {
            if let Some(i) = marginals.iter().position(|r| r.target_moments.is_none()) {
                return Err(Error::schema(
                    format!("marginals[{i}]"),
                    "target moments are unknown for a model marginal; use `\"moments\": \"model\"`",
                ));
            }
        }
        let rx = DMatrix::from_fn(m, m, |i, j| self.correlation[i][j]);
        Ok(ResolvedSpec {
            marginals,
            rx,
            moments: self.moments,
            options: RzOptions {
                nearest_pd: self.nearest_pd,
            },
            generation: self.generation.clone(),
            output: self.output.clone(),
        })
    }
}

/// Attaches a key to schema-less errors so messages name their origin.
fn rekey(e: Error, key: &str) -> Error {
    match e {
        Error::Schema { key: k, message } => Error::Schema {
            key: format!("{key}.{k}"),
            message,
        },
        Error::Domain(msg) => Error::Schema {
            key: key.to_string(),
            message: msg,
        },
        other => other,
    }
}

impl ResolvedSpec {
    pub fn labels(&self) -> Vec<&str> {
        self.marginals.iter().map(|m| m.label.as_str()).collect()
    }

    pub fn models(&self) -> Vec<PolynomialModel> {
        self.marginals.iter().map(|m| m.model.clone()).collect()
    }

    pub fn target_moments(&self) -> Option<Vec<(f64, f64)>> {
        match self.moments {
            MomentChoice::Model => None,
            MomentChoice::Target => self.marginals.iter().map(|m| m.target_moments).collect(),
        }
    }

    pub fn rng(&self) -> RngSpec {
        RngSpec::new(self.generation.seed).with_stream(self.generation.stream_id)
    }

    pub fn vector_model(&self) -> Result<VectorModel> {
        let models = self.models();
        let tm = self.target_moments();
        let sol = crate::correlation::build_rz_with(&models, &self.rx, tm.as_deref(), self.options)?;
        Ok(VectorModel::from_solution(models, self.rx.clone(), sol))
    }
}
