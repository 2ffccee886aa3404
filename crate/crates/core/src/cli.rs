//! Command-line front end: `fit`, `rho`, `gen` and `validate`.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{
    parse_distribution, read_model, read_sample_column, CorrelationSpec, FitSpec, ResolvedSpec,
    SCHEMA_VERSION,
};
use crate::correlation::{build_rho_polynomial, rho_x_bounds, solve_rho_z, MomentSource, RzOptions};
use crate::diagnostics::{density_compare, epsilon_report};
use crate::distributions::TargetDistribution;
use crate::error::{Error, Result};
use crate::fixtures::{load_fixture, run_fixture};
use crate::numerics::normal_quantile;
use crate::poly_model::{FitMethod, ModelFile};
use crate::sampler::{generate, sample_correlation, SampleMatrix};

#[derive(Debug, Parser)]
#[command(name = "polynorta", version, about = "Polynomial normal transformation models and correlated sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a polynomial model to a distribution or a sample.
    Fit(FitArgs),
    /// Solve normal-space correlations for a model pair or a spec file.
    Rho(RhoArgs),
    /// Generate correlated vectors from a spec file.
    Gen(GenArgs),
    /// Report the percentile error of a model, or run a bundled fixture.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Target distribution as `family:p1,p2`, e.g. `beta:2,2`.
    #[arg(long, conflicts_with = "sample", required_unless_present = "sample")]
    dist: Option<String>,
    /// CSV file holding an observed sample.
    #[arg(long)]
    sample: Option<PathBuf>,
    /// Column of the sample file (header name or 0-based index).
    #[arg(long, requires = "sample")]
    column: Option<String>,
    #[arg(long, default_value = "pwm")]
    method: FitMethod,
    /// Polynomial degree (default 11 for pwm, 19 for percentile).
    #[arg(long)]
    degree: Option<usize>,
    /// Tail probability of the percentile node plan.
    #[arg(long)]
    alpha: Option<f64>,
    /// Node counts of the low, middle and high blocks, e.g. `14,16,15`.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    nodes: Option<Vec<usize>>,
    /// File of explicit node probabilities (comma or whitespace separated).
    #[arg(long, conflicts_with_all = ["alpha", "nodes"])]
    node_list: Option<PathBuf>,
    /// Permit PWM degrees above the recommended caps.
    #[arg(long)]
    allow_high_degree: bool,
    /// Number of grid points of the percentile-error report.
    #[arg(long, default_value_t = 10_000)]
    eps_grid: usize,
    /// Write the model file here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RhoArgs {
    #[arg(long, requires_all = ["model2", "rho_x"], conflicts_with = "spec")]
    model1: Option<PathBuf>,
    #[arg(long)]
    model2: Option<PathBuf>,
    /// Target correlation(s), comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    rho_x: Option<Vec<f64>>,
    /// Normalize with target moments from these distributions instead of
    /// the model-implied ones.
    #[arg(long, requires = "dist2")]
    dist1: Option<String>,
    #[arg(long, requires = "dist1")]
    dist2: Option<String>,
    /// Spec file with marginals and a correlation matrix.
    #[arg(long, visible_alias = "matrix", required_unless_present = "model1")]
    spec: Option<PathBuf>,
    /// Clip eigenvalues when the solved matrix is not positive definite.
    #[arg(long)]
    nearest_pd: bool,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stream: Option<u64>,
    /// Samples CSV (defaults to the spec's output path, else stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print a JSON report with sample moments and correlations.
    #[arg(long)]
    report: bool,
    #[arg(long)]
    nearest_pd: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Bundled fixture name or fixture file.
    #[arg(long, conflicts_with_all = ["model", "dist"])]
    fixture: Option<String>,
    #[arg(long, requires = "dist", required_unless_present = "fixture")]
    model: Option<PathBuf>,
    #[arg(long)]
    dist: Option<String>,
    /// Probability range `lo,hi` (defaults to the model's probit range or 0.001,0.999).
    #[arg(long, value_delimiter = ',', num_args = 2)]
    range: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000)]
    grid: usize,
    /// Write the per-point table as CSV.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Write a density histogram comparison as CSV.
    #[arg(long)]
    density: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long, default_value_t = 1_000_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(a, &mut out),
        Command::Rho(a) => cmd_rho(a, &mut out),
        Command::Gen(a) => cmd_gen(a, &mut out),
        Command::Validate(a) => cmd_validate(a, &mut out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dist_arg(s: &str, flag: &str) -> Result<TargetDistribution> {
    parse_distribution(s).map_err(|e| match e {
        Error::Domain(message) | Error::UnsupportedMoment(message) => Error::Schema {
            key: flag.into(),
            message,
        },
        Error::Schema { message, .. } => Error::Schema {
            key: flag.into(),
            message,
        },
        other => other,
    })
}

fn emit(out: &mut dyn Write, v: &Value) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string_pretty(v).expect("json value"))?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn read_node_list(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::schema("node-list", format!("{}: `{t}`: {e}", path.display())))
        })
        .collect()
}

fn cmd_fit(a: FitArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = FitSpec {
        method: a.method,
        degree: a.degree,
        alpha: a.alpha,
        nodes: a.nodes.map(|v| [v[0], v[1], v[2]]),
        node_list: a.node_list.as_deref().map(read_node_list).transpose()?,
        allow_high_degree: a.allow_high_degree,
    };
    let (model, diagnostics, fit_report) = if let Some(s) = &a.dist {
        let d = dist_arg(s, "--dist")?;
        let (model, diag) = spec.fit_distribution(&d)?;
        let range = model.probit_range().unwrap_or((0.001, 0.999));
        let report = epsilon_report(&model, &d, range, a.eps_grid, false)?;
        (model, diag, Some(report))
    } else {
        let path = a.sample.as_deref().expect("clap enforces --dist or --sample");
        let x = read_sample_column(path, a.column.as_deref())?;
        let (model, diag) = spec.fit_sample(&x)?;
        (model, diag, None)
    };
    let (lo, hi) = model.probit_range().unwrap_or((0.001, 0.999));
    let monotone = model
        .monotonicity_check((normal_quantile(lo)?, normal_quantile(hi)?))
        .monotone;
    if let Some(path) = &a.out {
        write_file(path, &(model.to_json() + "\n"))?;
    }
    emit(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "fit",
            "model": ModelFile::from(&model),
            "diagnostics": diagnostics,
            "monotone": monotone,
            "fit_report": fit_report,
        }),
    )?;
    Ok(0)
}

fn cmd_rho(a: RhoArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(spec_path) = &a.spec {
        let mut resolved = CorrelationSpec::load(spec_path)?;
        if a.nearest_pd {
            resolved.options.nearest_pd = true;
        }
        return rho_matrix(&resolved, out);
    }
    let m1 = read_model(a.model1.as_deref().expect("clap enforces --model1"))?;
    let m2 = read_model(a.model2.as_deref().expect("clap enforces --model2"))?;
    let source = match (&a.dist1, &a.dist2) {
        (Some(d1), Some(d2)) => {
            let (d1, d2) = (dist_arg(d1, "--dist1")?, dist_arg(d2, "--dist2")?);
            MomentSource::Target {
                mu1: d1.mean(),
                sigma1: d1.std(),
                mu2: d2.mean(),
                sigma2: d2.std(),
            }
        }
        _ => MomentSource::Model,
    };
    let rp = build_rho_polynomial(&m1, &m2, source)?;
    let (lower, upper) = rho_x_bounds(&rp)?;
    let results = a
        .rho_x
        .unwrap_or_default()
        .into_iter()
        .map(|rx| Ok(json!({ "rho_x": rx, "rho_z": solve_rho_z(&rp, rx)? })))
        .collect::<Result<Vec<Value>>>()?;
    emit(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "rho",
            "moments": source,
            "polynomial": rp,
            "bounds": [lower, upper],
            "results": results,
        }),
    )?;
    Ok(0)
}

fn rho_matrix(resolved: &ResolvedSpec, out: &mut dyn Write) -> Result<i32> {
    let vm = resolved.vector_model()?;
    let models = resolved.models();
    let tm = resolved.target_moments();
    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in 0..i {
            let source = match &tm {
                None => MomentSource::Model,
                Some(t) => MomentSource::Target {
                    mu1: t[i].0,
                    sigma1: t[i].1,
                    mu2: t[j].0,
                    sigma2: t[j].1,
                },
            };
            let rp = build_rho_polynomial(&models[i], &models[j], source)?;
            let (lower, upper) = rho_x_bounds(&rp)?;
            pairs.push(json!({
                "i": i,
                "j": j,
                "rho_x": resolved.rx[(i, j)],
                "rho_z": vm.normal_correlation()[(i, j)],
                "bounds": [lower, upper],
            }));
        }
    }
    emit(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "rho",
            "labels": resolved.labels(),
            "rx": matrix_rows(&resolved.rx),
            "rz": matrix_rows(vm.normal_correlation()),
            "cholesky": matrix_rows(vm.cholesky_factor()),
            "repaired": vm.repaired(),
            "pairs": pairs,
        }),
    )?;
    Ok(0)
}

/// Writes samples as CSV with a header of labels and 17 significant digits.
pub fn write_samples_csv(w: impl Write, labels: &[&str], s: &SampleMatrix) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io_err = |e: csv::Error| Error::Io(e.to_string());
    wr.write_record(labels).map_err(io_err)?;
    let mut fields = Vec::with_capacity(s.cols());
    for i in 0..s.rows() {
        fields.clear();
        fields.extend(s.row(i).iter().map(|v| format!("{v:.16e}")));
        wr.write_record(&fields).map_err(io_err)?;
    }
    wr.flush()?;
    Ok(())
}

fn column_moments(s: &SampleMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = s.rows() as f64;
    (0..s.cols())
        .map(|j| {
            let col = s.column(j);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, var.sqrt())
        })
        .unzip()
}

fn cmd_gen(a: GenArgs, out: &mut dyn Write) -> Result<i32> {
    let mut resolved = CorrelationSpec::load(&a.spec)?;
    if let Some(c) = a.count {
        if c == 0 {
            return Err(Error::schema("--count", "must be at least 1"));
        }
        resolved.generation.count = c;
    }
    if let Some(s) = a.seed {
        resolved.generation.seed = s;
    }
    if let Some(s) = a.stream {
        resolved.generation.stream_id = s;
    }
    if a.nearest_pd {
        resolved.options = RzOptions { nearest_pd: true };
    }
    let vm = resolved.vector_model()?;
    let samples = generate(&vm, resolved.generation.count, resolved.rng());
    let labels = resolved.labels();
    let base = a.spec.parent().map(Path::to_path_buf).unwrap_or_default();
    let target = a
        .out
        .clone()
        .or_else(|| resolved.output.samples.as_ref().map(|p| base.join(p)));
    match &target {
        Some(path) => {
            let f = File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            write_samples_csv(BufWriter::new(f), &labels, &samples)?;
        }
        None => write_samples_csv(&mut *out, &labels, &samples)?,
    }
    let report_path = resolved.output.report.as_ref().map(|p| base.join(p));
    if a.report || report_path.is_some() {
        let r = if samples.rows() >= 2 {
            Some(matrix_rows(&sample_correlation(&samples)?))
        } else {
            None
        };
        let (means, stds) = column_moments(&samples);
        let report = json!({
            "schema_version": SCHEMA_VERSION,
            "command": "gen",
            "count": samples.rows(),
            "seed": resolved.generation.seed,
            "stream_id": resolved.generation.stream_id,
            "labels": labels,
            "means": means,
            "stds": stds,
            "sample_correlation": r,
            "target_correlation": matrix_rows(&resolved.rx),
            "normal_correlation": matrix_rows(vm.normal_correlation()),
            "repaired": vm.repaired(),
        });
        if let Some(p) = &report_path {
            write_file(p, &(serde_json::to_string_pretty(&report).expect("json value") + "\n"))?;
        }
        if a.report {
            if target.is_some() {
                emit(out, &report)?;
            } else {
                emit(&mut std::io::stderr(), &report)?;
            }
        }
    }
    Ok(0)
}

fn cmd_validate(a: ValidateArgs, out: &mut dyn Write) -> Result<i32> {
    if let Some(name) = &a.fixture {
        let (name, fixture) = load_fixture(name)?;
        let outcome = run_fixture(&name, &fixture)?;
        let pass = outcome.pass;
        emit(
            out,
            &json!({ "schema_version": SCHEMA_VERSION, "command": "validate", "fixture": outcome }),
        )?;
        return Ok(if pass { 0 } else { 1 });
    }
    let model = read_model(a.model.as_deref().expect("clap enforces --model"))?;
    let d = dist_arg(a.dist.as_deref().expect("clap enforces --dist"), "--dist")?;
    let range = match &a.range {
        Some(r) => (r[0], r[1]),
        None => model.probit_range().unwrap_or((0.001, 0.999)),
    };
    let report = epsilon_report(&model, &d, range, a.grid, a.points.is_some())
        .map_err(|e| match e {
            Error::Domain(message) => Error::Schema { key: "--range".into(), message },
            other => other,
        })?;
    if let Some(p) = &a.points {
        write_file(p, &report.points_csv().expect("points kept"))?;
    }
    let density = match &a.density {
        Some(p) => {
            let table = density_compare(&model, &d, a.bins, a.draws, a.seed, None)?;
            write_file(p, &table.to_csv())?;
            Some(json!({ "bins": a.bins, "draws": a.draws, "outside": table.outside, "sup_gap": table.sup_gap() }))
        }
        None => None,
    };
    let summary = json!({
        "probit_range": report.probit_range,
        "grid_size": report.grid_size,
        "eps_avg": report.eps_avg,
        "eps_min": report.eps_min,
        "eps_max": report.eps_max,
        "skipped_points": report.skipped_points,
    });
    emit(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "validate",
            "report": summary,
            "density": density,
        }),
    )?;
    Ok(0)
}
