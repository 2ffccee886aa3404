//! The polynomial normal transformation X ≈ Σ a_k Z^k.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::compensated_sum;

/// Largest supported polynomial degree. Beyond it the normal-PWM system is
/// numerically singular and the product-moment factors exceed exact
/// double-precision integers.
pub const MAX_DEGREE: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Pwm,
    Percentile,
    Exact,
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitMethod::Pwm => "pwm",
            FitMethod::Percentile => "percentile",
            FitMethod::Exact => "exact",
        })
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pwm" => Ok(FitMethod::Pwm),
            "percentile" => Ok(FitMethod::Percentile),
            "exact" => Ok(FitMethod::Exact),
            other => Err(Error::schema("fit_method", format!("unknown method `{other}`"))),
        }
    }
}

/// Polynomial in a standard normal variable. `coeffs[k]` multiplies `Z^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    coeffs: Vec<f64>,
    fit_method: FitMethod,
    probit_range: Option<(f64, f64)>,
    source: Option<String>,
}

impl PolynomialModel {
    pub fn new(coeffs: Vec<f64>, fit_method: FitMethod) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::domain("a polynomial model needs degree ≥ 1"));
        }
        if coeffs.len() - 1 > MAX_DEGREE {
            return Err(Error::domain(format!(
                "degree {} exceeds the supported maximum of {MAX_DEGREE}; the normal-PWM \
                 coefficient matrix is already near singular (determinant ~1e-37) at degree 12",
                coeffs.len() - 1
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::domain("model coefficients must be finite"));
        }
        Ok(Self {
            coeffs,
            fit_method,
            probit_range: None,
            source: None,
        })
    }

    /// Exact affine model of Normal(mean, std).
    pub fn affine(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![mean, std], FitMethod::Exact)
    }

    pub fn identity() -> Self {
        Self::affine(0.0, 1.0).expect("identity model")
    }

    pub fn with_probit_range(mut self, range: (f64, f64)) -> Self {
        self.probit_range = Some(range);
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn fit_method(&self) -> FitMethod {
        self.fit_method
    }

    pub fn probit_range(&self) -> Option<(f64, f64)> {
        self.probit_range
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    /// Copy with every coefficient multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut m = Self::new(self.coeffs.iter().map(|a| a * c).collect(), self.fit_method)?;
        m.probit_range = self.probit_range;
        m.source = self.source.clone();
        Ok(m)
    }

    /// Horner evaluation of Σ a_k z^k.
    #[inline]
    pub fn evaluate(&self, z: f64) -> f64 {
        let mut acc = self.coeffs[self.coeffs.len() - 1];
        for &a in self.coeffs.iter().rev().skip(1) {
            acc = acc * z + a;
        }
        acc
    }

    /// dX/dZ = Σ k·a_k z^{k−1}.
    pub fn derivative(&self, z: f64) -> f64 {
        let n = self.degree();
        let mut acc = n as f64 * self.coeffs[n];
        for k in (1..n).rev() {
            acc = acc * z + k as f64 * self.coeffs[k];
        }
        acc
    }

    fn second_derivative(&self, z: f64) -> f64 {
        let n = self.degree();
        if n < 2 {
            return 0.0;
        }
        let mut acc = (n * (n - 1)) as f64 * self.coeffs[n];
        for k in (2..n).rev() {
            acc = acc * z + (k * (k - 1)) as f64 * self.coeffs[k];
        }
        acc
    }

    pub fn transform_sample(&self, z: &[f64]) -> Vec<f64> {
        z.iter().map(|&v| self.evaluate(v)).collect()
    }

    /// Mean and standard deviation of the model under Z ~ N(0, 1).
    pub fn model_moments(&self) -> Result<(f64, f64)> {
        let a = &self.coeffs;
        let mean = compensated_sum(
            a.iter()
                .enumerate()
                .filter(|(k, _)| k % 2 == 0)
                .map(|(k, &ak)| ak * normal_raw_moment(k))
                .collect(),
        );
        let mut terms = Vec::with_capacity(a.len() * a.len());
        for (j, &aj) in a.iter().enumerate() {
            for (k, &ak) in a.iter().enumerate() {
                if (j + k) % 2 == 0 {
                    terms.push(aj * ak * normal_raw_moment(j + k));
                }
            }
        }
        let second = compensated_sum(terms);
        let var = second - mean * mean;
        if var < -1e-12 {
            return Err(Error::Internal(format!(
                "model variance evaluated negative ({var:e})"
            )));
        }
        Ok((mean, var.max(0.0).sqrt()))
    }

    /// Scans dX/dZ over `z_range` on a 10⁴-point grid together with the
    /// interior minima of the derivative.
    pub fn monotonicity_check(&self, z_range: (f64, f64)) -> MonotonicityReport {
        const GRID: usize = 10_000;
        let (lo, hi) = z_range;
        let step = (hi - lo) / (GRID - 1) as f64;
        let mut violations = Vec::new();
        let mut prev_curv = self.second_derivative(lo);
        let mut prev_z = lo;
        for i in 0..GRID {
            let z = if i == GRID - 1 { hi } else { lo + step * i as f64 };
            if self.derivative(z) < 0.0 {
                violations.push(z);
            }
            // A sign change of d²X/dZ² from − to + brackets a minimum of dX/dZ.
            let curv = self.second_derivative(z);
            if i > 0 && prev_curv < 0.0 && curv > 0.0 {
                let zmin = bisect_sign_change(|t| self.second_derivative(t), prev_z, z);
                if self.derivative(zmin) < 0.0 {
                    violations.push(zmin);
                }
            }
            prev_curv = curv;
            prev_z = z;
        }
        violations.sort_by(f64::total_cmp);
        violations.dedup();
        MonotonicityReport {
            monotone: violations.is_empty(),
            violations,
        }
    }
}

fn bisect_sign_change<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let fa_neg = f(a) < 0.0;
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) < 0.0) == fa_neg {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub monotone: bool,
    /// z values at which dX/dZ < 0.
    pub violations: Vec<f64>,
}

/// E[Z^{2s}] = (2s)! / (2^s s!) = (2s − 1)!!.
pub fn normal_even_moment(s: usize) -> Result<f64> {
    if 2 * s > 40 {
        return Err(Error::Overflow(format!(
            "E[Z^{}] is outside the supported range (order ≤ 40)",
            2 * s
        )));
    }
    Ok((1..=s).map(|i| (2 * i - 1) as f64).product())
}

/// E[Z^k] for a standard normal Z: zero for odd k, (k−1)!! for even k.
pub fn normal_raw_moment(k: usize) -> f64 {
    if k % 2 == 1 {
        0.0
    } else {
        (1..=k / 2).map(|i| (2 * i - 1) as f64).product()
    }
}

/// On-disk model representation. Coefficients are decimal strings so that
/// every f64 round-trips exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub degree: usize,
    pub coeffs: Vec<String>,
    pub fit_method: FitMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probit_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl From<&PolynomialModel> for ModelFile {
    fn from(m: &PolynomialModel) -> Self {
        ModelFile {
            degree: m.degree(),
            coeffs: m.coeffs.iter().map(|c| format!("{c:e}")).collect(),
            fit_method: m.fit_method,
            probit_range: m.probit_range.map(|(a, b)| [a, b]),
            source: m.source.clone(),
        }
    }
}

impl TryFrom<ModelFile> for PolynomialModel {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        let coeffs = f
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::schema(format!("coeffs[{i}]"), format!("`{s}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if coeffs.len() != f.degree + 1 {
            return Err(Error::schema(
                "coeffs",
                format!("degree {} needs {} coefficients, found {}", f.degree, f.degree + 1, coeffs.len()),
            ));
        }
        let mut m = PolynomialModel::new(coeffs, f.fit_method)?;
        if let Some([a, b]) = f.probit_range {
            if !(0.0 < a && a < b && b < 1.0) {
                return Err(Error::schema("probit_range", "must satisfy 0 < lower < upper < 1"));
            }
            m.probit_range = Some((a, b));
        }
        m.source = f.source;
        Ok(m)
    }
}

impl PolynomialModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from(self)).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::schema("model", e.to_string()))?;
        file.try_into()
    }
}
