//! Catalog of continuous target marginals.
//!
//! Parameter conventions (the `params` array, in order):
//!
//! | family       | params                         |
//! |--------------|--------------------------------|
//! | Normal       | mean, std                      |
//! | Lognormal    | log-mean, log-std              |
//! | Gamma        | shape, scale                   |
//! | Beta         | a, b                           |
//! | Weibull      | scale, shape                   |
//! | Uniform      | lower, upper                   |
//! | Gumbel       | location, scale (maximum type) |
//! | Logistic     | location, scale                |
//! | StudentT     | degrees of freedom ν           |
//! | ChiSquared   | degrees of freedom k           |
//! | Rayleigh     | σ                              |
//! | Exponential  | rate λ                         |
//! | F            | d₁, d₂                         |
//!
//! `Custom` takes no parameters and is defined by a tabulated quantile
//! function instead.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    find_root_bracketed, gamma, integrate, ln_gamma, normal_cdf, normal_pdf, normal_quantile,
    normal_sf, reg_inc_beta, reg_inc_gamma, reg_inc_gamma_upper, QuadratureSpec, RootTolerance,
};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Normal,
    Lognormal,
    Gamma,
    Beta,
    Weibull,
    Uniform,
    Gumbel,
    Logistic,
    #[serde(rename = "t", alias = "studentt")]
    StudentT,
    #[serde(rename = "chi2", alias = "chisquared")]
    ChiSquared,
    Rayleigh,
    Exponential,
    F,
    Custom,
}

impl Family {
    pub const ALL: [Family; 14] = [
        Family::Normal,
        Family::Lognormal,
        Family::Gamma,
        Family::Beta,
        Family::Weibull,
        Family::Uniform,
        Family::Gumbel,
        Family::Logistic,
        Family::StudentT,
        Family::ChiSquared,
        Family::Rayleigh,
        Family::Exponential,
        Family::F,
        Family::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::Lognormal => "lognormal",
            Family::Gamma => "gamma",
            Family::Beta => "beta",
            Family::Weibull => "weibull",
            Family::Uniform => "uniform",
            Family::Gumbel => "gumbel",
            Family::Logistic => "logistic",
            Family::StudentT => "t",
            Family::ChiSquared => "chi2",
            Family::Rayleigh => "rayleigh",
            Family::Exponential => "exponential",
            Family::F => "f",
            Family::Custom => "custom",
        }
    }

    fn param_count(self) -> usize {
        match self {
            Family::StudentT | Family::ChiSquared | Family::Rayleigh | Family::Exponential => 1,
            Family::Custom => 0,
            _ => 2,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let found = match lower.as_str() {
            "lnn" | "lognorm" => Some(Family::Lognormal),
            "studentt" | "student_t" | "student-t" => Some(Family::StudentT),
            "chisquared" | "chi-squared" | "chi_squared" => Some(Family::ChiSquared),
            "exp" => Some(Family::Exponential),
            _ => Family::ALL.iter().copied().find(|f| f.name() == lower),
        };
        found.ok_or_else(|| Error::domain(format!("unknown distribution family `{s}`")))
    }
}

/// Strictly increasing (p, x) pairs with monotone cubic (Fritsch–Carlson)
/// interpolation between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub p: Vec<f64>,
    pub x: Vec<f64>,
    #[serde(skip)]
    slopes: Vec<f64>,
}

impl QuantileTable {
    pub fn new(p: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        if p.len() != x.len() || p.len() < 2 {
            return Err(Error::schema(
                "quantile_table",
                "needs at least two (p, x) pairs of equal length",
            ));
        }
        if p.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::schema("quantile_table", "entries must be finite"));
        }
        if p[0] < 0.0 || p[p.len() - 1] > 1.0 {
            return Err(Error::schema("quantile_table", "probabilities must lie in [0, 1]"));
        }
        if p.windows(2).any(|w| w[1] <= w[0]) || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::schema(
                "quantile_table",
                "p and x must both be strictly increasing",
            ));
        }
        let slopes = pchip_slopes(&p, &x);
        Ok(Self { p, x, slopes })
    }

    fn ensure_slopes(&mut self) {
        if self.slopes.len() != self.p.len() {
            self.slopes = pchip_slopes(&self.p, &self.x);
        }
    }

    fn segment(&self, p: f64) -> usize {
        let idx = self.p.partition_point(|&v| v <= p);
        idx.saturating_sub(1).min(self.p.len() - 2)
    }

    fn eval(&self, p: f64) -> f64 {
        let n = self.p.len();
        if p <= self.p[0] {
            return self.x[0];
        }
        if p >= self.p[n - 1] {
            return self.x[n - 1];
        }
        let i = self.segment(p);
        let h = self.p[i + 1] - self.p[i];
        let t = (p - self.p[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.x[i] + h10 * h * self.slopes[i] + h01 * self.x[i + 1] + h11 * h * self.slopes[i + 1]
    }

    fn derivative(&self, p: f64) -> f64 {
        let n = self.p.len();
        if p < self.p[0] || p > self.p[n - 1] {
            return 0.0;
        }
        let i = self.segment(p);
        let h = self.p[i + 1] - self.p[i];
        let t = (p - self.p[i]) / h;
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.x[i] + d10 * self.slopes[i] + d01 * self.x[i + 1] + d11 * self.slopes[i + 1]
    }

    /// Inverse of the interpolant; x is clamped into the table range.
    fn inverse(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return self.p[0];
        }
        if x >= self.x[n - 1] {
            return self.p[n - 1];
        }
        let i = self.x.partition_point(|&v| v <= x).saturating_sub(1).min(n - 2);
        let (mut a, mut b) = (self.p[i], self.p[i + 1]);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            if self.eval(m) < x {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }
}

fn pchip_slopes(p: &[f64], x: &[f64]) -> Vec<f64> {
    let n = p.len();
    let delta: Vec<f64> = (0..n - 1).map(|i| (x[i + 1] - x[i]) / (p[i + 1] - p[i])).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut m = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = p[i] - p[i - 1];
        let h1 = p[i + 1] - p[i];
        let w1 = 2.0 * h1 + h0;
        let w2 = h1 + 2.0 * h0;
        m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(p[1] - p[0], p[2] - p[1], delta[0], delta[1]);
    m[n - 1] = end(
        p[n - 1] - p[n - 2],
        p[n - 2] - p[n - 3],
        delta[n - 2],
        delta[n - 3],
    );
    m
}

/// A target marginal: CDF, quantile, density, support and the first two
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    family: Family,
    params: Vec<f64>,
    table: Option<QuantileTable>,
    support: (f64, f64),
    mean: f64,
    std: f64,
}

impl TargetDistribution {
    pub fn new(family: Family, params: &[f64]) -> Result<Self> {
        if family == Family::Custom {
            return Err(Error::domain("custom distributions need a quantile table"));
        }
        if params.len() != family.param_count() {
            return Err(Error::domain(format!(
                "{family} expects {} parameter(s), got {}",
                family.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{family} parameters must be finite")));
        }
        let positive = |i: usize, what: &str| -> Result<()> {
            if params[i] > 0.0 {
                Ok(())
            } else {
                Err(Error::domain(format!("{family} {what} must be positive, got {}", params[i])))
            }
        };
        let inf = f64::INFINITY;
        let support = match family {
            Family::Normal => {
                positive(1, "std")?;
                (-inf, inf)
            }
            Family::Lognormal => {
                positive(1, "log-std")?;
                (0.0, inf)
            }
            Family::Gamma => {
                positive(0, "shape")?;
                positive(1, "scale")?;
                (0.0, inf)
            }
            Family::Beta => {
                positive(0, "a")?;
                positive(1, "b")?;
                (0.0, 1.0)
            }
            Family::Weibull => {
                positive(0, "scale")?;
                positive(1, "shape")?;
                (0.0, inf)
            }
            Family::Uniform => {
                if params[1] <= params[0] {
                    return Err(Error::domain("uniform upper bound must exceed lower bound"));
                }
                (params[0], params[1])
            }
            Family::Gumbel | Family::Logistic => {
                positive(1, "scale")?;
                (-inf, inf)
            }
            Family::StudentT => {
                positive(0, "degrees of freedom")?;
                (-inf, inf)
            }
            Family::ChiSquared => {
                positive(0, "degrees of freedom")?;
                (0.0, inf)
            }
            Family::Rayleigh => {
                positive(0, "sigma")?;
                (0.0, inf)
            }
            Family::Exponential => {
                positive(0, "rate")?;
                (0.0, inf)
            }
            Family::F => {
                positive(0, "d1")?;
                positive(1, "d2")?;
                (0.0, inf)
            }
            Family::Custom => unreachable!(),
        };
        let (mean, std) = closed_form_moments(family, params)?;
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::UnsupportedMoment(format!(
                "{family}{params:?} has mean {mean}, std {std}"
            )));
        }
        Ok(Self {
            family,
            params: params.to_vec(),
            table: None,
            support,
            mean,
            std,
        })
    }

    /// A marginal defined by a tabulated quantile function.
    pub fn custom(table: QuantileTable) -> Result<Self> {
        let mut table = table;
        table.ensure_slopes();
        let n = table.x.len();
        let support = (table.x[0], table.x[n - 1]);
        let mut dist = Self {
            family: Family::Custom,
            params: Vec::new(),
            table: Some(table),
            support,
            mean: 0.0,
            std: 1.0,
        };
        let (mean, std) = dist.moments_by_quadrature()?;
        if !(std > 0.0) {
            return Err(Error::DegenerateMarginal("custom table has zero spread".into()));
        }
        dist.mean = mean;
        dist.std = std;
        Ok(dist)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn quantile_table(&self) -> Option<&QuantileTable> {
        self.table.as_ref()
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn moments(&self) -> (f64, f64) {
        (self.mean, self.std)
    }

    /// Short label such as `beta(2,2)`.
    pub fn label(&self) -> String {
        if self.family == Family::Custom {
            return "custom".into();
        }
        let ps: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        format!("{}({})", self.family, ps.join(","))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= self.support.0 {
            return 0.0;
        }
        if x >= self.support.1 {
            return 1.0;
        }
        let p = &self.params;
        let v = match self.family {
            Family::Normal => normal_cdf((x - p[0]) / p[1]),
            Family::Lognormal => normal_cdf((x.ln() - p[0]) / p[1]),
            Family::Gamma => reg_inc_gamma(p[0], x / p[1]).unwrap_or(f64::NAN),
            Family::Beta => reg_inc_beta(p[0], p[1], x).unwrap_or(f64::NAN),
            Family::Weibull => -(-(x / p[0]).powf(p[1])).exp_m1(),
            Family::Uniform => (x - p[0]) / (p[1] - p[0]),
            Family::Gumbel => (-(-(x - p[0]) / p[1]).exp()).exp(),
            Family::Logistic => 1.0 / (1.0 + (-(x - p[0]) / p[1]).exp()),
            Family::StudentT => student_t_cdf(p[0], x),
            Family::ChiSquared => reg_inc_gamma(0.5 * p[0], 0.5 * x).unwrap_or(f64::NAN),
            Family::Rayleigh => -(-0.5 * (x / p[0]).powi(2)).exp_m1(),
            Family::Exponential => -(-p[0] * x).exp_m1(),
            Family::F => {
                let y = p[0] * x;
                reg_inc_beta(0.5 * p[0], 0.5 * p[1], y / (y + p[1])).unwrap_or(f64::NAN)
            }
            Family::Custom => self.table.as_ref().expect("custom table").inverse(x),
        };
        v.clamp(0.0, 1.0)
    }

    /// Survival function 1 − F(x), computed without cancellation where the
    /// family allows it.
    pub fn sf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x <= self.support.0 {
            return 1.0;
        }
        if x >= self.support.1 {
            return 0.0;
        }
        let p = &self.params;
        let v = match self.family {
            Family::Normal => normal_sf((x - p[0]) / p[1]),
            Family::Lognormal => normal_sf((x.ln() - p[0]) / p[1]),
            Family::Gamma => reg_inc_gamma_upper(p[0], x / p[1]).unwrap_or(f64::NAN),
            Family::Beta => reg_inc_beta(p[1], p[0], 1.0 - x).unwrap_or(f64::NAN),
            Family::Weibull => (-(x / p[0]).powf(p[1])).exp(),
            Family::Uniform => (p[1] - x) / (p[1] - p[0]),
            Family::Gumbel => -(-(-(x - p[0]) / p[1]).exp()).exp_m1(),
            Family::Logistic => 1.0 / (1.0 + ((x - p[0]) / p[1]).exp()),
            Family::StudentT => student_t_cdf(p[0], -x),
            Family::ChiSquared => reg_inc_gamma_upper(0.5 * p[0], 0.5 * x).unwrap_or(f64::NAN),
            Family::Rayleigh => (-0.5 * (x / p[0]).powi(2)).exp(),
            Family::Exponential => (-p[0] * x).exp(),
            Family::F => {
                let y = p[0] * x;
                reg_inc_beta(0.5 * p[1], 0.5 * p[0], p[1] / (y + p[1])).unwrap_or(f64::NAN)
            }
            Family::Custom => 1.0 - self.cdf(x),
        };
        v.clamp(0.0, 1.0)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(x > self.support.0 && x < self.support.1) {
            return 0.0;
        }
        let p = &self.params;
        match self.family {
            Family::Normal => normal_pdf((x - p[0]) / p[1]) / p[1],
            Family::Lognormal => normal_pdf((x.ln() - p[0]) / p[1]) / (p[1] * x),
            Family::Gamma => {
                let (k, th) = (p[0], p[1]);
                ((k - 1.0) * (x / th).ln() - x / th - ln_gamma(k)).exp() / th
            }
            Family::Beta => {
                let (a, b) = (p[0], p[1]);
                ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)).exp()
            }
            Family::Weibull => {
                let (lam, k) = (p[0], p[1]);
                let t = x / lam;
                k / lam * t.powf(k - 1.0) * (-t.powf(k)).exp()
            }
            Family::Uniform => 1.0 / (p[1] - p[0]),
            Family::Gumbel => {
                let t = (x - p[0]) / p[1];
                (-(t + (-t).exp())).exp() / p[1]
            }
            Family::Logistic => {
                let e = (-(x - p[0]).abs() / p[1]).exp();
                e / (p[1] * (1.0 + e).powi(2))
            }
            Family::StudentT => {
                let nu = p[0];
                (ln_gamma(0.5 * (nu + 1.0))
                    - ln_gamma(0.5 * nu)
                    - 0.5 * (nu * PI).ln()
                    - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p())
                .exp()
            }
            Family::ChiSquared => {
                let h = 0.5 * p[0];
                ((h - 1.0) * x.ln() - 0.5 * x - h * 2f64.ln() - ln_gamma(h)).exp()
            }
            Family::Rayleigh => {
                let s2 = p[0] * p[0];
                x / s2 * (-0.5 * x * x / s2).exp()
            }
            Family::Exponential => p[0] * (-p[0] * x).exp(),
            Family::F => {
                let (d1, d2) = (p[0], p[1]);
                (0.5 * d1 * (d1 / d2).ln() + (0.5 * d1 - 1.0) * x.ln()
                    - 0.5 * (d1 + d2) * (d1 * x / d2).ln_1p()
                    - ln_beta(0.5 * d1, 0.5 * d2))
                .exp()
            }
            Family::Custom => {
                let table = self.table.as_ref().expect("custom table");
                let d = table.derivative(table.inverse(x));
                if d > 0.0 {
                    1.0 / d
                } else {
                    0.0
                }
            }
        }
    }

    /// F⁻¹(p) for p in (0, 1).
    pub fn quantile(&self, prob: f64) -> Result<f64> {
        check_probability(prob)?;
        if prob > 0.5 {
            if let Some(x) = self.closed_form_upper(1.0 - prob) {
                return Ok(x);
            }
        }
        if let Some(x) = self.closed_form_lower(prob) {
            return Ok(x);
        }
        if prob > 0.5 {
            self.invert_sf(1.0 - prob)
        } else {
            self.invert_cdf(prob)
        }
    }

    /// F⁻¹(1 − q), evaluated from the upper tail so that tiny q keep their
    /// relative precision.
    pub fn quantile_upper(&self, q: f64) -> Result<f64> {
        check_probability(q)?;
        if let Some(x) = self.closed_form_upper(q) {
            return Ok(x);
        }
        if q >= 0.5 {
            return self.quantile(1.0 - q);
        }
        self.invert_sf(q)
    }

    /// F⁻¹(Φ(z)): the exact marginal transformation of a standard normal
    /// value, with the tail chosen so that |z| up to ~37 stays resolvable.
    pub fn quantile_of_z(&self, z: f64) -> Result<f64> {
        let p = &self.params;
        match self.family {
            Family::Normal => return Ok(p[0] + p[1] * z),
            Family::Lognormal => return Ok((p[0] + p[1] * z).exp()),
            _ => {}
        }
        if z <= 0.0 {
            let prob = normal_cdf(z);
            if prob <= 0.0 {
                return Ok(self.support.0);
            }
            self.quantile(prob)
        } else {
            let q = normal_sf(z);
            if q <= 0.0 {
                return Ok(self.support.1);
            }
            self.quantile_upper(q)
        }
    }

    fn closed_form_lower(&self, prob: f64) -> Option<f64> {
        let p = &self.params;
        let v = match self.family {
            Family::Normal => p[0] + p[1] * normal_quantile(prob).ok()?,
            Family::Lognormal => (p[0] + p[1] * normal_quantile(prob).ok()?).exp(),
            Family::Weibull => p[0] * (-(-prob).ln_1p()).powf(1.0 / p[1]),
            Family::Uniform => p[0] + prob * (p[1] - p[0]),
            Family::Gumbel => p[0] - p[1] * (-prob.ln()).ln(),
            Family::Logistic => p[0] + p[1] * (prob / (1.0 - prob)).ln(),
            Family::Rayleigh => p[0] * (-2.0 * (-prob).ln_1p()).sqrt(),
            Family::Exponential => -(-prob).ln_1p() / p[0],
            Family::Custom => self.table.as_ref()?.eval(prob),
            _ => return None,
        };
        Some(v)
    }

    fn closed_form_upper(&self, q: f64) -> Option<f64> {
        let p = &self.params;
        let v = match self.family {
            Family::Normal => p[0] - p[1] * normal_quantile(q).ok()?,
            Family::Lognormal => (p[0] - p[1] * normal_quantile(q).ok()?).exp(),
            Family::Weibull => p[0] * (-q.ln()).powf(1.0 / p[1]),
            Family::Uniform => p[1] - q * (p[1] - p[0]),
            Family::Gumbel => p[0] - p[1] * (-(-q).ln_1p()).ln(),
            Family::Logistic => p[0] + p[1] * ((1.0 - q) / q).ln(),
            Family::Rayleigh => p[0] * (-2.0 * q.ln()).sqrt(),
            Family::Exponential => -q.ln() / p[0],
            Family::Custom => self.table.as_ref()?.eval(1.0 - q),
            _ => return None,
        };
        Some(v)
    }

    fn invert_cdf(&self, prob: f64) -> Result<f64> {
        let (lo, hi) = self.bracket(|x| self.cdf(x) >= prob)?;
        let tol = RootTolerance {
            residual: prob * 1e-14,
            x_abs: 1e-300,
            x_rel: 1e-15,
        };
        find_root_bracketed(|x| self.cdf(x) - prob, lo, hi, tol)
    }

    fn invert_sf(&self, q: f64) -> Result<f64> {
        let (lo, hi) = self.bracket(|x| self.sf(x) <= q)?;
        let tol = RootTolerance {
            residual: q * 1e-14,
            x_abs: 1e-300,
            x_rel: 1e-15,
        };
        find_root_bracketed(|x| q - self.sf(x), lo, hi, tol)
    }

    /// Finds `[lo, hi]` inside the support with `reached(hi)` true and
    /// `reached(lo)` false (or `lo` at a finite lower bound).
    fn bracket<R: Fn(f64) -> bool>(&self, reached: R) -> Result<(f64, f64)> {
        expand_bracket(self.support, self.mean, self.std, reached)
    }

    fn moments_by_quadrature(&self) -> Result<(f64, f64)> {
        let table = self.table.as_ref().expect("custom table");
        let spec = QuadratureSpec::default();
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let n = table.p.len();
        // Clamped ends carry point masses at the table's extreme values.
        let (p0, pn) = (table.p[0], table.p[n - 1]);
        m1 += p0 * table.x[0] + (1.0 - pn) * table.x[n - 1];
        m2 += p0 * table.x[0].powi(2) + (1.0 - pn) * table.x[n - 1].powi(2);
        for i in 0..n - 1 {
            m1 += integrate(|p| table.eval(p), table.p[i], table.p[i + 1], &spec)?;
            m2 += integrate(|p| table.eval(p).powi(2), table.p[i], table.p[i + 1], &spec)?;
        }
        let var = (m2 - m1 * m1).max(0.0);
        Ok((m1, var.sqrt()))
    }
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("probability must lie in (0, 1), got {p}")))
    }
}

fn expand_bracket<R: Fn(f64) -> bool>(
    support: (f64, f64),
    centre: f64,
    scale: f64,
    reached: R,
) -> Result<(f64, f64)> {
    let (lower, upper) = support;
    let scale = if scale.is_finite() && scale > 0.0 { scale } else { 1.0 };
    let start = if centre.is_finite() { centre } else { 0.0 };
    let mut lo;
    let mut hi;
    if reached(start) {
        hi = start;
        lo = start;
        let mut step = scale;
        loop {
            lo = if lower.is_finite() {
                if lo - step <= lower {
                    lower
                } else {
                    lo - step
                }
            } else {
                lo - step
            };
            if lo == lower || !reached(lo) {
                break;
            }
            hi = lo;
            step *= 2.0;
            if !lo.is_finite() || step > 1e300 {
                return Err(Error::domain("quantile bracket expansion failed below"));
            }
        }
        // For half-bounded supports the lower end can approach 0 geometrically.
        if lo == lower && reached(lo) {
            return Ok((lo, lo));
        }
    } else {
        lo = start;
        hi = start;
        let mut step = scale;
        loop {
            hi = if upper.is_finite() { (hi + step).min(upper) } else { hi + step };
            if reached(hi) {
                break;
            }
            if hi == upper {
                return Ok((hi, hi));
            }
            lo = hi;
            step *= 2.0;
            if !hi.is_finite() || step > 1e300 {
                return Err(Error::domain("quantile bracket expansion failed above"));
            }
        }
    }
    Ok((lo, hi))
}

/// Quantile of an arbitrary monotone CDF by bracketed root finding.
///
/// `support` may be infinite on either side; the bracket is grown from the
/// origin (or the finite bound) by doubling steps.
pub fn numeric_quantile<C: Fn(f64) -> f64>(cdf: C, support: (f64, f64), p: f64) -> Result<f64> {
    check_probability(p)?;
    let (lower, upper) = support;
    let centre = match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower + 1.0,
        (false, true) => upper - 1.0,
        (false, false) => 0.0,
    };
    let scale = if lower.is_finite() && upper.is_finite() {
        0.25 * (upper - lower)
    } else {
        1.0
    };
    let (lo, hi) = expand_bracket(support, centre, scale, |x| cdf(x) >= p)?;
    if lo == hi {
        return Ok(lo);
    }
    let tol = RootTolerance {
        residual: 1e-14 * p.min(1.0 - p).max(1e-300),
        x_abs: 1e-300,
        x_rel: 1e-15,
    };
    find_root_bracketed(|x| cdf(x) - p, lo, hi, tol)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

fn student_t_cdf(nu: f64, x: f64) -> f64 {
    let tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, nu / (nu + x * x)).unwrap_or(f64::NAN);
    if x < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

fn closed_form_moments(family: Family, p: &[f64]) -> Result<(f64, f64)> {
    let m = match family {
        Family::Normal => (p[0], p[1]),
        Family::Lognormal => {
            let s2 = p[1] * p[1];
            let mean = (p[0] + 0.5 * s2).exp();
            (mean, mean * s2.exp_m1().sqrt())
        }
        Family::Gamma => (p[0] * p[1], p[0].sqrt() * p[1]),
        Family::Beta => {
            let (a, b) = (p[0], p[1]);
            let s = a + b;
            (a / s, (a * b / (s * s * (s + 1.0))).sqrt())
        }
        Family::Weibull => {
            let g1 = gamma(1.0 + 1.0 / p[1]);
            let g2 = gamma(1.0 + 2.0 / p[1]);
            (p[0] * g1, p[0] * (g2 - g1 * g1).max(0.0).sqrt())
        }
        Family::Uniform => (0.5 * (p[0] + p[1]), (p[1] - p[0]) / 12f64.sqrt()),
        Family::Gumbel => (p[0] + EULER_GAMMA * p[1], PI * p[1] / 6f64.sqrt()),
        Family::Logistic => (p[0], PI * p[1] / 3f64.sqrt()),
        Family::StudentT => {
            if p[0] <= 2.0 {
                return Err(Error::UnsupportedMoment(format!(
                    "Student t with ν = {} has no finite variance (needs ν > 2)",
                    p[0]
                )));
            }
            (0.0, (p[0] / (p[0] - 2.0)).sqrt())
        }
        Family::ChiSquared => (p[0], (2.0 * p[0]).sqrt()),
        Family::Rayleigh => (p[0] * (PI / 2.0).sqrt(), p[0] * ((4.0 - PI) / 2.0).sqrt()),
        Family::Exponential => (1.0 / p[0], 1.0 / p[0]),
        Family::F => {
            let (d1, d2) = (p[0], p[1]);
            if d2 <= 4.0 {
                return Err(Error::UnsupportedMoment(format!(
                    "F with d2 = {d2} has no finite variance (needs d2 > 4)"
                )));
            }
            let mean = d2 / (d2 - 2.0);
            let var = 2.0 * d2 * d2 * (d1 + d2 - 2.0) / (d1 * (d2 - 2.0).powi(2) * (d2 - 4.0));
            (mean, var.sqrt())
        }
        Family::Custom => unreachable!(),
    };
    Ok(m)
}
