//! C interface. Models and vector models are opaque heap handles released
//! with their `_free` function. Every fallible call returns a status code
//! (the same values the command-line tool uses as exit codes) and records a
//! message retrievable with [`pn_last_error_message`] on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::DMatrix;
use polynorta::config::parse_distribution;
use polynorta::fit_percentile::{fit_percentile, NodePlan};
use polynorta::fit_pwm::{fit_pwm_distribution, fit_pwm_sample, PwmFitOptions};
use polynorta::{
    build_rho_polynomial, generate, rho_x_bounds, solve_rho_z, Error, FitMethod, MomentSource, PolynomialModel,
    RngSpec, RzOptions, VectorModel,
};

/// Status codes returned by fallible calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnStatus {
    PnOk = 0,
    /// Invalid argument, numerical failure or any other error.
    PnError = 1,
    /// A requested correlation lies outside the attainable range.
    PnInfeasible = 2,
    /// Ill-conditioned, singular or not positive definite matrix.
    PnConditioning = 3,
    /// Malformed input text such as a distribution string.
    PnSchema = 4,
}

/// Opaque fitted polynomial model.
pub struct PnModel(PolynomialModel);

/// Opaque correlated vector model.
pub struct PnVectorModel(VectorModel);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> PnStatus {
    match e.exit_code() {
        2 => PnStatus::PnInfeasible,
        3 => PnStatus::PnConditioning,
        4 => PnStatus::PnSchema,
        _ => PnStatus::PnError,
    }
}

fn invalid(msg: &str) -> PnStatus {
    set_error(msg.to_string());
    PnStatus::PnError
}

/// Runs `f`, converting library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), PnStatus>) -> PnStatus {
    set_error(String::new());
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PnStatus::PnOk,
        Ok(Err(s)) => s,
        Err(_) => invalid("internal panic"),
    }
}

fn lib<T>(r: polynorta::Result<T>) -> Result<T, PnStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

unsafe fn model_ref<'a>(m: *const PnModel) -> Result<&'a PolynomialModel, PnStatus> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| invalid("null model handle"))
}

unsafe fn dist_from(s: *const c_char) -> Result<polynorta::TargetDistribution, PnStatus> {
    if s.is_null() {
        return Err(invalid("null distribution string"));
    }
    let text = CStr::from_ptr(s).to_str().map_err(|_| {
        set_error("distribution string is not UTF-8".into());
        PnStatus::PnSchema
    })?;
    parse_distribution(text).map_err(|e| {
        set_error(e.to_string());
        match e {
            Error::Domain(_) | Error::UnsupportedMoment(_) => PnStatus::PnSchema,
            other => status_of(&other),
        }
    })
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), PnStatus> {
    if out.is_null() {
        return Err(invalid("null output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies the last error message of this thread into `buf` (NUL terminated,
/// truncated to `cap`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pn_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a model from `len` coefficients a₀…a_n.
///
/// # Safety
/// `coeffs` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pn_model_from_coeffs(coeffs: *const f64, len: usize, out: *mut *mut PnModel) -> PnStatus {
    guard(|| {
        if coeffs.is_null() {
            return Err(invalid("null coefficient array"));
        }
        let c = slice::from_raw_parts(coeffs, len).to_vec();
        store(out, PnModel(lib(PolynomialModel::new(c, FitMethod::Exact))?))
    })
}

/// PWM fit of a distribution given as `family:p1,p2`, e.g. `beta:2,2`.
///
/// # Safety
/// `dist` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pn_fit_pwm(
    dist: *const c_char,
    degree: usize,
    allow_high_degree: bool,
    out: *mut *mut PnModel,
) -> PnStatus {
    guard(|| {
        let d = dist_from(dist)?;
        let opts = PwmFitOptions { allow_high_degree };
        store(out, PnModel(lib(fit_pwm_distribution(&d, degree, opts))?.model))
    })
}

/// PWM fit of an observed sample.
///
/// # Safety
/// `x` must point to `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pn_fit_pwm_sample(
    x: *const f64,
    len: usize,
    degree: usize,
    allow_high_degree: bool,
    out: *mut *mut PnModel,
) -> PnStatus {
    guard(|| {
        if x.is_null() {
            return Err(invalid("null sample array"));
        }
        let opts = PwmFitOptions { allow_high_degree };
        let fit = lib(fit_pwm_sample(slice::from_raw_parts(x, len), degree, opts))?;
        store(out, PnModel(fit.model))
    })
}

/// Percentile fit with the default three-block node plan at tail
/// probability `alpha` (pass 0 for the default).
///
/// # Safety
/// `dist` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pn_fit_percentile(
    dist: *const c_char,
    degree: usize,
    alpha: f64,
    out: *mut *mut PnModel,
) -> PnStatus {
    guard(|| {
        let d = dist_from(dist)?;
        let plan = if alpha == 0.0 {
            NodePlan::default()
        } else {
            NodePlan::with_alpha(alpha)
        };
        store(out, PnModel(lib(fit_percentile(&d, degree, &plan))?.model))
    })
}

/// Polynomial degree, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn pn_model_degree(m: *const PnModel) -> usize {
    m.as_ref().map_or(0, |m| m.0.degree())
}

/// Writes the degree + 1 coefficients into `out`, which holds `cap` doubles.
///
/// # Safety
/// `m` must be a live model handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pn_model_coeffs(m: *const PnModel, out: *mut f64, cap: usize) -> PnStatus {
    guard(|| {
        let c = model_ref(m)?.coeffs();
        if out.is_null() || cap < c.len() {
            return Err(invalid(&format!("output buffer needs {} doubles", c.len())));
        }
        ptr::copy_nonoverlapping(c.as_ptr(), out, c.len());
        Ok(())
    })
}

/// Evaluates Σ a_k z^k; NaN for a null handle.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn pn_model_evaluate(m: *const PnModel, z: f64) -> f64 {
    m.as_ref().map_or(f64::NAN, |m| m.0.evaluate(z))
}

/// Maps `n` normal values `z` to `x`.
///
/// # Safety
/// `z` and `x` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn pn_model_transform(m: *const PnModel, z: *const f64, x: *mut f64, n: usize) -> PnStatus {
    guard(|| {
        let model = model_ref(m)?;
        if z.is_null() || x.is_null() {
            return Err(invalid("null array"));
        }
        let zs = slice::from_raw_parts(z, n);
        let xs = slice::from_raw_parts_mut(x, n);
        for (o, &v) in xs.iter_mut().zip(zs) {
            *o = model.evaluate(v);
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn pn_model_free(m: *mut PnModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Attainable correlation range of a model pair.
///
/// # Safety
/// Handles must be live; `lower` and `upper` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pn_rho_bounds(
    m1: *const PnModel,
    m2: *const PnModel,
    lower: *mut f64,
    upper: *mut f64,
) -> PnStatus {
    guard(|| {
        let rp = lib(build_rho_polynomial(model_ref(m1)?, model_ref(m2)?, MomentSource::Model))?;
        let (lo, hi) = lib(rho_x_bounds(&rp))?;
        if lower.is_null() || upper.is_null() {
            return Err(invalid("null output pointer"));
        }
        *lower = lo;
        *upper = hi;
        Ok(())
    })
}

/// Normal-space correlation producing `rho_x` between the two models.
///
/// # Safety
/// Handles must be live; `rho_z` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pn_rho_solve(
    m1: *const PnModel,
    m2: *const PnModel,
    rho_x: f64,
    rho_z: *mut f64,
) -> PnStatus {
    guard(|| {
        let rp = lib(build_rho_polynomial(model_ref(m1)?, model_ref(m2)?, MomentSource::Model))?;
        let v = lib(solve_rho_z(&rp, rho_x))?;
        if rho_z.is_null() {
            return Err(invalid("null output pointer"));
        }
        *rho_z = v;
        Ok(())
    })
}

/// Builds a vector model from `dim` marginal models and a row-major target
/// correlation matrix. The models are copied; the caller keeps ownership.
///
/// # Safety
/// `models` must hold `dim` live handles and `rx` must hold `dim * dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn pn_vector_model_new(
    models: *const *const PnModel,
    dim: usize,
    rx: *const f64,
    nearest_pd: bool,
    out: *mut *mut PnVectorModel,
) -> PnStatus {
    guard(|| {
        if models.is_null() || rx.is_null() {
            return Err(invalid("null array"));
        }
        let ms = slice::from_raw_parts(models, dim)
            .iter()
            .map(|&m| model_ref(m).cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let r = DMatrix::from_row_slice(dim, dim, slice::from_raw_parts(rx, dim * dim));
        let vm = lib(VectorModel::new(ms, r, RzOptions { nearest_pd }))?;
        store(out, PnVectorModel(vm))
    })
}

/// Dimension of a vector model, or 0 for a null handle.
///
/// # Safety
/// `vm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pn_vector_model_dimension(vm: *const PnVectorModel) -> usize {
    vm.as_ref().map_or(0, |v| v.0.dimension())
}

/// Writes the solved normal-space correlation matrix (row-major).
///
/// # Safety
/// `vm` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pn_vector_model_normal_correlation(
    vm: *const PnVectorModel,
    out: *mut f64,
    cap: usize,
) -> PnStatus {
    guard(|| {
        let v = vm.as_ref().ok_or_else(|| invalid("null vector model handle"))?;
        let rz = v.0.normal_correlation();
        let d = rz.nrows();
        if out.is_null() || cap < d * d {
            return Err(invalid(&format!("output buffer needs {} doubles", d * d)));
        }
        let o = slice::from_raw_parts_mut(out, d * d);
        for i in 0..d {
            for j in 0..d {
                o[i * d + j] = rz[(i, j)];
            }
        }
        Ok(())
    })
}

/// Generates `count` vectors into `out` (row-major, `count * dim` doubles).
/// Output is determined by `seed` and `stream` alone.
///
/// # Safety
/// `vm` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn pn_generate(
    vm: *const PnVectorModel,
    count: usize,
    seed: u64,
    stream: u64,
    out: *mut f64,
    cap: usize,
) -> PnStatus {
    guard(|| {
        let v = vm.as_ref().ok_or_else(|| invalid("null vector model handle"))?;
        let need = count * v.0.dimension();
        if out.is_null() || cap < need {
            return Err(invalid(&format!("output buffer needs {need} doubles")));
        }
        let s = generate(&v.0, count, RngSpec::new(seed).with_stream(stream));
        ptr::copy_nonoverlapping(s.as_slice().as_ptr(), out, need);
        Ok(())
    })
}

/// # Safety
/// `vm` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn pn_vector_model_free(vm: *mut PnVectorModel) {
    if !vm.is_null() {
        drop(Box::from_raw(vm));
    }
}
