//! Scalar root finding for monotone functions on a bracket.

use crate::error::{Error, Result};

const MAX_ITER: usize = 400;

/// Stopping rule for [`find_root_bracketed`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootTolerance {
    /// Accept once `|g(x)|` is at or below this.
    pub residual: f64,
    pub x_abs: f64,
    pub x_rel: f64,
}

/// Root of a monotone `g` on `[lo, hi]` with `g(lo)·g(hi) ≤ 0`.
///
/// Stops when `|g(root)| ≤ tol` or the bracket is narrower than `tol`.
pub fn find_root_monotone<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    find_root_bracketed(
        g,
        lo,
        hi,
        RootTolerance {
            residual: tol,
            x_abs: tol,
            x_rel: 0.0,
        },
    )
}

/// Illinois false position, with a forced bisection every fourth step so
/// the bracket always shrinks geometrically.
pub fn find_root_bracketed<G: Fn(f64) -> f64>(
    g: G,
    lo: f64,
    hi: f64,
    tol: RootTolerance,
) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (g(a), g(b));
    check_bracket(a, b, fa, fb)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut side = 0i8;
    for iter in 0..MAX_ITER {
        let mut x = if iter % 4 == 3 {
            0.5 * (a + b)
        } else {
            (a * fb - b * fa) / (fb - fa)
        };
        if !x.is_finite() || x <= a || x >= b {
            x = 0.5 * (a + b);
        }
        if x <= a || x >= b {
            // a and b are adjacent floats.
            return Ok(if fa.abs() < fb.abs() { a } else { b });
        }
        let fx = g(x);
        if fx.abs() <= tol.residual {
            return Ok(x);
        }
        if (fx > 0.0) == (fb > 0.0) {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if b - a <= tol.x_abs + tol.x_rel * a.abs().max(b.abs()) {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}

/// Newton iteration on a monotone `g` with derivative `dg`, safeguarded by
/// a bisection bracket. Returns once the step or bracket falls below `tol`.
pub fn find_root_newton<G, D>(g: G, dg: D, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (fa, fb) = (g(a), g(b));
    check_bracket(a, b, fa, fb)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let increasing = fb > fa;
    let mut x = 0.5 * (a + b);
    for _ in 0..MAX_ITER {
        let fx = g(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if (fx > 0.0) == increasing {
            b = x;
        } else {
            a = x;
        }
        let d = dg(x);
        let newton = x - fx / d;
        let next = if d != 0.0 && newton.is_finite() && newton > a && newton < b {
            newton
        } else {
            0.5 * (a + b)
        };
        if (next - x).abs() <= tol || (b - a) <= tol {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

fn check_bracket(lo: f64, hi: f64, g_lo: f64, g_hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    if g_lo.is_nan() || g_hi.is_nan() || g_lo * g_hi > 0.0 {
        return Err(Error::Unbracketed { lo, hi, g_lo, g_hi });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_root() {
        let r = find_root_monotone(|x| x * x * x - 0.5, 0.0, 1.0, 1e-12).unwrap();
        assert!((r - 0.793_700_525_984_099_7).abs() < 1e-11);
    }

    #[test]
    fn decreasing_function() {
        let r = find_root_monotone(|x| 1.0 - x.exp(), -1.0, 2.0, 1e-14).unwrap();
        assert!(r.abs() < 1e-13);
    }

    #[test]
    fn unbracketed() {
        let err = find_root_monotone(|x| x * x + 1.0, -1.0, 1.0, 1e-12).unwrap_err();
        assert!(matches!(err, Error::Unbracketed { .. }));
    }

    #[test]
    fn newton_safeguarded() {
        let r = find_root_newton(|x| x * x * x - 0.5, |x| 3.0 * x * x, 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 0.5f64.cbrt()).abs() < 1e-14);
        // Flat derivative at the left end forces the bisection fallback.
        let r = find_root_newton(|x| x.powi(9) - 1e-3, |x| 9.0 * x.powi(8), 0.0, 1.0, 1e-14).unwrap();
        assert!((r - 1e-3f64.powf(1.0 / 9.0)).abs() < 1e-13);
    }
}
