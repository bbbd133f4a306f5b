//! Bracketed bisection on monotone scalar equations.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RootError {
    #[error("bracket growth failed: f({lo}) = {flo}, f({hi}) = {fhi} share a sign")]
    NoBracket { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("bisection did not reach tolerance within {0} iterations")]
    Budget(usize),
}

pub const DEFAULT_X_TOL: f64 = 1e-12;
pub const MAX_BISECT_ITERS: usize = 500;

/// Bisection on [lo, hi]; requires a sign change across the bracket.
pub fn bisect<F: FnMut(f64) -> f64>(
    mut lo: f64,
    mut hi: f64,
    mut f: F,
    x_tol: f64,
) -> Result<f64, RootError> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(RootError::NoBracket { lo, hi, flo, fhi });
    }
    for _ in 0..MAX_BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= x_tol.max(f64::EPSILON * mid.abs()) {
            return Ok(mid);
        }
        let fmid = f(mid);
        if fmid == 0.0 {
            return Ok(mid);
        }
        if fmid.signum() == flo.signum() {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Bisection with an initial symmetric bracket around zero, doubled until a
/// sign change appears. Suited to the clearing equations, which are monotone
/// with balance-sheet-bounded roots.
pub fn bisect_growing<F: FnMut(f64) -> f64>(
    initial_half_width: f64,
    mut f: F,
    x_tol: f64,
) -> Result<f64, RootError> {
    let mut w = initial_half_width.abs().max(1e-6);
    let f0 = f(0.0);
    if f0 == 0.0 {
        return Ok(0.0);
    }
    for _ in 0..200 {
        let (lo, hi) = (-w, w);
        let (flo, fhi) = (f(lo), f(hi));
        if flo == 0.0 {
            return Ok(lo);
        }
        if fhi == 0.0 {
            return Ok(hi);
        }
        if flo.signum() != fhi.signum() {
            return bisect(lo, hi, f, x_tol);
        }
        w *= 2.0;
        if !w.is_finite() {
            break;
        }
    }
    Err(RootError::NoBracket {
        lo: -w,
        hi: w,
        flo: f(-w),
        fhi: f(w),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_cubic_root() {
        let r = bisect(0.0, 3.0, |x| x * x * x - 8.0, 1e-13).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grows_bracket() {
        let r = bisect_growing(0.5, |x| x - 1000.0, 1e-12).unwrap();
        assert!((r - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_same_sign_bracket() {
        let e = bisect(1.0, 2.0, |x| x * x + 1.0, 1e-12);
        assert!(matches!(e, Err(RootError::NoBracket { .. })));
    }
}
