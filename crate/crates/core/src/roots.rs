//! Bracketed scalar root finding (Brent's method).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct RootOptions {
    /// Absolute tolerance on the abscissa.
    pub x_abs_tol: f64,
    /// Relative tolerance on the abscissa.
    pub x_rel_tol: f64,
    /// Stop as soon as |f| falls below this.
    pub f_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            x_abs_tol: 1e-300,
            x_rel_tol: 4.0 * f64::EPSILON,
            f_tol: 0.0,
            max_iter: 500,
        }
    }
}

fn bracket_error(lo: f64, hi: f64, f_lo: f64, f_hi: f64, reason: &str) -> Error {
    Error::Bracket { lo, hi, f_lo, f_hi, reason: reason.to_string() }
}

/// Finds a root of `f` in `[a, b]`, which must bracket a sign change.
///
/// Inverse quadratic interpolation and secant steps are safeguarded by
/// bisection, so convergence is guaranteed for continuous `f`.
pub fn brent<F>(mut f: F, a: f64, b: f64, opts: RootOptions) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(bracket_error(a, b, fa, fb, "non-finite function value at an endpoint"));
    }
    if fa.signum() == fb.signum() {
        return Err(bracket_error(a, b, fa, fb, "no sign change"));
    }

    let (lo0, hi0, flo0, fhi0) = (a, b, fa, fb);
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;

    for _ in 0..opts.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * opts.x_rel_tol * b.abs() + 0.5 * opts.x_abs_tol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 || fb.abs() <= opts.f_tol {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
        if !fb.is_finite() {
            return Err(bracket_error(lo0, hi0, flo0, fhi0, "non-finite function value inside bracket"));
        }
    }
    Err(bracket_error(lo0, hi0, flo0, fhi0, "iteration limit reached"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let r = brent(|x| Ok(x * x - 2.0), 0.0, 2.0, RootOptions::default()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_missing_sign_change() {
        let err = brent(|x| Ok(x * x + 1.0), -1.0, 1.0, RootOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Bracket { .. }));
    }

    #[test]
    fn steep_function() {
        let r = brent(|x: f64| Ok((x - 1e-3).tanh() * 1e6), -5.0, 7.0, RootOptions::default()).unwrap();
        assert!((r - 1e-3).abs() < 1e-15);
    }
}
