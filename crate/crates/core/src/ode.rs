//! Adaptive Dormand–Prince 5(4) integration for small autonomous systems.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Any state component above this magnitude is a blow-up.
    pub blowup_guard: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            blowup_guard: 1e12,
            max_steps: 2_000_000,
        }
    }
}


const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// Fifth-order minus embedded fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = rhs(y)` from `t0` to `t1`, updating `y` in place.
///
/// Returns [`Error::BlowUp`] carrying the time at which the state left the
/// guard box (or the step size underflowed, which happens at the same place).
pub fn integrate<F>(rhs: F, y: &mut [f64], t0: f64, t1: f64, opts: OdeOptions) -> Result<()>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y.len();
    if t1 <= t0 || n == 0 {
        return Ok(());
    }
    let mut k: Vec<Vec<f64>> = (0..7).map(|_| vec![0.0; n]).collect();
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    let mut t = t0;
    let mut h = ((t1 - t0) * 1e-3).min(1e-2);
    rhs(y, &mut k[0]);
    let mut steps = 0;

    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::Numeric(format!("ODE step limit reached at t = {t}")));
        }
        steps += 1;
        if t + h > t1 {
            h = t1 - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k[0][i];
        }
        rhs(&tmp, &mut k[1]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i]);
        }
        rhs(&tmp, &mut k[2]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i]);
        }
        rhs(&tmp, &mut k[3]);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i] + A53 * k[2][i] + A54 * k[3][i]);
        }
        rhs(&tmp, &mut k[4]);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i] + A64 * k[3][i] + A65 * k[4][i]);
        }
        rhs(&tmp, &mut k[5]);
        for i in 0..n {
            y_new[i] = y[i]
                + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        rhs(&y_new, &mut k[6]);

        let mut err = 0.0f64;
        let mut finite = true;
        for i in 0..n {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i]
                    + E7 * k[6][i]);
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs().max(y_new[i].abs());
            let r = e / scale;
            if !r.is_finite() || !y_new[i].is_finite() {
                finite = false;
            }
            err = err.max(r.abs());
        }

        if finite && err <= 1.0 {
            t += h;
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            if y.iter().any(|v| v.abs() > opts.blowup_guard) {
                return Err(Error::BlowUp { time: t });
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            h *= if finite { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::BlowUp { time: t });
        }
    }
    Ok(())
}
