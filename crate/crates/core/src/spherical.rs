//! Saddle-point thermodynamics of the spherical model with coupling `−Δ`.
//!
//! Spins live on the sphere `|x|² = βn` with weight `exp(−½(x, −Δx))`. The
//! Lagrange multiplier `μ < 0` solves the sum rule `E (−Δ − μ)^{-1} = β`
//! below `β_c = E (−Δ)^{-1}`; above it `μ = 0` and the zero mode carries the
//! excess `ρ₀ = β − β_c`.

use crate::error::{domain, Error, Result};
use crate::roots::{brent, RootOptions};
use crate::spectral::SpectralModel;

/// Whether the solution lies on the condensed branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Uncondensed,
    /// `β ≥ β_c`: `μ = 0` and `ρ₀ = β − β_c` by convention.
    Condensed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalSolution {
    pub beta: f64,
    pub mu: f64,
    pub rho0: f64,
    /// `+∞` when the inverse moment diverges.
    pub beta_c: f64,
    pub phase: Phase,
}

impl SphericalSolution {
    /// `−1/μ`, defined only on the uncondensed branch.
    pub fn clt_variance(&self) -> Result<f64> {
        self.require_uncondensed()?;
        Ok(-1.0 / self.mu)
    }

    fn require_uncondensed(&self) -> Result<()> {
        match self.phase {
            Phase::Uncondensed => Ok(()),
            Phase::Condensed => Err(Error::Critical { beta: self.beta, beta_c: self.beta_c }),
        }
    }
}

/// Finite-volume multiplier `κ_n` solving `E (−Δ − κ)^{-1} + z²/(nκ²) = β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteNCorrection {
    pub n: f64,
    pub kappa: f64,
    pub mu: f64,
    /// `[μ² E (−Δ − μ)^{-2}]^{-1}`; `n(κ − μ)/z² → −c`.
    pub c: f64,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return domain(format!("beta must be a finite number > 0, got {beta}"));
    }
    Ok(())
}

/// `β_c = E (−Δ)^{-1}` over the nonzero spectrum, from closed forms where
/// they exist.
pub fn beta_c(model: &SpectralModel) -> Result<f64> {
    match *model {
        SpectralModel::InfiniteK { l, d, scale } => {
            if d <= 2.0 {
                return Err(Error::Divergence(format!("E (-Delta)^-1 has no limit for d = {d} <= 2")));
            }
            Ok((1.0 - l.powf(-d)) * (l * l - 1.0) / (1.0 - l.powf(2.0 - d)) / scale)
        }
        SpectralModel::Continuum { d, cutoff } if cutoff == f64::INFINITY => {
            if d <= 2.0 {
                return Err(Error::Divergence(format!("E (-Delta)^-1 has no limit for d = {d} <= 2")));
            }
            Ok(2.0 * d / (d - 2.0))
        }
        _ => beta_c_numeric(model),
    }
}

/// `β_c` by direct summation or quadrature of `1/λ`.
pub fn beta_c_numeric(model: &SpectralModel) -> Result<f64> {
    model.expectation_nonzero(|lam| 1.0 / lam)
}

fn beta_c_or_inf(model: &SpectralModel) -> Result<f64> {
    match beta_c(model) {
        Ok(b) => Ok(b),
        Err(Error::Divergence(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn has_zero_mode(model: &SpectralModel) -> bool {
    model.zero_mode_weight() > 0.0
}

/// Solves the sum rule for `μ(β)`.
///
/// Measures with an atom at 0 (finite lattices, finite cutoff) are always
/// solved with `μ < 0`; the atom's occupation `w₀/(−μ)` is reported as `ρ₀`.
pub fn solve_mu(beta: f64, model: &SpectralModel) -> Result<SphericalSolution> {
    check_beta(beta)?;
    let bc = beta_c_or_inf(model)?;
    let zero = has_zero_mode(model);
    if !zero && beta >= bc {
        return Ok(SphericalSolution { beta, mu: 0.0, rho0: beta - bc, beta_c: bc, phase: Phase::Condensed });
    }
    let mu = solve_constraint(model, beta, 0.0, 0.0)?;
    let rho0 = if zero { model.zero_mode_weight() / -mu } else { 0.0 };
    Ok(SphericalSolution { beta, mu, rho0, beta_c: bc, phase: Phase::Uncondensed })
}

/// Root `κ < 0` of `R(κ) + extra/κ² = β` with `R` the resolvent expectation.
fn solve_constraint(model: &SpectralModel, beta: f64, extra: f64, upper: f64) -> Result<f64> {
    let g = |m: f64| -> Result<f64> { Ok(model.resolvent_expectation(m)? + extra / (m * m) - beta) };
    // R(m) <= 1/(-m), so g(lo) <= 0 once extra/lo² is small enough.
    let mut lo = -1.0 / beta;
    if upper < 0.0 {
        lo = lo.min(2.0 * upper);
    }
    let mut g_lo = g(lo)?;
    let mut expand = 0;
    while g_lo > 0.0 {
        lo *= 2.0;
        g_lo = g(lo)?;
        expand += 1;
        if expand > 200 {
            return Err(Error::Bracket {
                lo,
                hi: upper,
                f_lo: g_lo,
                f_hi: f64::NAN,
                reason: "could not find a lower bracket".into(),
            });
        }
    }
    let mut hi = if upper < 0.0 { upper } else { lo * 0.5 };
    let mut g_hi = g(hi)?;
    let mut shrink = 0;
    while g_hi < 0.0 {
        lo = hi;
        hi *= 0.5;
        g_hi = g(hi)?;
        shrink += 1;
        if shrink > 400 || hi == 0.0 {
            return Err(Error::Bracket {
                lo,
                hi,
                f_lo: g_lo,
                f_hi: g_hi,
                reason: "constraint never exceeds beta below mu = 0; beta is at or above beta_c".into(),
            });
        }
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    let opts = RootOptions { x_abs_tol: 0.0, x_rel_tol: 2.0 * f64::EPSILON, f_tol: 0.0, max_iter: 500 };
    let root = brent(g, lo, hi, opts)?;
    let residual = g(root)?.abs();
    if residual > 1e-10 * beta.max(1.0) {
        return Err(Error::Numeric(format!(
            "sum-rule residual {residual:e} at mu = {root} exceeds tolerance"
        )));
    }
    Ok(root)
}

/// Solves `1 − β/4 = −2μ ln(1 − 1/(2μ))`, the sum rule of the continuum
/// `d = 4`, `C = ∞` measure, for `0 < β < 4`.
pub fn solve_mu_d4(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if beta >= 4.0 {
        return domain(format!("beta = {beta} is in the condensed phase (beta_c = 4); use solve_mu"));
    }
    // With s = −2μ: h(s) = s ln(1 + 1/s) rises from 0 to 1 on (0, ∞).
    let target = 1.0 - beta / 4.0;
    let h = |s: f64| s * (1.0 / s).ln_1p() - target;
    let dh = |s: f64| (1.0 / s).ln_1p() - 1.0 / (1.0 + s);
    let (mut lo, mut hi) = (1.0, 1.0);
    while h(lo) > 0.0 {
        lo *= 0.5;
    }
    while h(hi) < 0.0 {
        hi *= 2.0;
    }
    let mut s = if lo == hi { lo } else { (lo * hi).sqrt() };
    for _ in 0..200 {
        let v = h(s);
        if v == 0.0 {
            break;
        }
        if v < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let mut next = s - v / dh(s);
        if !(next > lo && next < hi) {
            next = (lo * hi).sqrt();
        }
        if (next - s).abs() <= 2.0 * f64::EPSILON * s {
            s = next;
            break;
        }
        s = next;
    }
    Ok(-0.5 * s)
}

/// `f(β) = −μβ/2 − ln √(eβ) − ½ E ln(−Δ − μ)`.
///
/// On the condensed branch the formula is evaluated at `μ = 0` over the
/// nonzero spectrum; that value depends on the `μ = 0` convention.
pub fn free_energy(beta: f64, model: &SpectralModel) -> Result<f64> {
    let sol = solve_mu(beta, model)?;
    free_energy_at(&sol, model)
}

pub fn free_energy_at(sol: &SphericalSolution, model: &SpectralModel) -> Result<f64> {
    let mu = sol.mu;
    let log_term = match sol.phase {
        Phase::Uncondensed => model.expectation(|lam| (lam - mu).ln())?,
        Phase::Condensed => model.expectation_nonzero(|lam| lam.ln())?,
    };
    let beta = sol.beta;
    Ok(-0.5 * mu * beta - 0.5 * (1.0 + beta.ln()) - 0.5 * log_term)
}

fn uncondensed(beta: f64, model: &SpectralModel) -> Result<SphericalSolution> {
    let sol = solve_mu(beta, model)?;
    if beta >= sol.beta_c {
        return Err(Error::Critical { beta, beta_c: sol.beta_c });
    }
    sol.require_uncondensed()?;
    Ok(sol)
}

/// `Θ(β, z) = exp(−z²/(2μ))`, the limiting moment generating function of
/// `X_n = Σ x_i/√n`.
pub fn mgf(beta: f64, z: f64, model: &SpectralModel) -> Result<f64> {
    let sol = uncondensed(beta, model)?;
    Ok((-z * z / (2.0 * sol.mu)).exp())
}

/// `−1/μ(β)`, the variance of the limiting Gaussian.
pub fn clt_variance(beta: f64, model: &SpectralModel) -> Result<f64> {
    uncondensed(beta, model)?.clt_variance()
}

fn check_n(n_total: f64) -> Result<()> {
    if !(n_total >= 1.0 && n_total.is_finite()) {
        return domain(format!("n must be a finite number >= 1, got {n_total}"));
    }
    Ok(())
}

/// Solves the finite-volume constraint for `κ_n(β, z)`.
pub fn kappa_n(beta: f64, z: f64, n_total: f64, model: &SpectralModel) -> Result<FiniteNCorrection> {
    check_n(n_total)?;
    let sol = uncondensed(beta, model)?;
    let mu = sol.mu;
    let kappa = if z == 0.0 { mu } else { solve_constraint(model, beta, z * z / n_total, mu)? };
    let second = model.expectation(|lam| (lam - mu).powi(-2))?;
    Ok(FiniteNCorrection { n: n_total, kappa, mu, c: 1.0 / (mu * mu * second) })
}

/// `ln(1 + x) − x` without cancellation for small `x`.
fn log1p_minus_x(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        let mut term = -x * x / 2.0;
        let mut sum = 0.0f64;
        let mut k = 2.0;
        while term.abs() > 1e-18 * sum.abs().max(f64::MIN_POSITIVE) {
            sum += term;
            term *= -x * k / (k + 1.0);
            k += 1.0;
        }
        sum
    } else {
        x.ln_1p() - x
    }
}

/// `ln Θ_n(β, z)`, the finite-volume log moment generating function.
///
/// Uses `−(n/2)[β(κ−μ) + E ln((−Δ−κ)/(−Δ−μ))] − z²/(2κ)`, rearranged so the
/// `O(n)` pieces cancel analytically.
pub fn log_mgf_finite_n(beta: f64, z: f64, n_total: f64, model: &SpectralModel) -> Result<f64> {
    let corr = kappa_n(beta, z, n_total, model)?;
    if z == 0.0 {
        return Ok(0.0);
    }
    let (mu, delta) = (corr.mu, corr.kappa - corr.mu);
    let resid = model.resolvent_expectation(mu)? - beta;
    let curv = model.expectation(|lam| log1p_minus_x(-delta / (lam - mu)))?;
    Ok(-0.5 * n_total * (curv - delta * resid) - z * z / (2.0 * corr.kappa))
}

/// `Θ_n(β, z)`.
pub fn mgf_finite_n(beta: f64, z: f64, n_total: f64, model: &SpectralModel) -> Result<f64> {
    log_mgf_finite_n(beta, z, n_total, model).map(f64::exp)
}
