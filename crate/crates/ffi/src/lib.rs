//! C ABI for `hierspin`.
//!
//! Every fallible function returns an [`HsStatus`]; on failure the message is
//! available from [`hs_last_error_message`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Panics never cross
//! the boundary: they are reported as [`HsStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hierspin::hierarchy::{build_laplacian, LatticeShape};
use hierspin::mc::{self, McConfig, McRun};
use hierspin::rgflow::{self, Components, FlowState};
use hierspin::spectral::{self, SpectralModel};
use hierspin::spherical::{self, Phase};
use hierspin::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    Domain = 2,
    Capacity = 3,
    Divergence = 4,
    Bracket = 5,
    Critical = 6,
    BlowUp = 7,
    Classification = 8,
    Integrity = 9,
    Numeric = 10,
    Panic = 11,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> HsStatus {
    match e {
        Error::Domain(_) => HsStatus::Domain,
        Error::Capacity { .. } => HsStatus::Capacity,
        Error::Divergence(_) => HsStatus::Divergence,
        Error::Bracket { .. } => HsStatus::Bracket,
        Error::Critical { .. } => HsStatus::Critical,
        Error::BlowUp { .. } => HsStatus::BlowUp,
        Error::Classification(_) => HsStatus::Classification,
        Error::Integrity(_) => HsStatus::Integrity,
        Error::Numeric(_) => HsStatus::Numeric,
    }
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> HsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HsStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            HsStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            HsStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or(Fail::Null(what))
}

unsafe fn input<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or(Fail::Null(what))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn shape(l: usize, d: usize, k: usize) -> Result<LatticeShape, Fail> {
    Ok(LatticeShape::new(l, d, k)?)
}

fn components(n: f64) -> Result<Components, Fail> {
    if n.is_infinite() && n > 0.0 {
        Ok(Components::Infinite)
    } else {
        Ok(Components::finite(n)?)
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Clears the last error on this thread.
#[no_mangle]
pub extern "C" fn hs_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Opaque spectral measure.
pub struct HsSpectralModel {
    inner: SpectralModel,
}

fn new_model(model: SpectralModel, out_model: *mut *mut HsSpectralModel) -> Result<(), Fail> {
    let slot = unsafe { out(out_model, "out_model")? };
    *slot = Box::into_raw(Box::new(HsSpectralModel { inner: model }));
    Ok(())
}

/// Finite hierarchical lattice with side `l`, dimension `d` and `k` levels.
///
/// # Safety
/// `out_model` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hs_model_finite(l: usize, d: usize, k: usize, out_model: *mut *mut HsSpectralModel) -> HsStatus {
    guard(|| new_model(SpectralModel::finite(shape(l, d, k)?), out_model))
}

/// Infinite-volume hierarchical measure.
///
/// # Safety
/// `out_model` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hs_model_infinite_k(l: f64, d: f64, out_model: *mut *mut HsSpectralModel) -> HsStatus {
    guard(|| new_model(SpectralModel::infinite_k(l, d)?, out_model))
}

/// Continuum measure; pass `INFINITY` for an unbounded cutoff.
///
/// # Safety
/// `out_model` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn hs_model_continuum(d: f64, cutoff: f64, out_model: *mut *mut HsSpectralModel) -> HsStatus {
    guard(|| new_model(SpectralModel::continuum(d, cutoff)?, out_model))
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from one of the `hs_model_*` constructors and not be
/// used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_model_free(model: *mut HsSpectralModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// `E (−Δ − mu)^{-1}` for `mu < 0`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_resolvent(model: *const HsSpectralModel, mu: f64, out_value: *mut f64) -> HsStatus {
    guard(|| {
        let m = input(model, "model")?;
        *out(out_value, "out_value")? = m.inner.resolvent_expectation(mu)?;
        Ok(())
    })
}

/// `λ_k` and its multiplicity on a finite lattice.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_eigenvalue(
    l: usize,
    d: usize,
    k_levels: usize,
    k: usize,
    out_lambda: *mut f64,
    out_multiplicity: *mut usize,
) -> HsStatus {
    guard(|| {
        let sh = shape(l, d, k_levels)?;
        *out(out_lambda, "out_lambda")? = spectral::eigenvalue(k, &sh)?;
        *out(out_multiplicity, "out_multiplicity")? = spectral::multiplicity(k, &sh)?;
        Ok(())
    })
}

/// `y = −Δ x` on a finite lattice; `len` must equal `L^{dK}`.
///
/// # Safety
/// `x` and `y` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_laplacian_apply(
    l: usize,
    d: usize,
    k: usize,
    x: *const f64,
    y: *mut f64,
    len: usize,
) -> HsStatus {
    guard(|| {
        let sh = shape(l, d, k)?;
        let xs = slice(x, len, "x")?;
        let ys = slice_mut(y, len, "y")?;
        let res = build_laplacian(&sh).apply(xs)?;
        ys.copy_from_slice(&res);
        Ok(())
    })
}

/// Saddle point of the spherical model.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsSphericalSolution {
    pub beta: f64,
    pub mu: f64,
    pub rho0: f64,
    /// `INFINITY` when the inverse moment diverges.
    pub beta_c: f64,
    /// 1 above the critical point.
    pub condensed: i32,
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_beta_c(model: *const HsSpectralModel, out_beta_c: *mut f64) -> HsStatus {
    guard(|| {
        let m = input(model, "model")?;
        *out(out_beta_c, "out_beta_c")? = spherical::beta_c(&m.inner)?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_solve_mu(
    beta: f64,
    model: *const HsSpectralModel,
    out_solution: *mut HsSphericalSolution,
) -> HsStatus {
    guard(|| {
        let m = input(model, "model")?;
        let s = spherical::solve_mu(beta, &m.inner)?;
        *out(out_solution, "out_solution")? = HsSphericalSolution {
            beta: s.beta,
            mu: s.mu,
            rho0: s.rho0,
            beta_c: s.beta_c,
            condensed: (s.phase == Phase::Condensed) as i32,
        };
        Ok(())
    })
}

/// Closed-form `μ(β)` of the `d = 4`, `C = ∞` continuum model.
///
/// # Safety
/// `out_mu` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_solve_mu_d4(beta: f64, out_mu: *mut f64) -> HsStatus {
    guard(|| {
        *out(out_mu, "out_mu")? = spherical::solve_mu_d4(beta)?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_free_energy(beta: f64, model: *const HsSpectralModel, out_value: *mut f64) -> HsStatus {
    guard(|| {
        let m = input(model, "model")?;
        *out(out_value, "out_value")? = spherical::free_energy(beta, &m.inner)?;
        Ok(())
    })
}

/// Limiting moment generating function `exp(−z²/(2μ))`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_mgf(beta: f64, z: f64, model: *const HsSpectralModel, out_value: *mut f64) -> HsStatus {
    guard(|| {
        let m = input(model, "model")?;
        *out(out_value, "out_value")? = spherical::mgf(beta, z, &m.inner)?;
        Ok(())
    })
}

/// Finite-volume `ln Θ_n(β, z)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_log_mgf_finite_n(
    beta: f64,
    z: f64,
    n: f64,
    model: *const HsSpectralModel,
    out_value: *mut f64,
) -> HsStatus {
    guard(|| {
        let m = input(model, "model")?;
        *out(out_value, "out_value")? = spherical::log_mgf_finite_n(beta, z, n, &m.inner)?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_clt_variance(beta: f64, model: *const HsSpectralModel, out_value: *mut f64) -> HsStatus {
    guard(|| {
        let m = input(model, "model")?;
        *out(out_value, "out_value")? = spherical::clt_variance(beta, &m.inner)?;
        Ok(())
    })
}

/// Taylor coefficients `c_1..c_order` of the sphere-measure potential.
/// `n_components = INFINITY` selects the infinite-component limit.
///
/// # Safety
/// `out_coeffs` must point to `order` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_initial_potential(
    beta: f64,
    n_components: f64,
    order: usize,
    out_coeffs: *mut f64,
) -> HsStatus {
    guard(|| {
        let dst = slice_mut(out_coeffs, order, "out_coeffs")?;
        let c = match components(n_components)? {
            Components::Finite(n) => rgflow::initial_u0(beta, n, order)?,
            Components::Infinite => rgflow::initial_u0_infinite(beta, order)?,
        };
        dst.copy_from_slice(&c);
        Ok(())
    })
}

/// Runs the local-potential flow for time `t_final`, overwriting `coeffs`
/// with the final coefficients. `out_blowup_time` receives the blow-up
/// time, or NaN if the flow stayed bounded.
///
/// # Safety
/// `coeffs` must point to `order` doubles; `out_blowup_time` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_lpa_flow(
    coeffs: *mut f64,
    order: usize,
    n_components: f64,
    d: f64,
    t_final: f64,
    out_blowup_time: *mut f64,
) -> HsStatus {
    guard(|| {
        let c = slice_mut(coeffs, order, "coeffs")?;
        let blow = out(out_blowup_time, "out_blowup_time")?;
        let state = FlowState::new(c.to_vec(), components(n_components)?, d)?;
        let traj = rgflow::lpa_flow(&state, t_final, 1)?;
        c.copy_from_slice(&traj.last().coeffs);
        *blow = traj.blowup.unwrap_or(f64::NAN);
        Ok(())
    })
}

/// One discrete renormalization step with block factor `l`, in place.
///
/// # Safety
/// `coeffs` must point to `order` doubles.
#[no_mangle]
pub unsafe extern "C" fn hs_rg_step(coeffs: *mut f64, order: usize, n_components: f64, d: f64, l: f64) -> HsStatus {
    guard(|| {
        let c = slice_mut(coeffs, order, "coeffs")?;
        let state = FlowState::new(c.to_vec(), components(n_components)?, d)?;
        let next = rgflow::rg_step(&state, l)?;
        c.copy_from_slice(&next.coeffs);
        Ok(())
    })
}

/// Opaque completed Monte Carlo run.
pub struct HsMcRun {
    inner: McRun,
}

/// Monte Carlo estimate with batch-means error.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HsEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub tau_int: f64,
    pub n_samples: usize,
    /// 1 when the error bar rests on too few batches.
    pub precision_warning: i32,
}

/// Runs `chains` Metropolis chains of `sweeps` measurement sweeps each.
///
/// # Safety
/// `out_run` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_mc_run(
    l: usize,
    d: usize,
    k: usize,
    n_components: usize,
    beta: f64,
    sweeps: usize,
    chains: usize,
    seed: u64,
    out_run: *mut *mut HsMcRun,
) -> HsStatus {
    guard(|| {
        let slot = out(out_run, "out_run")?;
        let mut cfg = McConfig::new(shape(l, d, k)?, n_components, beta, sweeps, seed);
        cfg.chains = chains;
        let run = mc::mcmc_run(&cfg)?;
        *slot = Box::into_raw(Box::new(HsMcRun { inner: run }));
        Ok(())
    })
}

/// Estimate of `Θ_n(β, z)` from a completed run.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_mc_estimate_mgf(run: *const HsMcRun, z: f64, out_estimate: *mut HsEstimate) -> HsStatus {
    guard(|| {
        let r = input(run, "run")?;
        let dst = out(out_estimate, "out_estimate")?;
        if !z.is_finite() {
            return Err(Error::Domain(format!("z must be finite, got {z}")).into());
        }
        let e = mc::estimate_mgf(&r.inner, &[z])[0];
        *dst = HsEstimate {
            mean: e.mean,
            std_error: e.std_error,
            tau_int: e.tau_int,
            n_samples: e.n_samples,
            precision_warning: e.precision_warning as i32,
        };
        Ok(())
    })
}

/// Mean acceptance rate of a completed run.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_mc_acceptance(run: *const HsMcRun, out_rate: *mut f64) -> HsStatus {
    guard(|| {
        *out(out_rate, "out_rate")? = input(run, "run")?.inner.acceptance();
        Ok(())
    })
}

/// Releases a run. NULL is ignored.
///
/// # Safety
/// `run` must come from [`hs_mc_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_mc_run_free(run: *mut HsMcRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Exact `N = 1` moment generating function by enumeration (`n <= 20`).
///
/// # Safety
/// `out_theta` must be valid.
#[no_mangle]
pub unsafe extern "C" fn hs_exact_mgf_ising(l: usize, d: usize, k: usize, beta: f64, z: f64, out_theta: *mut f64) -> HsStatus {
    guard(|| {
        *out(out_theta, "out_theta")? = mc::exact_partition_n1(&shape(l, d, k)?, beta, z)?.theta;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(|_| {}));
        let s = guard(|| panic!("boom"));
        std::panic::set_hook(prev);
        assert_eq!(s, HsStatus::Panic);
        let msg = unsafe { CStr::from_ptr(hs_last_error_message()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic: boom");
    }

    #[test]
    fn every_error_kind_has_a_distinct_code() {
        let errs = [
            Error::Domain(String::new()),
            Error::Capacity { n: 1, cap: 0 },
            Error::Divergence(String::new()),
            Error::Bracket { lo: 0.0, hi: 1.0, f_lo: 1.0, f_hi: 1.0, reason: String::new() },
            Error::Critical { beta: 1.0, beta_c: 1.0 },
            Error::BlowUp { time: 1.0 },
            Error::Classification(String::new()),
            Error::Integrity(String::new()),
            Error::Numeric(String::new()),
        ];
        let mut codes: Vec<i32> = errs.iter().map(|e| status_of(e) as i32).collect();
        codes.dedup();
        assert_eq!(codes, (2..=10).collect::<Vec<_>>());
    }
}
