use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated a precondition (range, length, shape).
    #[error("domain error: {0}")]
    Domain(String),

    /// A dense realization was requested past the size cap.
    #[error("capacity error: n = {n} exceeds the cap of {cap}")]
    Capacity { n: usize, cap: usize },

    /// A series or integral that should define a finite value does not converge.
    #[error("divergence: {0}")]
    Divergence(String),

    /// A bracketed root search could not bracket or did not converge.
    #[error("root finding failed on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi}): {reason}")]
    Bracket {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
        reason: String,
    },

    /// An operation needing β < β_c was called at or above the critical point.
    #[error("beta = {beta} is not below beta_c = {beta_c}")]
    Critical { beta: f64, beta_c: f64 },

    /// A flow left the finite regime.
    #[error("blow-up at t = {time}")]
    BlowUp { time: f64 },

    /// Bisection endpoints were not classified on opposite sides.
    #[error("classification error: {0}")]
    Classification(String),

    /// Cached state no longer agrees with a recomputation.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Generic numerical failure.
    #[error("numeric error: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
