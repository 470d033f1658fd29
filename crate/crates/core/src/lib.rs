//! Hierarchical O(N) Heisenberg and spherical spin models.
//!
//! * [`hierarchy`]: lattice indexing, block operators, the hierarchical Laplacian.
//! * [`spectral`]: closed-form spectra and the expectation functional `E f(−Δ)`.
//! * [`spherical`]: saddle-point thermodynamics of the spherical model.
//! * [`rgflow`]: renormalization-group recursions on truncated Taylor coefficients.
//! * [`mc`]: Metropolis sampling of the O(N) model with exact small-system oracles.
//! * [`cli`]: the `hierspin` command-line front end.

pub mod cli;
pub mod error;
pub mod fmt;
pub mod hierarchy;
pub mod mc;
pub mod ode;
pub mod quadrature;
pub mod rgflow;
pub mod roots;
pub mod spectral;
pub mod spherical;

pub use error::{Error, Result};
