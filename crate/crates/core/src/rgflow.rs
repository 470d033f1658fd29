//! Renormalization-group recursions for the potential `u(x) = Σ_{m≥1} c_m x^m`.
//!
//! Two flows act on truncated Taylor coefficients:
//!
//! * the discrete step: rescale `u ↦ L^d u(L^{-γ}x)`, then evolve
//!   `u_t = (2/N) x u_xx + u_x − 2x u_x²` for a time 1/2;
//! * the local potential approximation (LPA), the `L ↓ 1` limit
//!   `u_t = (2/N) x u_xx + u_x − 2x u_x² − γ x u_x + d u − u_x(t, 0)`.
//!
//! Matching powers of `x` turns either PDE into an ODE system for
//! `c_0, …, c_M`; products reaching degree above `M` are dropped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{domain, Error, Result};
use crate::ode::{self, OdeOptions};

/// Number of spin components: finite `N ≥ 1` or the `N = ∞` limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Components {
    Finite(f64),
    Infinite,
}

impl Components {
    pub fn finite(n: f64) -> Result<Self> {
        if !(n >= 1.0 && n.is_finite()) {
            return domain(format!("N must be a finite number >= 1, got {n}"));
        }
        Ok(Components::Finite(n))
    }

    /// `1/N`, zero for `N = ∞`.
    pub fn inverse(&self) -> f64 {
        match *self {
            Components::Finite(n) => 1.0 / n,
            Components::Infinite => 0.0,
        }
    }
}

impl fmt::Display for Components {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Components::Finite(n) => write!(f, "{n}"),
            Components::Infinite => write!(f, "inf"),
        }
    }
}

impl FromStr for Components {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Components::Infinite),
            other => {
                let n: f64 = other
                    .parse()
                    .map_err(|_| Error::Domain(format!("N must be a number or 'inf', got '{other}'")))?;
                Components::finite(n)
            }
        }
    }
}

impl Serialize for Components {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Components::Finite(n) => s.serialize_f64(n),
            Components::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Components {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => Components::finite(n).map_err(serde::de::Error::custom),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Taylor coefficients `(c_1, …, c_M)`; `c_0 = 0` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub coeffs: Vec<f64>,
    pub n: Components,
    pub d: f64,
    pub gamma: f64,
    /// Flow time or number of discrete steps taken.
    pub clock: f64,
}

impl FlowState {
    /// State with the default `γ = d + 2`.
    pub fn new(coeffs: Vec<f64>, n: Components, d: f64) -> Result<Self> {
        Self::with_gamma(coeffs, n, d, d + 2.0)
    }

    pub fn with_gamma(coeffs: Vec<f64>, n: Components, d: f64, gamma: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return domain("truncation order M must be >= 1");
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return domain("coefficients must be finite");
        }
        if !(d > 0.0 && d.is_finite() && gamma.is_finite()) {
            return domain(format!("need d > 0 and finite gamma, got d = {d}, gamma = {gamma}"));
        }
        Ok(Self { coeffs, n, d, gamma, clock: 0.0 })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `u(x)` from the truncated series.
    pub fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| (acc + c) * x)
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Taylor coefficients `c_1..c_M` of `u_0(x) = −(1/N) ln φ_0(√(−Nx))`,
/// where `φ_0` is the characteristic function of the uniform measure on the
/// sphere of radius `√(βN)` in `R^N`.
///
/// `φ_0 = ₀F₁(; N/2; w)` with `w = βN²x/4`. The logarithmic derivative
/// `g = φ_0′/φ_0` obeys `w(g′ + g²) + (N/2) g = 1`, whose power series is
/// computed in scaled form `G_m = g_m (N/2)^{2m+1}` to stay `O(1)`.
pub fn initial_u0(beta: f64, n: f64, order: usize) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return domain(format!("beta must be > 0, got {beta}"));
    }
    let Components::Finite(n) = Components::finite(n)? else { unreachable!() };
    bessel_log_coefficients(beta, Some(n / 2.0), order)
}

/// The `N → ∞` limit of [`initial_u0`]:
/// `u^∞(x) = −½[√(1+4βx) − 1 − ln((1 + √(1+4βx))/2)]`,
/// whose coefficients are `c_{m+1} = −(−1)^m C_m β^{m+1}/(2(m+1))` with
/// `C_m` the Catalan numbers.
pub fn initial_u0_infinite(beta: f64, order: usize) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return domain(format!("beta must be > 0, got {beta}"));
    }
    bessel_log_coefficients(beta, None, order)
}

fn bessel_log_coefficients(beta: f64, b: Option<f64>, order: usize) -> Result<Vec<f64>> {
    if order == 0 {
        return domain("truncation order M must be >= 1");
    }
    let mut g = vec![1.0f64];
    for m in 1..order {
        let conv: f64 = (0..m).map(|p| g[p] * g[m - 1 - p]).sum();
        let factor = match b {
            Some(b) => b / (m as f64 + b),
            None => 1.0,
        };
        g.push(-conv * factor);
    }
    let coeffs: Vec<f64> = g
        .iter()
        .enumerate()
        .map(|(m, gm)| -gm * beta.powi(m as i32 + 1) / (2.0 * (m + 1) as f64))
        .collect();
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!(
            "initial coefficients overflow before order {order}; reduce M or beta"
        )));
    }
    Ok(coeffs)
}

/// `u^∞(x)` in closed form, valid inside the disc of analyticity `|x| < 1/(4β)`.
pub fn u0_infinite_value(beta: f64, x: f64) -> Result<f64> {
    if !(beta > 0.0) {
        return domain(format!("beta must be > 0, got {beta}"));
    }
    if x.abs() >= 1.0 / (4.0 * beta) {
        return domain(format!(
            "x = {x} lies outside the analyticity window |x| < {}",
            1.0 / (4.0 * beta)
        ));
    }
    let r = (1.0 + 4.0 * beta * x).sqrt();
    Ok(-0.5 * (r - 1.0 - ((1.0 + r) / 2.0).ln()))
}

/// Which PDE the coefficient system represents.
#[derive(Debug, Clone, Copy)]
struct Rhs {
    inv_n: f64,
    /// `(d, γ)` for the LPA; `None` for the bare heat flow.
    lpa: Option<(f64, f64)>,
}

impl Rhs {
    /// `y = (c_0, …, c_M)`.
    fn eval(&self, y: &[f64], dy: &mut [f64]) {
        let m = y.len() - 1;
        for j in 0..=m {
            let next = if j < m { y[j + 1] } else { 0.0 };
            let jf = j as f64;
            let mut v = (jf + 1.0) * (1.0 + 2.0 * jf * self.inv_n) * next;
            let mut quad = 0.0;
            for p in 1..=j {
                let q = j + 1 - p;
                if q <= m {
                    quad += (p * q) as f64 * y[p] * y[q];
                }
            }
            v -= 2.0 * quad;
            if let Some((d, gamma)) = self.lpa {
                v += (d - gamma * jf) * y[j];
                if j == 0 {
                    v -= y[1];
                }
            }
            dy[j] = v;
        }
    }
}

fn with_constant(coeffs: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(coeffs.len() + 1);
    y.push(0.0);
    y.extend_from_slice(coeffs);
    y
}

/// Evolves `u_t = (2/N) x u_xx + u_x − 2x u_x²` for time `t_final`, then
/// resets `c_0` to zero.
pub fn heat_flow(state: &FlowState, t_final: f64) -> Result<FlowState> {
    heat_flow_with(state, t_final, OdeOptions::default())
}

pub fn heat_flow_with(state: &FlowState, t_final: f64, opts: OdeOptions) -> Result<FlowState> {
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return domain(format!("t_final must be finite and >= 0, got {t_final}"));
    }
    let rhs = Rhs { inv_n: state.n.inverse(), lpa: None };
    let mut y = with_constant(&state.coeffs);
    ode::integrate(|y, dy| rhs.eval(y, dy), &mut y, 0.0, t_final, opts)
        .map_err(|e| shift_blowup(e, state.clock))?;
    Ok(FlowState { coeffs: y[1..].to_vec(), clock: state.clock + t_final, ..state.clone() })
}

fn shift_blowup(e: Error, offset: f64) -> Error {
    match e {
        Error::BlowUp { time } => Error::BlowUp { time: time + offset },
        other => other,
    }
}

/// Checks that `L^d` is an integer `≥ 2`.
pub fn check_block_factor(l: f64, d: f64) -> Result<()> {
    let ld = l.powf(d);
    if !(ld.is_finite() && ld >= 2.0 - 1e-9 && (ld - ld.round()).abs() < 1e-9 * ld.max(1.0)) {
        return domain(format!("L^d = {ld} must be an integer >= 2 (L = {l}, d = {d})"));
    }
    Ok(())
}

/// One discrete RG step: `c_m ← L^{d−γm} c_m`, heat flow to `t = 1/2`,
/// `c_0 ← 0`. The clock advances by one.
pub fn rg_step(state: &FlowState, l: f64) -> Result<FlowState> {
    check_block_factor(l, state.d)?;
    let coeffs: Vec<f64> = state
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| c * l.powf(state.d - state.gamma * (i + 1) as f64))
        .collect();
    let scaled = FlowState { coeffs, clock: 0.0, ..state.clone() };
    let out = heat_flow(&scaled, 0.5).map_err(|e| match e {
        Error::BlowUp { time } => Error::BlowUp { time: state.clock + time / 0.5 },
        other => other,
    })?;
    Ok(FlowState { clock: state.clock + 1.0, ..out })
}

/// Sampled trajectory of a flow; `blowup` holds the failure time if the
/// flow left the finite regime.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<FlowState>,
    pub blowup: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.samples.last().expect("trajectory holds the initial state")
    }
}

/// Iterates [`rg_step`] `steps` times, recording every state.
pub fn rg_iterate(state: &FlowState, l: f64, steps: usize) -> Result<Trajectory> {
    check_block_factor(l, state.d)?;
    let mut samples = vec![state.clone()];
    for _ in 0..steps {
        match rg_step(samples.last().unwrap(), l) {
            Ok(next) => samples.push(next),
            Err(Error::BlowUp { time }) => return Ok(Trajectory { samples, blowup: Some(time) }),
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { samples, blowup: None })
}

/// Integrates the LPA flow to `t_final`, sampling at `steps` equal intervals.
pub fn lpa_flow(state: &FlowState, t_final: f64, steps: usize) -> Result<Trajectory> {
    lpa_flow_with(state, t_final, steps, OdeOptions::default())
}

pub fn lpa_flow_with(state: &FlowState, t_final: f64, steps: usize, opts: OdeOptions) -> Result<Trajectory> {
    if !(t_final > 0.0 && t_final.is_finite()) {
        return domain(format!("t_final must be finite and > 0, got {t_final}"));
    }
    if steps == 0 {
        return domain("need at least one sample step");
    }
    let rhs = Rhs { inv_n: state.n.inverse(), lpa: Some((state.d, state.gamma)) };
    let mut y = with_constant(&state.coeffs);
    let mut samples = vec![state.clone()];
    let t0 = state.clock;
    for i in 0..steps {
        let a = t0 + t_final * i as f64 / steps as f64;
        let b = t0 + t_final * (i + 1) as f64 / steps as f64;
        match ode::integrate(|y, dy| rhs.eval(y, dy), &mut y, a, b, opts) {
            Ok(()) => {
                y[0] = 0.0;
                samples.push(FlowState { coeffs: y[1..].to_vec(), clock: b, ..state.clone() });
            }
            Err(Error::BlowUp { time }) => return Ok(Trajectory { samples, blowup: Some(time) }),
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory { samples, blowup: None })
}

/// Long-time fate of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    /// Coefficients decayed below the relaxation threshold.
    Relaxed,
    BlowUp,
    /// Neither outcome within the budget.
    Undetermined,
}

/// Which flow a critical search drives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    Discrete { l: f64, max_steps: usize },
    Lpa { t_max: f64 },
}

/// One-parameter family of initial potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialFamily {
    /// Sphere-measure potential at inverse temperature `p`.
    Bessel { n: Components, order: usize },
    /// `u_0 = −p x`.
    Linear,
}

impl InitialFamily {
    pub fn coefficients(&self, p: f64) -> Result<Vec<f64>> {
        match *self {
            InitialFamily::Bessel { n: Components::Finite(n), order } => initial_u0(p, n, order),
            InitialFamily::Bessel { n: Components::Infinite, order } => initial_u0_infinite(p, order),
            InitialFamily::Linear => Ok(vec![-p]),
        }
    }

    fn components(&self) -> Components {
        match *self {
            InitialFamily::Bessel { n, .. } => n,
            InitialFamily::Linear => Components::Infinite,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CriticalSearch {
    pub d: f64,
    pub family: InitialFamily,
    pub flow: FlowKind,
    /// Largest `|c_m|` counted as relaxed.
    pub relax_tol: f64,
}

/// Result of a bisection over the family parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalResult {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    /// Bracket width after each iteration.
    pub widths: Vec<f64>,
}

impl CriticalSearch {
    pub fn new(d: f64, family: InitialFamily, flow: FlowKind) -> Self {
        Self { d, family, flow, relax_tol: 1e-8 }
    }

    /// Follows the flow from parameter `p` until it relaxes or blows up.
    pub fn classify(&self, p: f64) -> Result<Fate> {
        let state = FlowState::new(self.family.coefficients(p)?, self.family.components(), self.d)?;
        match self.flow {
            FlowKind::Discrete { l, max_steps } => {
                check_block_factor(l, self.d)?;
                let mut cur = state;
                for _ in 0..max_steps {
                    cur = match rg_step(&cur, l) {
                        Ok(s) => s,
                        Err(Error::BlowUp { .. }) => return Ok(Fate::BlowUp),
                        Err(e) => return Err(e),
                    };
                    if cur.max_abs() < self.relax_tol {
                        return Ok(Fate::Relaxed);
                    }
                }
                Ok(Fate::Undetermined)
            }
            FlowKind::Lpa { t_max } => {
                let chunk = 1.0f64;
                let mut cur = state;
                while cur.clock < t_max {
                    let traj = lpa_flow(&cur, chunk.min(t_max - cur.clock), 1)?;
                    if traj.blowup.is_some() {
                        return Ok(Fate::BlowUp);
                    }
                    cur = traj.last().clone();
                    if cur.max_abs() < self.relax_tol {
                        return Ok(Fate::Relaxed);
                    }
                }
                Ok(Fate::Undetermined)
            }
        }
    }

    /// Bisects `[lo, hi]` until its width is below `width`.
    pub fn run(&self, lo: f64, hi: f64, width: f64) -> Result<CriticalResult> {
        if !(lo < hi) || !(width > 0.0) {
            return domain(format!("need lo < hi and width > 0, got [{lo}, {hi}], width {width}"));
        }
        let fate_lo = self.classify(lo)?;
        let fate_hi = self.classify(hi)?;
        if fate_lo == Fate::Undetermined || fate_hi == Fate::Undetermined || fate_lo == fate_hi {
            return Err(Error::Classification(format!(
                "endpoints not separated: {lo} -> {fate_lo:?}, {hi} -> {fate_hi:?}"
            )));
        }
        let (mut a, mut b) = (lo, hi);
        let mut widths = Vec::new();
        while b - a > width {
            let mid = 0.5 * (a + b);
            match self.classify(mid)? {
                Fate::Undetermined => {
                    return Err(Error::Classification(format!(
                        "trajectory from {mid} neither relaxed nor blew up within the budget (bracket [{a}, {b}])"
                    )))
                }
                f if f == fate_lo => a = mid,
                _ => b = mid,
            }
            widths.push(b - a);
        }
        Ok(CriticalResult { estimate: 0.5 * (a + b), lo: a, hi: b, widths })
    }
}
