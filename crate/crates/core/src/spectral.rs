//! Spectra of the hierarchical Laplacian and the expectation functional
//! `E f(−Δ) = lim tr f(−Δ) / n`.
//!
//! `−Δ` has eigenvalue `λ_k = (L^{-2k} − L^{-2K})/(L² − 1)` on the range of
//! the fluctuation projector `Q_k`, which has rank `L^{d(K−k)} − L^{d(K−k−1)}`
//! (and rank 1 for `k = K`, the constants).

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hierarchy::{build_laplacian, LatticeShape, DENSE_CAP};
use crate::quadrature::{self, QuadOptions};

/// Largest number of series terms summed for the infinite-volume measure.
const SERIES_CAP: usize = 2_000_000;
/// Relative size of the estimated series tail at which summation stops.
const SERIES_REL_TOL: f64 = 1e-15;

/// A spectral measure of `−Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SpectralModel {
    /// The `n = L^{dK}` eigenvalues of a finite lattice.
    Finite { shape: LatticeShape },
    /// The `K → ∞` limit: atoms at `scale · L^{-2k}/(L² − 1)` of mass
    /// `(1 − L^{-d}) L^{-dk}`. Real `L > 1` and `d > 0` are accepted.
    InfiniteK { l: f64, d: f64, scale: f64 },
    /// The `L ↓ 1` limit at fixed `C = K ln L`, with density
    /// `ρ′(λ) = 2^{d/2}(d/2)(λ + e^{-2C}/2)^{d/2−1}` on `[0, (1 − e^{-2C})/2]`
    /// and an atom of mass `e^{-dC}` at 0.
    Continuum { d: f64, cutoff: f64 },
}

/// Value of a series or integral with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Expectation {
    pub value: f64,
    /// Estimated truncation or quadrature error.
    pub error: f64,
    /// Number of series terms or quadrature intervals used.
    pub terms: usize,
}

/// One row of the closed-form spectral table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralRow {
    pub k: usize,
    pub lambda: f64,
    pub multiplicity: usize,
    pub weight: f64,
}

impl SpectralModel {
    pub fn finite(shape: LatticeShape) -> Self {
        SpectralModel::Finite { shape }
    }

    pub fn infinite_k(l: f64, d: f64) -> Result<Self> {
        Self::infinite_k_scaled(l, d, 1.0)
    }

    /// Infinite-`K` measure with eigenvalues multiplied by `L − 1`; tends to
    /// the `C = ∞` continuum measure as `L ↓ 1`.
    pub fn infinite_k_rescaled(l: f64, d: f64) -> Result<Self> {
        Self::infinite_k_scaled(l, d, l - 1.0)
    }

    fn infinite_k_scaled(l: f64, d: f64, scale: f64) -> Result<Self> {
        if !(l > 1.0 && l.is_finite()) {
            return domain(format!("L must be a finite number > 1, got {l}"));
        }
        if !(d > 0.0 && d.is_finite()) {
            return domain(format!("d must be a finite number > 0, got {d}"));
        }
        Ok(SpectralModel::InfiniteK { l, d, scale })
    }

    /// Continuum measure; `cutoff = f64::INFINITY` gives `C = ∞`.
    pub fn continuum(d: f64, cutoff: f64) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return domain(format!("d must be a finite number > 0, got {d}"));
        }
        if !(cutoff > 0.0) {
            return domain(format!("cutoff C must be in (0, inf], got {cutoff}"));
        }
        Ok(SpectralModel::Continuum { d, cutoff })
    }

    /// Dimension parameter of the measure.
    pub fn dim(&self) -> f64 {
        match *self {
            SpectralModel::Finite { shape } => shape.dim() as f64,
            SpectralModel::InfiniteK { d, .. } | SpectralModel::Continuum { d, .. } => d,
        }
    }

    /// `λ_k` for the discrete variants.
    pub fn eigenvalue(&self, k: usize) -> Result<f64> {
        match *self {
            SpectralModel::Finite { shape } => eigenvalue(k, &shape),
            SpectralModel::InfiniteK { l, scale, .. } => Ok(scale * l.powi(-2 * k as i32) / (l * l - 1.0)),
            SpectralModel::Continuum { .. } => domain("the continuum measure has no discrete eigenvalues"),
        }
    }

    /// Mass of the atom at `λ_k` (excluding the zero mode for finite `K`).
    pub fn weight(&self, k: usize) -> Result<f64> {
        match *self {
            SpectralModel::Finite { shape } => {
                check_level(k, &shape)?;
                Ok(multiplicity(k, &shape)? as f64 / shape.sites() as f64)
            }
            SpectralModel::InfiniteK { l, d, .. } => Ok((1.0 - l.powf(-d)) * l.powf(-d * k as f64)),
            SpectralModel::Continuum { .. } => domain("the continuum measure has no discrete weights"),
        }
    }

    /// Mass carried by the eigenvalue 0.
    pub fn zero_mode_weight(&self) -> f64 {
        match *self {
            SpectralModel::Finite { shape } => 1.0 / shape.sites() as f64,
            SpectralModel::InfiniteK { .. } => 0.0,
            SpectralModel::Continuum { d, cutoff } => (-d * cutoff).exp(),
        }
    }

    /// Right end of the support.
    pub fn spectrum_max(&self) -> f64 {
        match *self {
            SpectralModel::Finite { shape } => eigenvalue(0, &shape).unwrap_or(0.0),
            SpectralModel::InfiniteK { l, scale, .. } => scale / (l * l - 1.0),
            SpectralModel::Continuum { cutoff, .. } => continuum_support(cutoff),
        }
    }

    /// `E f(−Δ)`, including the zero mode.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.expectation_detailed(&f, true).map(|e| e.value)
    }

    /// `E f(−Δ)` restricted to the nonzero spectrum.
    pub fn expectation_nonzero<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        self.expectation_detailed(&f, false).map(|e| e.value)
    }

    /// Expectation with its error estimate; the atom at 0 is included when
    /// `with_zero_mode` is set and the model has one.
    pub fn expectation_detailed<F: Fn(f64) -> f64>(&self, f: &F, with_zero_mode: bool) -> Result<Expectation> {
        let zero = self.zero_mode_weight();
        let zero_term = |value: f64| -> Result<f64> {
            if !with_zero_mode || zero == 0.0 {
                return Ok(value);
            }
            let f0 = f(0.0);
            if !f0.is_finite() {
                return Err(Error::Divergence(format!("f(0) = {f0} on a zero mode of weight {zero:e}")));
            }
            Ok(value + zero * f0)
        };
        match *self {
            SpectralModel::Finite { shape } => {
                let mut value = 0.0;
                for k in 0..shape.levels() {
                    value += self.weight(k)? * f(eigenvalue(k, &shape)?);
                }
                Ok(Expectation { value: zero_term(value)?, error: 0.0, terms: shape.levels() })
            }
            SpectralModel::InfiniteK { .. } => {
                let s = self.series(f)?;
                Ok(Expectation { value: s.value, error: s.error, terms: s.terms })
            }
            SpectralModel::Continuum { d, cutoff } => {
                let r = continuum_integral(f, d, cutoff)?;
                Ok(Expectation { value: zero_term(r.value)?, error: r.error, terms: r.intervals })
            }
        }
    }

    /// Sums `Σ_k w_k f(λ_k)` for the infinite-`K` measure until the
    /// geometric estimate of the remaining tail is negligible.
    fn series<F: Fn(f64) -> f64>(&self, f: &F) -> Result<Expectation> {
        let SpectralModel::InfiniteK { l, d, .. } = *self else {
            unreachable!("series is only used for the infinite-K measure");
        };
        let decay = l.powf(-d);
        let f0 = f(0.0);
        let mut value = 0.0;
        let mut abs_sum = 0.0;
        let mut prev = f64::NAN;
        let mut ratios = [f64::NAN; 3];
        let mut stuck = 0usize;
        for k in 0..SERIES_CAP {
            let term = self.weight(k)? * f(self.eigenvalue(k)?);
            if !term.is_finite() {
                return Err(Error::Divergence(format!("non-finite series term at level {k}")));
            }
            value += term;
            abs_sum += term.abs();
            if prev.is_finite() && prev != 0.0 {
                ratios[k % 3] = (term / prev).abs();
            }
            prev = term;
            let r = ratios.iter().cloned().fold(f64::NAN, f64::max);
            let tol = SERIES_REL_TOL * abs_sum + 1e-300;
            if k >= 8 && r.is_finite() && r < 1.0 {
                let tail = term.abs() * r / (1.0 - r);
                let remaining = decay.powi(k as i32 + 1);
                let tail_weight = if f0.is_finite() { remaining * f0.abs() } else { 0.0 };
                if tail <= tol && tail_weight <= tol {
                    return Ok(Expectation { value, error: tail.max(tail_weight), terms: k + 1 });
                }
            }
            if k >= 8 && term == 0.0 && f0 == 0.0 && abs_sum == 0.0 && decay.powi(k as i32) < 1e-300 {
                return Ok(Expectation { value, error: 0.0, terms: k + 1 });
            }
            if r.is_finite() && r >= 1.0 - 1e-12 {
                stuck += 1;
                if stuck > 256 {
                    return Err(Error::Divergence(format!(
                        "series terms stopped decaying (ratio {r}) after {} levels; partial sum {value:e}",
                        k + 1
                    )));
                }
            } else {
                stuck = 0;
            }
        }
        Err(Error::Divergence(format!(
            "series not converged after {SERIES_CAP} levels; partial sum {value:e}"
        )))
    }

    /// `E (−Δ − μ)^{-1}` for `μ < 0`, including the zero mode.
    pub fn resolvent_expectation(&self, mu: f64) -> Result<f64> {
        if !(mu < 0.0) {
            return domain(format!("resolvent needs mu < 0, got {mu}"));
        }
        self.expectation(|lam| 1.0 / (lam - mu))
    }

    /// Measure of `[0, t]`.
    pub fn cumulative(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return Ok(0.0);
        }
        match *self {
            SpectralModel::Finite { shape } => {
                let mut total = self.zero_mode_weight();
                for k in 0..shape.levels() {
                    if eigenvalue(k, &shape)? <= t {
                        total += self.weight(k)?;
                    }
                }
                Ok(total)
            }
            SpectralModel::InfiniteK { l, d, .. } => {
                // The atoms are decreasing in k: find the first one inside [0, t].
                let mut k = 0usize;
                while self.eigenvalue(k)? > t {
                    k += 1;
                    if k > SERIES_CAP {
                        return Ok(0.0);
                    }
                }
                Ok(l.powf(-d * k as f64))
            }
            SpectralModel::Continuum { d, cutoff } => {
                let b = continuum_support(cutoff);
                let eps = half_exp_neg_2c(cutoff);
                let tt = t.min(b);
                Ok((2.0 * (tt + eps)).powf(d / 2.0) - (2.0 * eps).powf(d / 2.0) + self.zero_mode_weight())
            }
        }
    }

    /// Spectral-dimension estimate `2 ln μ([0, t]) / ln t`.
    pub fn spectral_dimension_estimate(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < 1.0) {
            return domain(format!("spectral-dimension probe needs 0 < t < 1, got {t}"));
        }
        Ok(2.0 * self.cumulative(t)?.ln() / t.ln())
    }
}

fn check_level(k: usize, shape: &LatticeShape) -> Result<()> {
    if k > shape.levels() {
        return domain(format!("level {k} out of range 0..={}", shape.levels()));
    }
    Ok(())
}

/// `λ_k = (L^{-2k} − L^{-2K})/(L² − 1)`.
pub fn eigenvalue(k: usize, shape: &LatticeShape) -> Result<f64> {
    check_level(k, shape)?;
    let l = shape.side() as f64;
    let big_k = shape.levels() as i32;
    Ok((l.powi(-2 * k as i32) - l.powi(-2 * big_k)) / (l * l - 1.0))
}

/// Rank of `Q_k`.
pub fn multiplicity(k: usize, shape: &LatticeShape) -> Result<usize> {
    check_level(k, shape)?;
    let b = shape.block_size();
    let levels = shape.levels();
    if k == levels {
        Ok(1)
    } else {
        Ok(b.pow((levels - k) as u32) - b.pow((levels - k - 1) as u32))
    }
}

/// Closed-form table for `k = 0..=K`.
pub fn spectral_table(shape: &LatticeShape) -> Result<Vec<SpectralRow>> {
    let n = shape.sites() as f64;
    (0..=shape.levels())
        .map(|k| {
            let m = multiplicity(k, shape)?;
            Ok(SpectralRow { k, lambda: eigenvalue(k, shape)?, multiplicity: m, weight: m as f64 / n })
        })
        .collect()
}

/// All `n` eigenvalues from the closed form, ascending.
pub fn closed_form_spectrum(shape: &LatticeShape) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(shape.sites());
    for k in (0..=shape.levels()).rev() {
        let lam = eigenvalue(k, shape)?;
        out.extend(std::iter::repeat_n(lam, multiplicity(k, shape)?));
    }
    Ok(out)
}

/// Eigenvalues of the dense `−Δ`, ascending.
pub fn dense_spectrum(shape: &LatticeShape) -> Result<Vec<f64>> {
    if shape.sites() > DENSE_CAP {
        return Err(Error::Capacity { n: shape.sites(), cap: DENSE_CAP });
    }
    let m = build_laplacian(shape).dense()?;
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// The integrated density of eigenvalues `ρ_n(λ) = #{i : λ_i ≤ λ}/n` as a
/// right-continuous step function.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    /// Jump locations, ascending, with the value just after each jump.
    pub steps: Vec<(f64, f64)>,
}

impl StepFunction {
    /// Builds the empirical distribution of a list of eigenvalues.
    pub fn from_values(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mut steps: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in v.iter().enumerate() {
            let height = (i + 1) as f64 / n;
            match steps.last_mut() {
                Some(last) if last.0 == x => last.1 = height,
                _ => steps.push((x, height)),
            }
        }
        Self { steps }
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        let idx = self.steps.partition_point(|&(x, _)| x <= lambda);
        if idx == 0 {
            0.0
        } else {
            self.steps[idx - 1].1
        }
    }
}

/// `ρ_n` from the closed-form spectrum.
pub fn empirical_distribution(shape: &LatticeShape) -> Result<StepFunction> {
    if shape.sites() > DENSE_CAP {
        return Err(Error::Capacity { n: shape.sites(), cap: DENSE_CAP });
    }
    Ok(StepFunction::from_values(&closed_form_spectrum(shape)?))
}

fn half_exp_neg_2c(cutoff: f64) -> f64 {
    0.5 * (-2.0 * cutoff).exp()
}

fn continuum_support(cutoff: f64) -> f64 {
    -0.5 * (-2.0 * cutoff).exp_m1()
}

/// `ρ′(λ)` of the continuum measure; zero outside the support.
pub fn continuum_density(lambda: f64, d: f64, cutoff: f64) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) || !(cutoff > 0.0) {
        return domain(format!("need d > 0 and C > 0, got d = {d}, C = {cutoff}"));
    }
    if lambda < 0.0 || lambda > continuum_support(cutoff) {
        return Ok(0.0);
    }
    let shift = lambda + half_exp_neg_2c(cutoff);
    Ok(2f64.powf(d / 2.0) * (d / 2.0) * shift.powf(d / 2.0 - 1.0))
}

fn continuum_integral<F: Fn(f64) -> f64>(f: &F, d: f64, cutoff: f64) -> Result<quadrature::QuadResult> {
    let b = continuum_support(cutoff);
    let eps = half_exp_neg_2c(cutoff);
    let norm = 2f64.powf(d / 2.0) * (d / 2.0);
    let opts = QuadOptions::default();
    if d < 4.0 {
        // λ = u² removes the λ^{d/2−1} endpoint behaviour.
        let g = |u: f64| {
            let lam = u * u;
            f(lam) * norm * (lam + eps).powf(d / 2.0 - 1.0) * 2.0 * u
        };
        quadrature::integrate(g, 0.0, b.sqrt(), opts)
    } else {
        let g = |lam: f64| f(lam) * norm * (lam + eps).powf(d / 2.0 - 1.0);
        quadrature::integrate(g, 0.0, b, opts)
    }
}

/// Density `1/(π √(4λ − λ²))` of the one-dimensional nearest-neighbour
/// Laplacian on `[0, 4]`.
pub fn short_range_density_d1(lambda: f64) -> f64 {
    if lambda <= 0.0 || lambda >= 4.0 {
        0.0
    } else {
        1.0 / (std::f64::consts::PI * (4.0 * lambda - lambda * lambda).sqrt())
    }
}

/// Law of the mean-zero level disorder `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DisorderLaw {
    /// `X ≡ 0`.
    Degenerate,
    /// `X = ±a` with probability 1/2 each.
    TwoPoint { a: f64 },
    /// `X ~ N(0, σ²)`.
    Normal { sigma: f64 },
    /// `X ~ U(−a, a)`.
    Uniform { a: f64 },
}

impl DisorderLaw {
    /// `E e^X`.
    pub fn mean_exp(&self) -> f64 {
        match *self {
            DisorderLaw::Degenerate => 1.0,
            DisorderLaw::TwoPoint { a } => a.cosh(),
            DisorderLaw::Normal { sigma } => (0.5 * sigma * sigma).exp(),
            DisorderLaw::Uniform { a } => {
                if a == 0.0 {
                    1.0
                } else {
                    a.sinh() / a
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let p = match *self {
            DisorderLaw::Degenerate => 0.0,
            DisorderLaw::TwoPoint { a } | DisorderLaw::Uniform { a } => a,
            DisorderLaw::Normal { sigma } => sigma,
        };
        if !(p >= 0.0 && p.is_finite()) {
            return domain(format!("disorder parameter must be finite and >= 0, got {p}"));
        }
        Ok(())
    }
}

/// Infinite-`K` measure with level eigenvalues `c λ_k e^{X_k}`, `X_k` i.i.d.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisorderModel {
    pub base: SpectralModel,
    pub law: DisorderLaw,
    /// `c = 1 / E e^X`.
    pub c: f64,
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMean {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl DisorderModel {
    pub fn new(base: SpectralModel, law: DisorderLaw) -> Result<Self> {
        if !matches!(base, SpectralModel::InfiniteK { .. }) {
            return domain("disorder is defined over the infinite-K measure");
        }
        law.validate()?;
        Ok(Self { base, law, c: 1.0 / law.mean_exp() })
    }

    /// Estimates `Σ_k w_k E f(c λ_k e^{X_k})` from `samples` independent
    /// disorder realizations.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, samples: usize, seed: u64) -> Result<SampleMean> {
        if samples < 100 {
            return domain(format!("need at least 100 samples, got {samples}"));
        }
        let levels = self.base.series(&f)?.terms
            + if self.law == DisorderLaw::Degenerate { 0 } else { 32 };
        let weights: Vec<f64> = (0..levels).map(|k| self.base.weight(k)).collect::<Result<_>>()?;
        let lams: Vec<f64> = (0..levels).map(|k| self.base.eigenvalue(k)).collect::<Result<_>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampler: Box<dyn Fn(&mut ChaCha8Rng) -> f64> = match self.law {
            DisorderLaw::Degenerate => Box::new(|_| 0.0),
            DisorderLaw::TwoPoint { a } => Box::new(move |r: &mut ChaCha8Rng| {
                if rand::Rng::random::<bool>(r) {
                    a
                } else {
                    -a
                }
            }),
            DisorderLaw::Normal { sigma } => {
                let dist = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
                Box::new(move |r: &mut ChaCha8Rng| dist.sample(r))
            }
            DisorderLaw::Uniform { a } => {
                if a == 0.0 {
                    Box::new(|_| 0.0)
                } else {
                    let dist = Uniform::new_inclusive(-a, a).map_err(|e| Error::Domain(e.to_string()))?;
                    Box::new(move |r: &mut ChaCha8Rng| dist.sample(r))
                }
            }
        };
        let (mut mean, mut m2) = (0.0, 0.0);
        for i in 0..samples {
            let mut value = 0.0;
            for k in 0..levels {
                let x = sampler(&mut rng);
                value += weights[k] * f(self.c * lams[k] * x.exp());
            }
            if !value.is_finite() {
                return Err(Error::Numeric(format!("non-finite disorder sample {i}")));
            }
            let delta = value - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (value - mean);
        }
        let var = m2 / (samples - 1) as f64;
        Ok(SampleMean { mean, std_error: (var / samples as f64).sqrt(), samples })
    }
}
