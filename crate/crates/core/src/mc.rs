//! Metropolis sampling of the hierarchical O(N) Heisenberg model.
//!
//! Spins `x_j ∈ R^N` satisfy `|x_j|² = N`; the weight is
//! `exp(−β · ½(x, (−Δ ⊗ I) x))` times the product of uniform sphere
//! measures. This is the radius-`√(βN)`, `β`-free convention rescaled by
//! `x → x/√β`, so a spherical-model prediction `Θ(β, z) = exp(−z²/(2μ))`
//! corresponds here to `exp(−z²/(2βμ))`.
//!
//! Block sums `s_{k,τ}` are kept for every level, so a single-site update
//! costs `O(KN)`:
//! `(x, −Δx) = μ₀ |x|² − Σ_k L^{-2k} Σ_τ |s_{k,τ}|² / L^{dk}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::hierarchy::{build_laplacian, LatticeShape};

/// Minimum number of batches before an error bar is trusted.
const MIN_BATCHES: usize = 32;

/// Proposal for a single-site update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    /// Fresh uniform point on the sphere.
    Resphere,
    /// `x' = √N (x + ε g)/|x + ε g|` with `g` standard normal.
    Rotation { step: f64 },
    /// Resphere and rotation sweeps alternate; the rotation step adapts
    /// toward 40% acceptance during burn-in.
    Mixed { step: f64 },
}

/// Spins with their block-sum tree and cached energy.
#[derive(Debug, Clone)]
pub struct SpinConfiguration {
    shape: LatticeShape,
    comps: usize,
    spins: Vec<f64>,
    /// `sums[k-1][τ N + c]`, level-major.
    sums: Vec<Vec<f64>>,
    energy: f64,
    /// `L^{-2k} / L^{dk}` for `k = 1..=K`.
    level_factor: Vec<f64>,
    mu0: f64,
}

impl SpinConfiguration {
    /// Builds a configuration, checking `| |x_j|² − N | < 1e−9`.
    pub fn new(shape: LatticeShape, comps: usize, spins: Vec<f64>) -> Result<Self> {
        if comps == 0 {
            return domain("N must be >= 1");
        }
        if spins.len() != shape.sites() * comps {
            return domain(format!(
                "expected {} spin components, got {}",
                shape.sites() * comps,
                spins.len()
            ));
        }
        for (j, x) in spins.chunks_exact(comps).enumerate() {
            let norm: f64 = x.iter().map(|v| v * v).sum();
            if (norm - comps as f64).abs() > 1e-9 {
                return domain(format!("site {j} has |x|^2 = {norm}, expected {comps}"));
            }
        }
        let blocking = shape.blocking();
        let level_factor = blocking
            .level_weights()
            .iter()
            .enumerate()
            .map(|(i, w)| w / shape.block_size().pow(i as u32 + 1) as f64)
            .collect();
        let mut cfg = Self {
            shape,
            comps,
            spins,
            sums: Vec::new(),
            energy: 0.0,
            level_factor,
            mu0: blocking.mu0(),
        };
        cfg.rebuild_tree();
        Ok(cfg)
    }

    /// All spins equal to `(√N, 0, …, 0)`.
    pub fn aligned(shape: LatticeShape, comps: usize) -> Result<Self> {
        let mut spins = vec![0.0; shape.sites() * comps.max(1)];
        for x in spins.chunks_exact_mut(comps.max(1)) {
            x[0] = (comps as f64).sqrt();
        }
        Self::new(shape, comps, spins)
    }

    /// Independent uniform spins.
    pub fn random<R: Rng>(shape: LatticeShape, comps: usize, rng: &mut R) -> Result<Self> {
        let mut spins = vec![0.0; shape.sites() * comps];
        for x in spins.chunks_exact_mut(comps.max(1)) {
            sample_sphere(rng, x);
        }
        Self::new(shape, comps, spins)
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn components(&self) -> usize {
        self.comps
    }

    pub fn spins(&self) -> &[f64] {
        &self.spins
    }

    pub fn site(&self, j: usize) -> &[f64] {
        &self.spins[j * self.comps..(j + 1) * self.comps]
    }

    /// Cached `½(x, (−Δ ⊗ I)x)`.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// `Σ_j x_j`, the top-level block sum.
    pub fn total(&self) -> &[f64] {
        &self.sums[self.shape.levels() - 1][..self.comps]
    }

    fn compute_sums(&self) -> Vec<Vec<f64>> {
        let b = self.shape.block_size();
        let nc = self.comps;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.shape.levels());
        let mut cur: &[f64] = &self.spins;
        for _ in 0..self.shape.levels() {
            let blocks = cur.len() / (b * nc);
            let mut next = vec![0.0; blocks * nc];
            for (t, chunk) in cur.chunks_exact(b * nc).enumerate() {
                let dst = &mut next[t * nc..(t + 1) * nc];
                for x in chunk.chunks_exact(nc) {
                    for (d, v) in dst.iter_mut().zip(x) {
                        *d += v;
                    }
                }
            }
            out.push(next);
            cur = out.last().unwrap();
        }
        out
    }

    fn energy_from(&self, sums: &[Vec<f64>]) -> f64 {
        let norm: f64 = self.spins.iter().map(|v| v * v).sum();
        let mut coupled = 0.0;
        for (level, f) in sums.iter().zip(&self.level_factor) {
            coupled += f * level.iter().map(|v| v * v).sum::<f64>();
        }
        0.5 * (self.mu0 * norm - coupled)
    }

    fn rebuild_tree(&mut self) {
        self.sums = self.compute_sums();
        self.energy = self.energy_from(&self.sums);
    }

    /// Energy recomputed from scratch (fresh block sums).
    pub fn recompute_energy(&self) -> f64 {
        self.energy_from(&self.compute_sums())
    }

    /// Projects drifted spins back onto their spheres and rebuilds the tree.
    pub fn rebuild(&mut self) {
        let target = self.comps as f64;
        for x in self.spins.chunks_exact_mut(self.comps) {
            let norm2 = x.iter().map(|v| v * v).sum::<f64>();
            if (norm2 - target).abs() > 8.0 * f64::EPSILON * target {
                let scale = (target / norm2).sqrt();
                for v in x.iter_mut() {
                    *v *= scale;
                }
            }
        }
        self.rebuild_tree();
    }

    /// Verifies the block sums and cached energy against a recomputation.
    pub fn check_integrity(&self) -> Result<()> {
        let fresh = self.compute_sums();
        for (k, (a, b)) in self.sums.iter().zip(&fresh).enumerate() {
            for (x, y) in a.iter().zip(b) {
                if (x - y).abs() > 1e-8 {
                    return Err(Error::Integrity(format!("block sum at level {} off by {}", k + 1, x - y)));
                }
            }
        }
        let e = self.energy_from(&fresh);
        if (e - self.energy).abs() > 1e-8 * e.abs().max(1.0) {
            return Err(Error::Integrity(format!("cached energy {} vs recomputed {e}", self.energy)));
        }
        for (j, x) in self.spins.chunks_exact(self.comps).enumerate() {
            let norm: f64 = x.iter().map(|v| v * v).sum();
            if (norm - self.comps as f64).abs() > 1e-9 {
                return Err(Error::Integrity(format!("site {j} drifted to |x|^2 = {norm}")));
            }
        }
        Ok(())
    }

    /// Energy change if site `j` were set to `new`, in `O(KN)`.
    pub fn delta_energy(&self, j: usize, new: &[f64]) -> f64 {
        let nc = self.comps;
        let old = self.site(j);
        let mut norm_change = 0.0;
        for (a, b) in new.iter().zip(old) {
            norm_change += a * a - b * b;
        }
        let b = self.shape.block_size();
        let mut tau = j;
        let mut coupled = 0.0;
        for (level, f) in self.sums.iter().zip(&self.level_factor) {
            tau /= b;
            let s = &level[tau * nc..(tau + 1) * nc];
            let mut change = 0.0;
            for c in 0..nc {
                let delta = new[c] - old[c];
                change += delta * (2.0 * s[c] + delta);
            }
            coupled += f * change;
        }
        0.5 * (self.mu0 * norm_change - coupled)
    }

    /// Sets site `j` to `new`, updating block sums and the cached energy by
    /// `delta` (as returned by [`delta_energy`](Self::delta_energy)).
    pub fn apply_move(&mut self, j: usize, new: &[f64], delta: f64) {
        let nc = self.comps;
        let b = self.shape.block_size();
        let mut tau = j;
        for level in self.sums.iter_mut() {
            tau /= b;
            for c in 0..nc {
                level[tau * nc + c] += new[c] - self.spins[j * nc + c];
            }
        }
        self.spins[j * nc..(j + 1) * nc].copy_from_slice(new);
        self.energy += delta;
    }
}

/// Uniform point on the sphere of radius `√N` in `R^N`.
pub fn sample_sphere<R: Rng>(rng: &mut R, out: &mut [f64]) {
    loop {
        let mut norm = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            norm += *v * *v;
        }
        if norm > 1e-300 {
            let scale = (out.len() as f64 / norm).sqrt();
            for v in out.iter_mut() {
                *v *= scale;
            }
            return;
        }
    }
}

/// Parameters of a sampling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub shape: LatticeShape,
    #[serde(rename = "N")]
    pub components: usize,
    pub beta: f64,
    /// Measurement sweeps per chain; a sweep visits every site once.
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chains: usize,
    pub proposal: Proposal,
    /// Sweeps between re-projection and tree rebuilds.
    pub rebuild_every: usize,
}

impl McConfig {
    pub fn new(shape: LatticeShape, components: usize, beta: f64, sweeps: usize, seed: u64) -> Self {
        Self {
            shape,
            components,
            beta,
            sweeps,
            burn_in: (sweeps / 10).max(100),
            seed,
            chains: 1,
            proposal: Proposal::Mixed { step: 0.5 },
            rebuild_every: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return domain("N must be >= 1");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return domain(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if self.sweeps == 0 || self.chains == 0 || self.rebuild_every == 0 {
            return domain("sweeps, chains and rebuild_every must be >= 1");
        }
        match self.proposal {
            Proposal::Rotation { step } | Proposal::Mixed { step } if !(step > 0.0 && step.is_finite()) => {
                domain(format!("rotation step must be > 0, got {step}"))
            }
            _ => Ok(()),
        }
    }
}

/// One Markov chain with its own RNG stream.
#[derive(Debug, Clone)]
pub struct Chain {
    config: SpinConfiguration,
    rng: ChaCha8Rng,
    beta: f64,
    proposal: Proposal,
    step: f64,
    sweeps_done: usize,
    rebuild_every: usize,
    accepted: u64,
    proposed: u64,
    scratch: Vec<f64>,
}

impl Chain {
    /// Chain `index` of a run seeded with `seed`, started from random spins.
    pub fn new(cfg: &McConfig, index: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index);
        let config = SpinConfiguration::random(cfg.shape, cfg.components, &mut rng)?;
        let step = match cfg.proposal {
            Proposal::Resphere => 0.0,
            Proposal::Rotation { step } | Proposal::Mixed { step } => step,
        };
        Ok(Self {
            config,
            rng,
            beta: cfg.beta,
            proposal: cfg.proposal,
            step,
            sweeps_done: 0,
            rebuild_every: cfg.rebuild_every,
            accepted: 0,
            proposed: 0,
            scratch: vec![0.0; cfg.components],
        })
    }

    pub fn config(&self) -> &SpinConfiguration {
        &self.config
    }

    /// Current rotation step.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Accepted fraction of all proposals so far.
    pub fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    fn uses_rotation(&self) -> bool {
        match self.proposal {
            Proposal::Resphere => false,
            Proposal::Rotation { .. } => true,
            Proposal::Mixed { .. } => self.sweeps_done % 2 == 1,
        }
    }

    /// Proposes and accepts or rejects a new spin at site `j`.
    pub fn move_site(&mut self, j: usize, rotate: bool) -> bool {
        let mut new = std::mem::take(&mut self.scratch);
        if rotate {
            let old = self.config.site(j);
            let mut norm = 0.0;
            for (v, o) in new.iter_mut().zip(old) {
                let g: f64 = self.rng.sample(StandardNormal);
                *v = o + self.step * g;
                norm += *v * *v;
            }
            let scale = (new.len() as f64 / norm).sqrt();
            for v in new.iter_mut() {
                *v *= scale;
            }
        } else {
            sample_sphere(&mut self.rng, &mut new);
        }
        let delta = self.config.delta_energy(j, &new);
        let u: f64 = self.rng.random();
        let accept = delta <= 0.0 || u < (-self.beta * delta).exp();
        if accept {
            self.config.apply_move(j, &new, delta);
        }
        self.scratch = new;
        self.proposed += 1;
        self.accepted += accept as u64;
        accept
    }

    /// One pass over all sites; returns the acceptance fraction of the sweep.
    /// With `adapt` set, rotation sweeps nudge the step toward 40% acceptance.
    pub fn sweep(&mut self, adapt: bool) -> f64 {
        let rotate = self.uses_rotation();
        let n = self.config.shape.sites();
        let mut acc = 0usize;
        for j in 0..n {
            acc += self.move_site(j, rotate) as usize;
        }
        let rate = acc as f64 / n as f64;
        if adapt && rotate {
            self.step = (self.step * (rate - 0.4).exp()).clamp(1e-3, 10.0);
        }
        self.sweeps_done += 1;
        if self.sweeps_done % self.rebuild_every == 0 {
            self.config.rebuild();
        }
        rate
    }
}

/// Per-sweep totals `Σ_j x_j` of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    /// `totals[t N + c]` after measurement sweep `t`.
    pub totals: Vec<f64>,
    pub acceptance: f64,
    pub final_step: f64,
}

/// Output of [`mcmc_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub config: McConfig,
    pub chains: Vec<ChainRecord>,
}

impl McRun {
    pub fn acceptance(&self) -> f64 {
        self.chains.iter().map(|c| c.acceptance).sum::<f64>() / self.chains.len() as f64
    }

    /// Per-chain series of `g(Σ_j x_j)`.
    pub fn series<F: Fn(&[f64]) -> f64>(&self, g: F) -> Vec<Vec<f64>> {
        let nc = self.config.components;
        self.chains.iter().map(|c| c.totals.chunks_exact(nc).map(&g).collect()).collect()
    }

    /// Estimate of `⟨g(Σ_j x_j)⟩`.
    pub fn estimate<F: Fn(&[f64]) -> f64>(&self, g: F) -> McEstimate {
        let mut est = analyze(&self.series(g));
        est.seed = self.config.seed;
        est
    }

    /// `X = Σ_{j,c} x_{j,c} / √(nN)` for a total vector.
    pub fn block_spin(&self, total: &[f64]) -> f64 {
        let scale = ((self.config.shape.sites() * self.config.components) as f64).sqrt();
        total.iter().sum::<f64>() / scale
    }
}

/// Runs `cfg.chains` independent chains (in parallel) and records the total
/// spin after every measurement sweep. Results are ordered by chain index.
pub fn mcmc_run(cfg: &McConfig) -> Result<McRun> {
    cfg.validate()?;
    let chains: Vec<ChainRecord> = (0..cfg.chains as u64)
        .into_par_iter()
        .map(|index| run_chain(cfg, index))
        .collect::<Result<_>>()?;
    Ok(McRun { config: *cfg, chains })
}

fn run_chain(cfg: &McConfig, index: u64) -> Result<ChainRecord> {
    let mut chain = Chain::new(cfg, index)?;
    for _ in 0..cfg.burn_in {
        chain.sweep(true);
    }
    chain.accepted = 0;
    chain.proposed = 0;
    let nc = cfg.components;
    let mut totals = Vec::with_capacity(cfg.sweeps * nc);
    for _ in 0..cfg.sweeps {
        chain.sweep(false);
        totals.extend_from_slice(chain.config.total());
    }
    chain.config.check_integrity()?;
    Ok(ChainRecord { totals, acceptance: chain.acceptance(), final_step: chain.step })
}

/// Mean of a correlated series with batch-means error bars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// Integrated autocorrelation time in sweeps.
    pub tau_int: f64,
    pub n_samples: usize,
    pub batch_size: usize,
    pub n_batches: usize,
    pub seed: u64,
    /// Set when there are too few batches of adequate length for the error
    /// bar to be reliable.
    pub precision_warning: bool,
}

/// Integrated autocorrelation time by Sokal's self-consistent window
/// (`W ≥ 6 τ(W)`), with the autocorrelation averaged over chains.
pub fn tau_int(chains: &[Vec<f64>]) -> f64 {
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .filter(|c| c.len() > 1)
        .map(|c| {
            let m = c.iter().sum::<f64>() / c.len() as f64;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let acf = |t: usize| -> f64 {
        let (mut s, mut count) = (0.0, 0usize);
        for c in &centered {
            if c.len() > t {
                s += c.iter().zip(&c[t..]).map(|(a, b)| a * b).sum::<f64>();
                count += c.len() - t;
            }
        }
        if count == 0 {
            0.0
        } else {
            s / count as f64
        }
    };
    let c0 = acf(0);
    if !(c0 > 0.0) {
        return 0.5;
    }
    let max_len = centered.iter().map(|c| c.len()).max().unwrap_or(0);
    let mut tau = 0.5;
    for w in 1..max_len / 2 {
        tau += acf(w) / c0;
        if w as f64 >= 6.0 * tau {
            return tau.max(0.5);
        }
    }
    tau.max(0.5)
}

/// Batch-means analysis pooled over chains; the batch length is the
/// smallest power of two at least `10 τ_int`.
pub fn analyze(chains: &[Vec<f64>]) -> McEstimate {
    let n_samples: usize = chains.iter().map(|c| c.len()).sum();
    let mean = chains.iter().flatten().sum::<f64>() / n_samples.max(1) as f64;
    let tau = tau_int(chains);
    let mut batch = 1usize;
    while (batch as f64) < 10.0 * tau {
        batch *= 2;
    }
    let mut batch_means = Vec::new();
    for c in chains {
        for chunk in c.chunks_exact(batch) {
            batch_means.push(chunk.iter().sum::<f64>() / batch as f64);
        }
    }
    let nb = batch_means.len();
    let std_error = if nb > 1 {
        let bm = batch_means.iter().sum::<f64>() / nb as f64;
        let var = batch_means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (nb - 1) as f64;
        (var / nb as f64).sqrt()
    } else {
        f64::NAN
    };
    McEstimate {
        mean,
        std_error,
        tau_int: tau,
        n_samples,
        batch_size: batch,
        n_batches: nb,
        seed: 0,
        precision_warning: nb < MIN_BATCHES,
    }
}

/// `Θ̂(β, z)`: sample means of `exp(z X)` on a grid of `z`.
pub fn estimate_mgf(run: &McRun, z_grid: &[f64]) -> Vec<McEstimate> {
    z_grid
        .iter()
        .map(|&z| {
            if z == 0.0 {
                let mut est = run.estimate(|_| 1.0);
                est.std_error = 0.0;
                est
            } else {
                run.estimate(|t| (z * run.block_spin(t)).exp())
            }
        })
        .collect()
}

/// Exact `N = 1` quantities from summing over all `2^n` sign configurations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactN1 {
    /// `Z = Σ_σ exp(−β ½(σ, −Δσ))`.
    pub partition: f64,
    /// `Θ_n(β, z) = ⟨exp(z Σσ/√n)⟩`.
    pub theta: f64,
    /// `⟨(Σσ/√n)²⟩`.
    pub second_moment: f64,
}

pub fn exact_partition_n1(shape: &LatticeShape, beta: f64, z: f64) -> Result<ExactN1> {
    let n = shape.sites();
    if n > 20 {
        return Err(Error::Capacity { n, cap: 20 });
    }
    if !(beta >= 0.0 && beta.is_finite() && z.is_finite()) {
        return domain(format!("need finite beta >= 0 and finite z, got beta = {beta}, z = {z}"));
    }
    let lap = build_laplacian(shape);
    let root_n = (n as f64).sqrt();
    let mut x = vec![0.0; n];
    let (mut zsum, mut tsum, mut msum) = (0.0, 0.0, 0.0);
    for mask in 0u32..(1u32 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        let lx = lap.apply(&x)?;
        let e: f64 = 0.5 * x.iter().zip(&lx).map(|(a, b)| a * b).sum::<f64>();
        let w = (-beta * e).exp();
        let m = x.iter().sum::<f64>() / root_n;
        zsum += w;
        tsum += w * (z * m).exp();
        msum += w * m * m;
    }
    Ok(ExactN1 { partition: zsum, theta: tsum / zsum, second_moment: msum / zsum })
}

/// Statistics of the block spin `X^γ = n^{−γ/(2d)} Σ_j x_{j,c}`, pooled
/// over components.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpinStats {
    /// `(bin_center, count)`.
    pub histogram: Vec<(f64, u64)>,
    pub mean: McEstimate,
    pub second_moment: McEstimate,
}

pub fn block_spin_histogram(run: &McRun, gamma: f64, bins: usize) -> Result<BlockSpinStats> {
    if bins == 0 {
        return domain("need at least one histogram bin");
    }
    let shape = run.config.shape;
    let scale = (shape.sites() as f64).powf(-gamma / (2.0 * shape.dim() as f64));
    let nc = run.config.components as f64;
    let mean = run.estimate(|t| t.iter().sum::<f64>() * scale / nc);
    let second_moment = run.estimate(|t| t.iter().map(|v| (v * scale).powi(2)).sum::<f64>() / nc);
    let values: Vec<f64> = run.chains.iter().flat_map(|c| c.totals.iter().map(|v| v * scale)).collect();
    let hi = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let width = 2.0 * hi / bins as f64;
    let mut counts = vec![0u64; bins];
    for v in &values {
        let idx = (((v + hi) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let histogram = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (-hi + (i as f64 + 0.5) * width, c))
        .collect();
    Ok(BlockSpinStats { histogram, mean, second_moment })
}
