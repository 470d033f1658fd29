//! Index arithmetic and block operators on the hierarchical lattice.
//!
//! Vectors over `Λ_K = {0, …, L^K − 1}^d` are stored in *hierarchical order*:
//! the position of a site is `Σ_k code(θ_k) · (L^d)^{k−1}` where `θ_k` is the
//! level-`k` digit vector and `code` packs its `d` components in base `L`.
//! In this order every block at level `k` is a contiguous run of `L^{dk}`
//! entries, so block sums are strided reductions.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fmt::fmt_f64;

/// Largest site count for which dense matrices are built.
pub const DENSE_CAP: usize = 4096;

/// The triple `(L, d, K)` with `n = L^{dK}` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "ShapeRepr", into = "ShapeRepr")]
pub struct LatticeShape {
    l: usize,
    d: usize,
    k: usize,
    block: usize,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct ShapeRepr {
    #[serde(rename = "L")]
    l: usize,
    d: usize,
    #[serde(rename = "K")]
    k: usize,
}

impl TryFrom<ShapeRepr> for LatticeShape {
    type Error = Error;
    fn try_from(r: ShapeRepr) -> Result<Self> {
        LatticeShape::new(r.l, r.d, r.k)
    }
}

impl From<LatticeShape> for ShapeRepr {
    fn from(s: LatticeShape) -> Self {
        ShapeRepr { l: s.l, d: s.d, k: s.k }
    }
}

impl LatticeShape {
    pub fn new(l: usize, d: usize, k: usize) -> Result<Self> {
        if l < 2 {
            return domain(format!("block side L must be >= 2, got {l}"));
        }
        if d < 1 || k < 1 {
            return domain(format!("need d >= 1 and K >= 1, got d = {d}, K = {k}"));
        }
        let overflow = || Error::Domain(format!("L^(dK) overflows for L = {l}, d = {d}, K = {k}"));
        let block = u32::try_from(d)
            .ok()
            .and_then(|d| l.checked_pow(d))
            .ok_or_else(overflow)?;
        let n = u32::try_from(k)
            .ok()
            .and_then(|k| block.checked_pow(k))
            .ok_or_else(overflow)?;
        Ok(Self { l, d, k, block, n })
    }

    pub fn side(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> usize {
        self.k
    }

    /// `n = L^{dK}`.
    pub fn sites(&self) -> usize {
        self.n
    }

    /// `L^d`, the number of sub-blocks in a block.
    pub fn block_size(&self) -> usize {
        self.block
    }

    /// Linear extent `L^K` of the box along each axis.
    pub fn extent(&self) -> usize {
        self.l.pow(self.k as u32)
    }

    /// RG scaling exponent `γ = d + 2`.
    pub fn gamma(&self) -> usize {
        self.d + 2
    }

    pub fn blocking(&self) -> Blocking {
        Blocking {
            block: self.block,
            levels: self.k,
            decay: 1.0 / (self.l * self.l) as f64,
        }
    }

    /// Digits of a multi-index `i ∈ {0, …, L^K − 1}^d`.
    pub fn index_to_digits(&self, i: &[usize]) -> Result<HierarchyIndex> {
        if i.len() != self.d {
            return domain(format!("multi-index has {} components, expected d = {}", i.len(), self.d));
        }
        let extent = self.extent();
        let mut rest = i.to_vec();
        for (axis, &c) in i.iter().enumerate() {
            if c >= extent {
                return domain(format!("component {axis} = {c} out of range 0..{extent}"));
            }
        }
        let digits = (0..self.k)
            .map(|_| {
                rest.iter_mut()
                    .map(|c| {
                        let digit = *c % self.l;
                        *c /= self.l;
                        digit
                    })
                    .collect()
            })
            .collect();
        Ok(HierarchyIndex { digits })
    }

    /// Inverse of [`index_to_digits`](Self::index_to_digits).
    pub fn digits_to_index(&self, h: &HierarchyIndex) -> Result<Vec<usize>> {
        self.check_digits(h)?;
        let mut i = vec![0usize; self.d];
        let mut scale = 1;
        for level in &h.digits {
            for (axis, &digit) in level.iter().enumerate() {
                i[axis] += digit * scale;
            }
            scale *= self.l;
        }
        Ok(i)
    }

    /// Position of a site in hierarchical storage order.
    pub fn position(&self, h: &HierarchyIndex) -> Result<usize> {
        self.check_digits(h)?;
        let mut pos = 0;
        let mut scale = 1;
        for level in &h.digits {
            let code = level.iter().rev().fold(0, |acc, &digit| acc * self.l + digit);
            pos += code * scale;
            scale *= self.block;
        }
        Ok(pos)
    }

    /// Digits of the site stored at `pos`.
    pub fn digits_at(&self, pos: usize) -> Result<HierarchyIndex> {
        if pos >= self.n {
            return domain(format!("position {pos} out of range 0..{}", self.n));
        }
        let mut rest = pos;
        let digits = (0..self.k)
            .map(|_| {
                let mut code = rest % self.block;
                rest /= self.block;
                (0..self.d)
                    .map(|_| {
                        let digit = code % self.l;
                        code /= self.l;
                        digit
                    })
                    .collect()
            })
            .collect();
        Ok(HierarchyIndex { digits })
    }

    fn check_digits(&self, h: &HierarchyIndex) -> Result<()> {
        if h.digits.len() != self.k || h.digits.iter().any(|lv| lv.len() != self.d) {
            return domain("digit array does not match the lattice shape");
        }
        if h.digits.iter().flatten().any(|&digit| digit >= self.l) {
            return domain(format!("digit out of range 0..{}", self.l));
        }
        Ok(())
    }

    /// Image of `θ` under the exchange reflection at hierarchy `level` (1-based).
    ///
    /// Only the level-`level` digit changes: its component along `plane.axis`
    /// is shifted by `L/2` modulo `L`, which swaps the halves `B_L^±`.
    pub fn reflection_map(
        &self,
        theta: &HierarchyIndex,
        level: usize,
        plane: ReflectionPlane,
    ) -> Result<HierarchyIndex> {
        self.check_reflection(level, plane)?;
        self.check_digits(theta)?;
        let mut out = theta.clone();
        let digit = &mut out.digits[level - 1][plane.axis];
        *digit = (*digit + self.l / 2) % self.l;
        Ok(out)
    }

    /// Whether `θ` lies in the `+` half (`θ_{level, axis} < L/2`).
    pub fn in_plus_half(&self, theta: &HierarchyIndex, level: usize, plane: ReflectionPlane) -> Result<bool> {
        self.check_reflection(level, plane)?;
        self.check_digits(theta)?;
        Ok(theta.digits[level - 1][plane.axis] < self.l / 2)
    }

    fn check_reflection(&self, level: usize, plane: ReflectionPlane) -> Result<()> {
        if level == 0 || level > self.k {
            return domain(format!("reflection level must be in 1..={}, got {level}", self.k));
        }
        if plane.axis >= self.d {
            return domain(format!("reflection axis {} out of range 0..{}", plane.axis, self.d));
        }
        if self.l % 2 != 0 {
            return domain(format!("a plane cannot split L = {} cells into equal halves", self.l));
        }
        Ok(())
    }
}

/// Digits `(θ_1, …, θ_K)`, least-significant level first; `digits[k][axis]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HierarchyIndex {
    pub digits: Vec<Vec<usize>>,
}

/// An axis-aligned plane splitting `{0, …, L−1}^d` into equal halves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReflectionPlane {
    pub axis: usize,
}

/// Block structure underlying all hierarchical operators: `levels` levels of
/// `block`-fold grouping, with level-`k` coupling weight `decay^k`.
///
/// For a [`LatticeShape`] this is `(L^d, K, L^{-2})`; Dyson's model uses
/// `(2, K, 2^{1-α})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blocking {
    pub block: usize,
    pub levels: usize,
    pub decay: f64,
}

impl Blocking {
    pub fn dyson(levels: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return domain(format!("Dyson exponent alpha must exceed 1, got {alpha}"));
        }
        if levels == 0 || levels >= usize::BITS as usize {
            return domain(format!("invalid number of levels {levels}"));
        }
        Ok(Self { block: 2, levels, decay: 2f64.powf(1.0 - alpha) })
    }

    pub fn sites(&self) -> usize {
        self.block.pow(self.levels as u32)
    }

    /// Coupling weights `decay^k` for `k = 1..=levels`.
    pub fn level_weights(&self) -> Vec<f64> {
        (1..=self.levels).map(|k| self.decay.powi(k as i32)).collect()
    }

    /// `μ₀ = Σ_k decay^k`, summed from the coarsest level down.
    pub fn mu0(&self) -> f64 {
        self.level_weights().iter().rev().sum()
    }

    fn level_of_len(&self, len: usize) -> Option<usize> {
        (0..=self.levels).find(|&j| self.block.pow(j as u32) == len)
    }

    /// `(Bu)_τ = L^{-d/2} Σ_{θ ∈ block τ} u_{(θ,τ)}`.
    pub fn apply_block(&self, u: &[f64]) -> Result<Vec<f64>> {
        match self.level_of_len(u.len()) {
            Some(j) if j >= 1 => {}
            _ => {
                return domain(format!(
                    "block operator needs length b^j with 1 <= j <= {}, got {}",
                    self.levels,
                    u.len()
                ))
            }
        }
        let norm = (self.block as f64).sqrt().recip();
        Ok(u.chunks_exact(self.block).map(|c| c.iter().sum::<f64>() * norm).collect())
    }

    /// `(B*v)_{(θ,τ)} = L^{-d/2} v_τ`.
    pub fn apply_block_adjoint(&self, v: &[f64]) -> Result<Vec<f64>> {
        match self.level_of_len(v.len()) {
            Some(j) if j < self.levels => {}
            _ => {
                return domain(format!(
                    "adjoint block operator needs length b^j with j < {}, got {}",
                    self.levels,
                    v.len()
                ))
            }
        }
        let norm = (self.block as f64).sqrt().recip();
        Ok(v.iter().flat_map(|&x| std::iter::repeat_n(x * norm, self.block)).collect())
    }

    /// Block sums at every level: `sums[k-1][τ] = Σ_{i ∈ block (k,τ)} u_i`.
    fn block_sums(&self, u: &[f64], ops: &mut u64) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(self.levels);
        let mut cur = u;
        for _ in 0..self.levels {
            let next: Vec<f64> = cur.chunks_exact(self.block).map(|c| c.iter().sum()).collect();
            *ops += cur.len() as u64;
            out.push(next);
            cur = out.last().unwrap();
        }
        out
    }
}

/// Which hierarchical operator a [`HierOperator`] realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    /// `J = Σ_k L^{-2k} (B*)^k B^k`.
    Coupling,
    /// `−Δ = μ₀ I − J`.
    MinusLaplacian,
    /// `P_k = (B*)^k B^k`, `0 <= k <= K`.
    Projector(usize),
    /// `Q_k = P_k − P_{k+1}`, `Q_K = P_K`.
    Fluctuation(usize),
    /// `B^k`, mapping `Λ_K → Λ_{K−k}`.
    BlockPower(usize),
}

/// A hierarchical operator with an `O(nK)` matrix-free apply and a dense
/// realization for small lattices.
#[derive(Debug, Clone, Copy)]
pub struct HierOperator {
    pub blocking: Blocking,
    pub kind: OperatorKind,
}

pub fn build_coupling(shape: &LatticeShape) -> HierOperator {
    HierOperator { blocking: shape.blocking(), kind: OperatorKind::Coupling }
}

pub fn build_laplacian(shape: &LatticeShape) -> HierOperator {
    HierOperator { blocking: shape.blocking(), kind: OperatorKind::MinusLaplacian }
}

/// `P_k`, or `Q_k` when `fluctuation` is set.
pub fn projector(shape: &LatticeShape, level: usize, fluctuation: bool) -> Result<HierOperator> {
    if level > shape.levels() {
        return domain(format!("projector level must be in 0..={}, got {level}", shape.levels()));
    }
    let kind = if fluctuation { OperatorKind::Fluctuation(level) } else { OperatorKind::Projector(level) };
    Ok(HierOperator { blocking: shape.blocking(), kind })
}

impl HierOperator {
    pub fn input_len(&self) -> usize {
        self.blocking.sites()
    }

    pub fn output_len(&self) -> usize {
        match self.kind {
            OperatorKind::BlockPower(k) => self.blocking.block.pow((self.blocking.levels - k) as u32),
            _ => self.blocking.sites(),
        }
    }

    fn check_level(&self) -> Result<()> {
        match self.kind {
            OperatorKind::Projector(k) | OperatorKind::Fluctuation(k) | OperatorKind::BlockPower(k)
                if k > self.blocking.levels =>
            {
                domain(format!("level {k} exceeds K = {}", self.blocking.levels))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.apply_counted(v).map(|(out, _)| out)
    }

    /// Applies the operator and reports the number of floating-point
    /// additions and multiplications performed.
    pub fn apply_counted(&self, v: &[f64]) -> Result<(Vec<f64>, u64)> {
        self.check_level()?;
        let n = self.blocking.sites();
        if v.len() != n {
            return domain(format!("vector length {} does not match n = {n}", v.len()));
        }
        let mut ops = 0u64;
        let b = self.blocking.block;
        let out = match self.kind {
            OperatorKind::Coupling | OperatorKind::MinusLaplacian => {
                let sums = self.blocking.block_sums(v, &mut ops);
                let weights = self.blocking.level_weights();
                // Accumulate the per-block coefficient from the coarsest level down.
                let mut acc = vec![0.0];
                for k in (1..=self.blocking.levels).rev() {
                    let scale = weights[k - 1] / (b.pow(k as u32) as f64);
                    let level_sums = &sums[k - 1];
                    let prev = acc;
                    acc = level_sums
                        .iter()
                        .enumerate()
                        .map(|(tau, &s)| prev[tau / b] + scale * s)
                        .collect();
                    ops += 3 * level_sums.len() as u64;
                }
                let mut y: Vec<f64> = (0..n).map(|i| acc[i / b]).collect();
                if self.kind == OperatorKind::MinusLaplacian {
                    let mu0 = self.blocking.mu0();
                    for (yi, &vi) in y.iter_mut().zip(v) {
                        *yi = mu0 * vi - *yi;
                    }
                    ops += 2 * n as u64;
                }
                y
            }
            OperatorKind::Projector(k) => self.block_mean(v, k, &mut ops),
            OperatorKind::Fluctuation(k) => {
                let pk = self.block_mean(v, k, &mut ops);
                if k == self.blocking.levels {
                    pk
                } else {
                    let pk1 = self.block_mean(v, k + 1, &mut ops);
                    ops += n as u64;
                    pk.iter().zip(&pk1).map(|(a, c)| a - c).collect()
                }
            }
            OperatorKind::BlockPower(k) => {
                let mut cur = v.to_vec();
                for _ in 0..k {
                    ops += 2 * cur.len() as u64;
                    cur = self.blocking.apply_block(&cur)?;
                }
                cur
            }
        };
        Ok((out, ops))
    }

    fn block_mean(&self, v: &[f64], k: usize, ops: &mut u64) -> Vec<f64> {
        let size = self.blocking.block.pow(k as u32);
        let inv = 1.0 / size as f64;
        *ops += 2 * v.len() as u64;
        v.chunks_exact(size)
            .flat_map(|c| std::iter::repeat_n(c.iter().sum::<f64>() * inv, size))
            .collect()
    }

    /// Dense matrix built entrywise from the block structure (independently
    /// of the matrix-free apply).
    pub fn dense(&self) -> Result<DMatrix<f64>> {
        self.check_level()?;
        let n = self.blocking.sites();
        if n > DENSE_CAP {
            return Err(Error::Capacity { n, cap: DENSE_CAP });
        }
        let b = self.blocking.block;
        let same_block = |i: usize, j: usize, k: usize| {
            let size = b.pow(k as u32);
            i / size == j / size
        };
        let p = |i: usize, j: usize, k: usize| -> f64 {
            if same_block(i, j, k) {
                1.0 / b.pow(k as u32) as f64
            } else {
                0.0
            }
        };
        let weights = self.blocking.level_weights();
        let levels = self.blocking.levels;
        let m = match self.kind {
            OperatorKind::Coupling => DMatrix::from_fn(n, n, |i, j| {
                (1..=levels).map(|k| weights[k - 1] * p(i, j, k)).sum()
            }),
            OperatorKind::MinusLaplacian => DMatrix::from_fn(n, n, |i, j| {
                let delta = if i == j { 1.0 } else { 0.0 };
                (1..=levels).map(|k| weights[k - 1] * (delta - p(i, j, k))).sum()
            }),
            OperatorKind::Projector(k) => DMatrix::from_fn(n, n, |i, j| p(i, j, k)),
            OperatorKind::Fluctuation(k) => DMatrix::from_fn(n, n, |i, j| {
                if k == levels {
                    p(i, j, k)
                } else {
                    p(i, j, k) - p(i, j, k + 1)
                }
            }),
            OperatorKind::BlockPower(k) => {
                let size = b.pow(k as u32);
                let norm = (size as f64).sqrt().recip();
                DMatrix::from_fn(n / size, n, |tau, i| if i / size == tau { norm } else { 0.0 })
            }
        };
        Ok(m)
    }
}

/// Dyson's hierarchical energy `−H = Σ_k 2^{-αk} Σ_r S_{k,r}²` for a
/// configuration of length `2^K`, `S_{k,r}` the sum over the `r`-th dyadic
/// block of size `2^k`.
pub fn dyson_energy(sigma: &[f64], alpha: f64, levels: usize) -> Result<f64> {
    if !(alpha > 1.0) {
        return domain(format!("alpha must exceed 1, got {alpha}"));
    }
    if levels >= usize::BITS as usize || sigma.len() != 1usize << levels {
        return domain(format!("configuration length {} is not 2^{levels}", sigma.len()));
    }
    let mut total = 0.0;
    for k in 1..=levels {
        let size = 1usize << k;
        let level: f64 = sigma
            .chunks_exact(size)
            .map(|c| {
                let s: f64 = c.iter().sum();
                s * s
            })
            .sum();
        total += 2f64.powf(-alpha * k as f64) * level;
    }
    Ok(total)
}

/// Quadratic form `(x, A x)` by dense multiplication.
pub fn quadratic_form(a: &DMatrix<f64>, x: &[f64]) -> f64 {
    let v = nalgebra::DVector::from_column_slice(x);
    v.dot(&(a * &v))
}

/// Writes a matrix as row-major CSV with 17 significant digits.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut w: W) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// `⟨F · π_P(F)⟩` for the `N = 1` model by summing over all `2^n` sign
/// configurations with weight `exp(−(β/2)(x, −Δx))`.
///
/// `observable` receives the spins of the `+` half, in storage order.
pub fn reflection_expectation<F>(
    shape: &LatticeShape,
    beta: f64,
    level: usize,
    plane: ReflectionPlane,
    observable: F,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let n = shape.sites();
    if n > 20 {
        return Err(Error::Capacity { n, cap: 20 });
    }
    let mut plus = Vec::new();
    let mut image = Vec::new();
    for pos in 0..n {
        let theta = shape.digits_at(pos)?;
        if shape.in_plus_half(&theta, level, plane)? {
            plus.push(pos);
            image.push(shape.position(&shape.reflection_map(&theta, level, plane)?)?);
        }
    }
    let lap = build_laplacian(shape);
    let mut x = vec![0.0; n];
    let (mut num, mut den) = (0.0, 0.0);
    let mut fp = vec![0.0; plus.len()];
    let mut fm = vec![0.0; plus.len()];
    for mask in 0u32..(1u32 << n) {
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        let lx = lap.apply(&x)?;
        let e: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        let w = (-0.5 * beta * e).exp();
        for (j, (&p, &r)) in plus.iter().zip(&image).enumerate() {
            fp[j] = x[p];
            fm[j] = x[r];
        }
        num += w * observable(&fp) * observable(&fm);
        den += w;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(l: usize, d: usize, k: usize) -> LatticeShape {
        LatticeShape::new(l, d, k).unwrap()
    }

    #[test]
    fn shape_validation() {
        assert!(LatticeShape::new(1, 1, 1).is_err());
        assert!(LatticeShape::new(2, 0, 1).is_err());
        assert!(LatticeShape::new(2, 1, 0).is_err());
        assert!(LatticeShape::new(2, 64, 64).is_err());
        assert_eq!(shape(3, 2, 2).sites(), 81);
    }

    #[test]
    fn digits_of_zero_and_three() {
        let s = shape(2, 1, 2);
        let h = s.index_to_digits(&[0]).unwrap();
        assert!(h.digits.iter().flatten().all(|&x| x == 0));
        let h = s.index_to_digits(&[3]).unwrap();
        assert_eq!(h.digits, vec![vec![1], vec![1]]);
    }

    #[test]
    fn digits_round_trip_exhaustive() {
        let s = shape(3, 2, 2);
        let mut seen = std::collections::HashSet::new();
        for a in 0..9 {
            for b in 0..9 {
                let h = s.index_to_digits(&[a, b]).unwrap();
                assert_eq!(s.digits_to_index(&h).unwrap(), vec![a, b]);
                let pos = s.position(&h).unwrap();
                assert_eq!(s.digits_at(pos).unwrap(), h);
                assert!(seen.insert(pos));
            }
        }
        assert_eq!(seen.len(), 81);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let s = shape(2, 1, 2);
        assert!(matches!(s.index_to_digits(&[4]), Err(Error::Domain(_))));
        assert!(s.index_to_digits(&[0, 0]).is_err());
    }

    #[test]
    fn block_of_constant_vector() {
        let b = shape(2, 1, 3).blocking();
        let out = b.apply_block(&[1.0; 8]).unwrap();
        assert_eq!(out.len(), 4);
        for v in out {
            assert!((v - 2f64.sqrt()).abs() < 1e-15);
        }
        assert!(b.apply_block(&[1.0; 7]).is_err());
    }

    #[test]
    fn block_then_adjoint_is_identity() {
        let b = shape(2, 1, 3).blocking();
        let v = [0.3, -1.2, 4.0, 0.5];
        let back = b.apply_block(&b.apply_block_adjoint(&v).unwrap()).unwrap();
        for (x, y) in back.iter().zip(&v) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn mu0_for_small_chain() {
        let s = shape(2, 1, 2);
        assert!((s.blocking().mu0() - 0.3125).abs() < 1e-16);
        let ones = vec![1.0; 4];
        let j1 = build_coupling(&s).apply(&ones).unwrap();
        let total: f64 = j1.iter().sum::<f64>() / 4.0;
        assert!((total - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn coupling_is_symmetric() {
        let j = build_coupling(&shape(3, 1, 2)).dense().unwrap();
        assert_eq!((&j - j.transpose()).amax(), 0.0);
        assert!(j.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn laplacian_kills_constants() {
        let s = shape(2, 3, 2);
        let out = build_laplacian(&s).apply(&vec![1.0; s.sites()]).unwrap();
        assert!(out.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn laplacian_equals_mu0_minus_coupling() {
        let s = shape(2, 2, 2);
        let lap = build_laplacian(&s).dense().unwrap();
        let j = build_coupling(&s).dense().unwrap();
        let mu0 = s.blocking().mu0();
        let diff = lap - (DMatrix::identity(16, 16) * mu0 - j);
        assert!(diff.amax() < 1e-14);
    }

    #[test]
    fn projector_level_out_of_range() {
        assert!(projector(&shape(2, 1, 2), 3, false).is_err());
    }

    #[test]
    fn dense_cap_enforced() {
        let s = shape(2, 1, 13);
        assert!(matches!(build_coupling(&s).dense(), Err(Error::Capacity { .. })));
    }

    #[test]
    fn dyson_energy_small_cases() {
        let alpha = 1.7;
        let e = dyson_energy(&[1.0; 4], alpha, 2).unwrap();
        let expected = 2f64.powf(-alpha) * 8.0 + 2f64.powf(-2.0 * alpha) * 16.0;
        assert!((e - expected).abs() < 1e-14);
        let j = HierOperator { blocking: Blocking::dyson(2, alpha).unwrap(), kind: OperatorKind::Coupling };
        let jx = j.apply(&[1.0; 4]).unwrap();
        assert!((jx.iter().sum::<f64>() - expected).abs() < 1e-14);
        assert_eq!(dyson_energy(&[0.0; 8], alpha, 3).unwrap(), 0.0);
        assert!(dyson_energy(&[1.0; 5], alpha, 2).is_err());
    }

    #[test]
    fn reflection_for_binary_blocks() {
        let s = shape(2, 1, 3);
        let plane = ReflectionPlane { axis: 0 };
        for pos in 0..8 {
            let t = s.digits_at(pos).unwrap();
            for k in 1..=3 {
                let r = s.reflection_map(&t, k, plane).unwrap();
                assert_eq!(r.digits[k - 1][0], 1 - t.digits[k - 1][0]);
                assert_eq!(s.reflection_map(&r, k, plane).unwrap(), t);
            }
        }
    }

    #[test]
    fn reflection_needs_even_split() {
        let s = shape(3, 1, 2);
        let t = s.digits_at(0).unwrap();
        assert!(s.reflection_map(&t, 1, ReflectionPlane { axis: 0 }).is_err());
        let s = shape(2, 2, 2);
        let t = s.digits_at(0).unwrap();
        assert!(s.reflection_map(&t, 1, ReflectionPlane { axis: 2 }).is_err());
        assert!(s.reflection_map(&t, 3, ReflectionPlane { axis: 0 }).is_err());
    }
}
