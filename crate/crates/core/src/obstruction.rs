//! Basis vectors `e^n_j`, functionals `alpha^n_j`, the vectors `Phi^n_g` and
//! the level traces `beta^n` on truncated operators.
//!
//! Operators act on the span of `{e^n_j : n <= N}` and are stored as
//! coefficient matrices in that basis. Flat basis index of `e^n_j` is
//! `2^n - 1 + j`, with `j` counted from zero.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::Construction;
use crate::error::{Error, Result};
use crate::fourier::{analyze, synthesize, SparseKernel};
use crate::seeding::stream_rng;
use crate::signs::{lower_kernel, middle_kernel, phi_scale, upper_kernel, PhiSupremum};
use crate::space::{MixedNormVector, PSchedule};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    pub level: u32,
    pub index: usize,
}

impl BasisIndex {
    pub fn new(level: u32, index: usize) -> Self {
        Self { level, index }
    }

    pub fn flat(&self) -> usize {
        (1usize << self.level) - 1 + self.index
    }

    pub fn from_flat(i: usize) -> Self {
        let level = (i + 1).ilog2();
        Self {
            level,
            index: i + 1 - (1usize << level),
        }
    }
}

/// Number of basis vectors `e^n_j` with `n <= truncation`.
pub fn basis_dim(truncation: u32) -> usize {
    (1usize << (truncation + 1)) - 1
}

fn check_index(n: u32, j: usize) -> Result<()> {
    if j >= 1 << n {
        return Err(Error::IndexOutOfRange {
            what: "basis index",
            index: j as u64,
            size: 1 << n,
        });
    }
    Ok(())
}

/// Coordinates of `e^n_j`: `tau^{n-1}_j` on `G_{n-1}` and `eps^n_j sigma^n_j`
/// on `G_n`.
pub fn basis_vector(data: &Construction, n: u32, j: usize) -> Result<MixedNormVector> {
    check_index(n, j)?;
    let level = data.level(n)?;
    let table = data.table(n)?;
    let eps = f64::from(level.signs.signs[j]);
    let sigma = level.enumeration.sigma[j];
    let own = (0..table.order() as i64).map(|g| eps * table.value(sigma, g)).collect();
    let mut v = MixedNormVector::new().with_block(n, own)?;
    if n >= 1 {
        let prev = data.table(n - 1)?;
        let tau = data.enumeration(n - 1)?.tau[j];
        v.set_block(n - 1, (0..prev.order() as i64).map(|g| prev.value(tau, g)).collect())?;
    }
    Ok(v)
}

/// The two expressions for `alpha^n_j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaForm {
    /// `(1/k_n) sum_{g in G_n} eps^n_j sigma^n_j(-g) f(g)`.
    Level,
    /// `(2/k_n) sum_{g in G_{n-1}} tau^{n-1}_j(-g) f(g)`, for `n >= 1`.
    Previous,
}

pub fn alpha(data: &Construction, n: u32, j: usize, f: &MixedNormVector, form: AlphaForm) -> Result<Complex64> {
    check_index(n, j)?;
    let kn = crate::characters::group_order(n) as f64;
    match form {
        AlphaForm::Level => {
            let table = data.table(n)?;
            let level = data.level(n)?;
            let eps = f64::from(level.signs.signs[j]);
            let sigma = level.enumeration.sigma[j];
            let Some(block) = f.block(n) else { return Ok(ZERO) };
            let s: Complex64 = block
                .iter()
                .enumerate()
                .map(|(g, x)| table.value(sigma, -(g as i64)) * x)
                .sum();
            Ok(s * eps / kn)
        }
        AlphaForm::Previous => {
            if n == 0 {
                return Err(Error::FormUnavailable { level: 0 });
            }
            let table = data.table(n - 1)?;
            let tau = data.enumeration(n - 1)?.tau[j];
            let Some(block) = f.block(n - 1) else { return Ok(ZERO) };
            let s: Complex64 = block
                .iter()
                .enumerate()
                .map(|(g, x)| table.value(tau, -(g as i64)) * x)
                .sum();
            Ok(s * 2.0 / kn)
        }
    }
}

/// All `alpha^n_j(f)`, `j < 2^n`, through one FFT of the relevant block.
pub fn alpha_all(data: &Construction, n: u32, f: &MixedNormVector, form: AlphaForm) -> Result<Vec<Complex64>> {
    let kn = crate::characters::group_order(n) as f64;
    let len = 1usize << n;
    match form {
        AlphaForm::Level => {
            let level = data.level(n)?;
            let Some(block) = f.block(n) else { return Ok(vec![ZERO; len]) };
            let spectrum = analyze(block);
            Ok(level
                .enumeration
                .sigma
                .iter()
                .zip(level.signs.weights())
                .map(|(&s, e)| spectrum[s as usize] * e / kn)
                .collect())
        }
        AlphaForm::Previous => {
            if n == 0 {
                return Err(Error::FormUnavailable { level: 0 });
            }
            let prev = data.enumeration(n - 1)?;
            data.level(n)?;
            let Some(block) = f.block(n - 1) else { return Ok(vec![ZERO; len]) };
            let spectrum = analyze(block);
            Ok(prev.tau.iter().map(|&t| spectrum[t as usize] * 2.0 / kn).collect())
        }
    }
}

/// Coordinates of `sum c_(m,i) e^m_i` for a flat coefficient vector over
/// levels `0..=truncation`.
pub fn realize(data: &Construction, coeffs: &[Complex64], truncation: u32) -> Result<MixedNormVector> {
    if coeffs.len() != basis_dim(truncation) {
        return Err(Error::BadParameter(format!(
            "expected {} coefficients, got {}",
            basis_dim(truncation),
            coeffs.len()
        )));
    }
    let mut out = MixedNormVector::new();
    for m in 0..=truncation {
        let at = |lvl: u32, i: usize| coeffs[BasisIndex::new(lvl, i).flat()];
        let own_nonzero = (0..1usize << m).any(|i| at(m, i) != ZERO);
        let next_nonzero = m < truncation && (0..2usize << m).any(|i| at(m + 1, i) != ZERO);
        if !own_nonzero && !next_nonzero {
            continue;
        }
        let level = data.level(m)?;
        let mut spectrum = vec![ZERO; crate::characters::group_order(m) as usize];
        for (i, (&s, e)) in level.enumeration.sigma.iter().zip(level.signs.weights()).enumerate() {
            spectrum[s as usize] += at(m, i) * e;
        }
        if next_nonzero {
            for (i, &t) in level.enumeration.tau.iter().enumerate() {
                spectrum[t as usize] += at(m + 1, i);
            }
        }
        out.set_block(m, synthesize(&spectrum))?;
    }
    Ok(out)
}

/// Basis coefficients of a vector in the span, read off with the level
/// form of the functionals.
pub fn coefficients_of(data: &Construction, f: &MixedNormVector, truncation: u32) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(basis_dim(truncation));
    for n in 0..=truncation {
        out.extend(alpha_all(data, n, f, AlphaForm::Level)?);
    }
    Ok(out)
}

/// Kernels generating every `Phi^n_g` of one level.
pub struct PhiFamily {
    level: u32,
    lower: Option<SparseKernel>,
    middle: SparseKernel,
    upper: SparseKernel,
    sigma: Vec<u64>,
    signs: Vec<f64>,
    tau: Vec<u64>,
    roots: crate::characters::UnitRoots,
}

/// `Phi^n_g` in both representations.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiVector {
    pub level: u32,
    pub g: u64,
    /// Coefficients of `e^n_j`: `-2^-n eps^n_j sigma^n_j(-g)`.
    pub current: Vec<Complex64>,
    /// Coefficients of `e^{n+1}_j`: `2^{-n-1} tau^n_j(-g)`.
    pub upper: Vec<Complex64>,
    /// Values on `G_{n-1}`, `G_n`, `G_{n+1}` from the closed forms.
    pub coords: MixedNormVector,
}

impl PhiFamily {
    /// Needs data at levels `n - 1` (when `n >= 1`), `n` and `n + 1`.
    pub fn new(data: &Construction, n: u32) -> Result<Self> {
        let current = data.enumeration(n)?;
        let next = data.enumeration(n + 1)?;
        let signs: Vec<f64> = data.signs(n)?.weights().collect();
        let next_signs: Vec<f64> = data.signs(n + 1)?.weights().collect();
        let lower = if n == 0 {
            None
        } else {
            Some(lower_kernel(current, &signs, data.enumeration(n - 1)?))
        };
        Ok(Self {
            level: n,
            lower,
            middle: middle_kernel(current),
            upper: upper_kernel(current, next, &next_signs),
            sigma: current.sigma.clone(),
            signs,
            tau: current.tau.clone(),
            roots: data.table(n)?.roots().clone(),
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn order(&self) -> u64 {
        self.roots.order()
    }

    pub fn phi(&self, g: u64) -> Result<PhiVector> {
        let n = self.level;
        if g >= self.order() {
            return Err(Error::IndexOutOfRange {
                what: "group element",
                index: g,
                size: self.order(),
            });
        }
        let neg_g = -(g as i64);
        let a = 2f64.powi(-(n as i32));
        let current = self
            .sigma
            .iter()
            .zip(&self.signs)
            .map(|(&s, e)| -a * e * self.roots.at(s as i64 * neg_g))
            .collect();
        let upper = self
            .tau
            .iter()
            .map(|&t| a / 2.0 * self.roots.at(t as i64 * neg_g))
            .collect();
        let mut coords = MixedNormVector::new()
            .with_block(n, self.middle.row(g))?
            .with_block(n + 1, self.upper.row(g))?;
        if let Some(lower) = &self.lower {
            coords.set_block(n - 1, lower.row(g))?;
        }
        Ok(PhiVector {
            level: n,
            g,
            current,
            upper,
            coords,
        })
    }
}

pub fn phi(data: &Construction, n: u32, g: u64) -> Result<PhiVector> {
    PhiFamily::new(data, n)?.phi(g)
}

impl PhiVector {
    /// Flat coefficient vector over levels `0..=truncation`.
    pub fn coefficients(&self, truncation: u32) -> Result<Vec<Complex64>> {
        if self.level + 1 > truncation {
            return Err(Error::TruncationTooSmall {
                level: self.level + 1,
                truncation,
            });
        }
        let mut c = vec![ZERO; basis_dim(truncation)];
        let base = BasisIndex::new(self.level, 0).flat();
        c[base..base + self.current.len()].copy_from_slice(&self.current);
        let base = BasisIndex::new(self.level + 1, 0).flat();
        c[base..base + self.upper.len()].copy_from_slice(&self.upper);
        Ok(c)
    }

    /// The basis expansion applied to explicit basis vectors.
    pub fn expand(&self, data: &Construction) -> Result<MixedNormVector> {
        let mut out = MixedNormVector::new();
        for (j, &c) in self.current.iter().enumerate() {
            out = out.axpy(c, &basis_vector(data, self.level, j)?);
        }
        for (j, &c) in self.upper.iter().enumerate() {
            out = out.axpy(c, &basis_vector(data, self.level + 1, j)?);
        }
        Ok(out)
    }

    /// `sum_{j=n-1}^{n+1} (sum_h |Phi(h)|^{p_j})^{2/p_j}` with plain sums.
    pub fn three_block_norm_sq(&self, schedule: &PSchedule) -> Result<f64> {
        let mut total = 0.0;
        for (l, block) in self.coords.blocks() {
            let p = schedule.p_value(u64::from(l))?;
            let s: f64 = block.iter().map(|z| z.norm().powf(p)).sum();
            total += s.powf(2.0 / p);
        }
        Ok(total)
    }
}

/// Largest coordinate difference between two vectors.
pub fn max_coordinate_gap(a: &MixedNormVector, b: &MixedNormVector) -> f64 {
    let mut worst = 0.0f64;
    for l in a.levels().chain(b.levels()) {
        let k = crate::characters::group_order(l);
        for g in 0..k {
            worst = worst.max((a.get(l, g) - b.get(l, g)).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiSupReport {
    pub level: u32,
    pub sup: PhiSupremum,
    pub bound: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Compares `max |Phi^n_g(h)|` over all three blocks with `a (n+1)^(1/2) 2^(-n/2)`.
pub fn check_phi_sup(n: u32, data: &Construction, a: f64) -> Result<PhiSupReport> {
    let sup = crate::signs::phi_supremum(n, data)?;
    let bound = a * phi_scale(n);
    Ok(PhiSupReport {
        level: n,
        sup,
        bound,
        ratio: sup.overall() / phi_scale(n),
        pass: sup.overall() <= bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhiNormReport {
    pub level: u32,
    pub g: u64,
    /// `||Phi||_Z` from the coordinates.
    pub norm: f64,
    /// Square of the norm from the plain three-block sum.
    pub three_block_sq: f64,
    /// The successive upper bounds on `||Phi||^2`.
    pub chain: [f64; 3],
    pub bound: f64,
    pub pass: bool,
}

/// The norm bound `3 sqrt(2) a (n+1)^(1/2) 2^(n (1/p_{n+1} - 1/2))`.
pub fn phi_norm_bound(n: u32, schedule: &PSchedule, a: f64) -> Result<f64> {
    let gap = schedule.gap(u64::from(n) + 1)?;
    Ok(3.0 * 2f64.sqrt() * a * f64::from(n + 1).sqrt() * 2f64.powf(-f64::from(n) * gap))
}

pub fn check_phi_norm_of(v: &PhiVector, schedule: &PSchedule, a: f64) -> Result<PhiNormReport> {
    let n = v.level;
    let norm = v.coords.z_norm(schedule)?;
    let three_block_sq = v.three_block_norm_sq(schedule)?;
    let nn = f64::from(n);
    let lead = a * a * (nn + 1.0) * 2f64.powf(-nn);
    let lo = n.saturating_sub(1);
    let mut dims = 0.0;
    let mut pow2 = 0.0;
    for j in lo..=n + 1 {
        let p = schedule.p_value(u64::from(j))?;
        dims += (crate::characters::group_order(j) as f64).powf(2.0 / p);
        pow2 += 2f64.powf(2.0 * f64::from(j) / p);
    }
    let last = 18.0 * a * a * (nn + 1.0) * 2f64.powf(-2.0 * nn * schedule.gap(u64::from(n) + 1)?);
    let bound = phi_norm_bound(n, schedule, a)?;
    Ok(PhiNormReport {
        level: n,
        g: v.g,
        norm,
        three_block_sq,
        chain: [lead * dims, 3.0 * lead * pow2, last],
        bound,
        pass: norm <= bound,
    })
}

pub fn check_phi_norm(n: u32, g: u64, data: &Construction, schedule: &PSchedule, a: f64) -> Result<PhiNormReport> {
    check_phi_norm_of(&phi(data, n, g)?, schedule, a)
}

/// A truncated operator on the span of `{e^n_j : n <= truncation}`.
///
/// `entry(src, dst)` is the coefficient of `e_dst` in `T(e_src)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMatrix {
    truncation: u32,
    dim: usize,
    entries: Vec<Complex64>,
}

impl OperatorMatrix {
    pub fn zeros(truncation: u32) -> Self {
        let dim = basis_dim(truncation);
        Self {
            truncation,
            dim,
            entries: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(truncation: u32) -> Self {
        let mut t = Self::zeros(truncation);
        for i in 0..t.dim {
            t.entries[i * t.dim + i] = Complex64::new(1.0, 0.0);
        }
        t
    }

    /// Entries with real and imaginary parts uniform in `[-1, 1)`.
    pub fn random(truncation: u32, seed: u64) -> Self {
        let mut t = Self::zeros(truncation);
        let mut rng = stream_rng(seed, 0);
        for e in &mut t.entries {
            *e = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        t
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entry(&self, src: BasisIndex, dst: BasisIndex) -> Complex64 {
        self.entries[src.flat() * self.dim + dst.flat()]
    }

    pub fn set(&mut self, src: BasisIndex, dst: BasisIndex, v: Complex64) {
        self.entries[src.flat() * self.dim + dst.flat()] = v;
    }

    /// Coefficients of `T(sum c_i e_i)`.
    pub fn apply(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim];
        for (src, &c) in coeffs.iter().enumerate() {
            if c == ZERO {
                continue;
            }
            let row = &self.entries[src * self.dim..(src + 1) * self.dim];
            for (o, r) in out.iter_mut().zip(row) {
                *o += c * r;
            }
        }
        out
    }

    /// `a S + b T`; both operators must share the truncation.
    pub fn combine(a: Complex64, s: &Self, b: Complex64, t: &Self) -> Result<Self> {
        if s.truncation != t.truncation {
            return Err(Error::BadParameter("operators have different truncations".into()));
        }
        Ok(Self {
            truncation: s.truncation,
            dim: s.dim,
            entries: s.entries.iter().zip(&t.entries).map(|(x, y)| a * x + b * y).collect(),
        })
    }

    fn check_level(&self, n: u32) -> Result<()> {
        if n > self.truncation {
            return Err(Error::TruncationTooSmall {
                level: n,
                truncation: self.truncation,
            });
        }
        Ok(())
    }
}

/// `beta^n(T) = 2^-n sum_j alpha^n_j(T e^n_j)`, reduced to the diagonal.
pub fn beta_level(t: &OperatorMatrix, n: u32) -> Result<Complex64> {
    t.check_level(n)?;
    let s: Complex64 = (0..1usize << n)
        .map(|j| {
            let b = BasisIndex::new(n, j);
            t.entry(b, b)
        })
        .sum();
    Ok(s * 2f64.powi(-(n as i32)))
}

/// `beta^n(T)` with each `T e^n_j` realized as coordinates and the level
/// form of `alpha^n_j` applied to it.
pub fn beta_level_via_coordinates(t: &OperatorMatrix, n: u32, data: &Construction) -> Result<Complex64> {
    t.check_level(n)?;
    let terms = (0..1usize << n)
        .into_par_iter()
        .map(|j| {
            let src = BasisIndex::new(n, j).flat();
            let row = &t.entries[src * t.dim..(src + 1) * t.dim];
            let image = realize(data, row, t.truncation)?;
            alpha(data, n, j, &image, AlphaForm::Level)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.into_iter().sum::<Complex64>() * 2f64.powi(-(n as i32)))
}

/// `T(Phi^n_g)(g)` for every `g` in `G_n`.
fn phi_diagonal_values(t: &OperatorMatrix, n: u32, data: &Construction) -> Result<Vec<Complex64>> {
    let family = PhiFamily::new(data, n)?;
    let table = data.table(n)?;
    let level = data.level(n)?;
    (0..family.order())
        .into_par_iter()
        .map(|g| {
            let v = family.phi(g)?;
            let image = t.apply(&v.coefficients(t.truncation)?);
            let gi = g as i64;
            let mut val = ZERO;
            for (i, (&s, e)) in level.enumeration.sigma.iter().zip(level.signs.weights()).enumerate() {
                val += image[BasisIndex::new(n, i).flat()] * e * table.value(s, gi);
            }
            for (i, &tau) in level.enumeration.tau.iter().enumerate() {
                val += image[BasisIndex::new(n + 1, i).flat()] * table.value(tau, gi);
            }
            Ok(val)
        })
        .collect()
}

/// `|beta^{n+1}(T) - beta^n(T) - (1/k_n) sum_g T(Phi^n_g)(g)|`.
pub fn telescope_check(t: &OperatorMatrix, n: u32, data: &Construction) -> Result<f64> {
    t.check_level(n + 1)?;
    let kn = crate::characters::group_order(n) as f64;
    let avg = phi_diagonal_values(t, n, data)?.into_iter().sum::<Complex64>() / kn;
    Ok((beta_level(t, n + 1)? - beta_level(t, n)? - avg).norm())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaLimit {
    pub truncation: u32,
    pub estimate: Complex64,
    /// Largest `||T x||_Z` over the stored elements of the compact set.
    pub sup_compact: f64,
    /// `sup_compact * sum_{n >= N} (n+1)^-2`.
    pub tail_bound: f64,
    /// `3 sup_compact`, the bound on `|beta(T)|`.
    pub beta_bound: f64,
}

/// Upper bound on `sum_{n >= start} (n+1)^-2`.
pub fn inverse_square_tail(start: u32) -> f64 {
    let first = u64::from(start) + 1;
    let last = first + 1_000_000;
    let partial: f64 = (first..last).rev().map(|k| 1.0 / (k as f64 * k as f64)).sum();
    partial + 1.0 / (last - 1) as f64
}

/// Norms `||T x||_Z` for `x` in `{e^0_0} U {(n+1)^2 Phi^n_g : 1 <= n < N}`,
/// returning the maximum.
pub fn compact_set_image_sup(t: &OperatorMatrix, data: &Construction, schedule: &PSchedule) -> Result<f64> {
    let n_top = t.truncation;
    let mut e0 = vec![ZERO; t.dim];
    e0[0] = Complex64::new(1.0, 0.0);
    let mut sup = realize(data, &t.apply(&e0), n_top)?.z_norm(schedule)?;
    for n in 1..n_top {
        let family = PhiFamily::new(data, n)?;
        let w = f64::from(n + 1).powi(2);
        let level_sup = (0..family.order())
            .into_par_iter()
            .map(|g| {
                let v = family.phi(g)?;
                let image = t.apply(&v.coefficients(n_top)?);
                Ok(w * realize(data, &image, n_top)?.z_norm(schedule)?)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        sup = sup.max(level_sup);
    }
    Ok(sup)
}

pub fn beta_limit(t: &OperatorMatrix, data: &Construction, schedule: &PSchedule) -> Result<BetaLimit> {
    let sup_compact = compact_set_image_sup(t, data, schedule)?;
    Ok(BetaLimit {
        truncation: t.truncation,
        estimate: beta_level(t, t.truncation)?,
        sup_compact,
        tail_bound: sup_compact * inverse_square_tail(t.truncation),
        beta_bound: 3.0 * sup_compact,
    })
}

/// One term `x -> phi(x) y` of a finite-rank operator, with `phi` a
/// combination of `alpha` functionals and `y` a combination of basis vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneTerm {
    pub functional: Vec<(BasisIndex, Complex64)>,
    pub vector: Vec<(BasisIndex, Complex64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteRankOperator {
    pub terms: Vec<RankOneTerm>,
}

impl FiniteRankOperator {
    /// A random operator of the given rank whose functionals and vectors
    /// live on levels `<= support`.
    pub fn random(rank: usize, support: u32, seed: u64) -> Self {
        let mut rng = stream_rng(seed, 0);
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| {
            let count = rng.gen_range(1..=4);
            (0..count)
                .map(|_| {
                    let level = rng.gen_range(0..=support);
                    let index = rng.gen_range(0..1usize << level);
                    let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                    (BasisIndex::new(level, index), c)
                })
                .collect::<Vec<_>>()
        };
        let terms = (0..rank)
            .map(|_| RankOneTerm {
                functional: pick(&mut rng),
                vector: pick(&mut rng),
            })
            .collect();
        Self { terms }
    }

    pub fn rank(&self) -> usize {
        self.terms.len()
    }

    pub fn support_level(&self) -> u32 {
        self.terms
            .iter()
            .flat_map(|t| t.functional.iter().chain(&t.vector))
            .map(|(b, _)| b.level)
            .max()
            .unwrap_or(0)
    }

    /// Matrix of the operator: every `phi(e_src)` is evaluated on the
    /// coordinates of `e_src`, and every `y` is realized as coordinates and
    /// read back through the functionals.
    pub fn to_matrix(&self, data: &Construction, truncation: u32) -> Result<OperatorMatrix> {
        let mut t = OperatorMatrix::zeros(truncation);
        let mut vectors = Vec::with_capacity(self.terms.len());
        for term in &self.terms {
            let mut c = vec![ZERO; t.dim];
            for &(b, v) in &term.vector {
                if b.level > truncation {
                    return Err(Error::TruncationTooSmall {
                        level: b.level,
                        truncation,
                    });
                }
                c[b.flat()] += v;
            }
            let y = realize(data, &c, truncation)?;
            vectors.push(coefficients_of(data, &y, truncation)?);
        }
        let rows = (0..t.dim)
            .into_par_iter()
            .map(|src| {
                let b = BasisIndex::from_flat(src);
                let e = basis_vector(data, b.level, b.index)?;
                let mut row = vec![ZERO; t.dim];
                for (term, y) in self.terms.iter().zip(&vectors) {
                    let mut value = ZERO;
                    for &(f, a) in &term.functional {
                        value += a * alpha(data, f.level, f.index, &e, AlphaForm::Level)?;
                    }
                    for (r, yc) in row.iter_mut().zip(y) {
                        *r += value * yc;
                    }
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        for (src, row) in rows.into_iter().enumerate() {
            t.entries[src * t.dim..(src + 1) * t.dim].copy_from_slice(&row);
        }
        Ok(t)
    }
}

/// Largest `|alpha^n_j(e^m_i) - delta|` over `n, m <= top`, both forms.
pub fn biorthogonality_deviation(data: &Construction, top: u32) -> Result<f64> {
    let jobs: Vec<BasisIndex> = (0..basis_dim(top)).map(BasisIndex::from_flat).collect();
    let worst = jobs
        .par_iter()
        .map(|&b| {
            let e = basis_vector(data, b.level, b.index)?;
            let mut worst = 0.0f64;
            for n in 0..=top {
                let forms: &[AlphaForm] = if n == 0 {
                    &[AlphaForm::Level]
                } else {
                    &[AlphaForm::Level, AlphaForm::Previous]
                };
                for &form in forms {
                    for (j, v) in alpha_all(data, n, &e, form)?.into_iter().enumerate() {
                        let target = if (n, j) == (b.level, b.index) { 1.0 } else { 0.0 };
                        worst = worst.max((v - target).norm());
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

fn form_gap(data: &Construction, f: &MixedNormVector, levels: impl Iterator<Item = u32>) -> Result<f64> {
    let mut worst = 0.0f64;
    for m in levels {
        let a = alpha_all(data, m, f, AlphaForm::Level)?;
        let b = alpha_all(data, m, f, AlphaForm::Previous)?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).norm());
        }
    }
    Ok(worst)
}

/// Largest disagreement of the two forms of `alpha^m_j`, `1 <= m <= top`,
/// on every basis vector of levels `<= top`.
pub fn form_agreement_on_basis(data: &Construction, top: u32) -> Result<f64> {
    let worst = (0..basis_dim(top))
        .into_par_iter()
        .map(|i| {
            let b = BasisIndex::from_flat(i);
            let e = basis_vector(data, b.level, b.index)?;
            form_gap(data, &e, 1..=top)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// Largest disagreement of the two forms on `Phi^n_g`, all `g`, for the
/// functionals whose data is present.
pub fn form_agreement_on_phi(data: &Construction, n: u32) -> Result<f64> {
    let family = PhiFamily::new(data, n)?;
    let top = data.top_level().unwrap_or(0);
    let lo = n.saturating_sub(1).max(1);
    let hi = (n + 2).min(top);
    let worst = (0..family.order())
        .into_par_iter()
        .map(|g| form_gap(data, &family.phi(g)?.coords, lo..=hi))
        .collect::<Result<Vec<f64>>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApConfig {
    pub truncation: u32,
    pub finite_rank_count: usize,
    pub max_rank: usize,
    /// Functionals and vectors of the finite-rank operators live on levels `<= support_level`.
    pub support_level: u32,
    pub random_operators: usize,
    pub seed: u64,
    /// Constant used in the norm bound of the compact-set table.
    pub a_cross: f64,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            truncation: 6,
            finite_rank_count: 8,
            max_rank: 5,
            support_level: 2,
            random_operators: 8,
            seed: 0,
            a_cross: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRow {
    pub level: u32,
    pub reduced: Complex64,
    pub via_coordinates: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopeRow {
    pub level: u32,
    pub identity_residual: f64,
    /// Largest residual over the random operators.
    pub random_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteRankRow {
    pub id: usize,
    pub rank: usize,
    pub support_level: u32,
    pub betas: Vec<Complex64>,
    /// `max |beta^n(T)|` over `support_level < n <= truncation`.
    pub max_beyond_support: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactRow {
    pub level: u32,
    /// `max_g (n+1)^2 ||Phi^n_g||_Z`.
    pub weighted_norm: f64,
    /// `(n+1)^2` times the norm bound on `Phi^n_g`.
    pub weighted_bound: f64,
    /// `(n+1)^(5/2) 2^(-n delta_{n+1})`.
    pub compactness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstructionReport {
    pub config: ApConfig,
    pub identity_beta: Vec<BetaRow>,
    pub telescoping: Vec<TelescopeRow>,
    pub finite_rank: Vec<FiniteRankRow>,
    pub identity_limit: BetaLimit,
    pub compact_table: Vec<CompactRow>,
}

/// Runs the obstruction experiment on levels `0..=config.truncation`; the
/// data must reach `truncation + 1`.
pub fn ap_experiment(config: &ApConfig, data: &Construction, schedule: &PSchedule) -> Result<ObstructionReport> {
    let n_top = config.truncation;
    if !data.has_level(n_top + 1) {
        return Err(Error::MissingLevelData(n_top + 1));
    }
    if config.support_level >= n_top {
        return Err(Error::BadParameter(format!(
            "support level {} must lie below the truncation {n_top}",
            config.support_level
        )));
    }
    if config.max_rank == 0 {
        return Err(Error::BadParameter("max rank must be >= 1".into()));
    }
    let id = OperatorMatrix::identity(n_top);
    let identity_beta = (0..=n_top)
        .map(|n| {
            Ok(BetaRow {
                level: n,
                reduced: beta_level(&id, n)?,
                via_coordinates: beta_level_via_coordinates(&id, n, data)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let randoms: Vec<OperatorMatrix> = (0..config.random_operators)
        .map(|i| OperatorMatrix::random(n_top, crate::seeding::derive_seed(config.seed, "operator", i as u64)))
        .collect();
    let telescoping = (0..n_top)
        .map(|n| {
            let mut random_residual = 0.0f64;
            for t in &randoms {
                random_residual = random_residual.max(telescope_check(t, n, data)?);
            }
            Ok(TelescopeRow {
                level: n,
                identity_residual: telescope_check(&id, n, data)?,
                random_residual,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let finite_rank = (0..config.finite_rank_count)
        .map(|i| {
            let seed = crate::seeding::derive_seed(config.seed, "finite-rank", i as u64);
            let rank = 1 + i % config.max_rank;
            let op = FiniteRankOperator::random(rank, config.support_level, seed);
            let t = op.to_matrix(data, n_top)?;
            let betas = (0..=n_top).map(|n| beta_level(&t, n)).collect::<Result<Vec<_>>>()?;
            let support_level = op.support_level();
            let max_beyond_support = betas
                .iter()
                .skip(support_level as usize + 1)
                .map(|b| b.norm())
                .fold(0.0, f64::max);
            Ok(FiniteRankRow {
                id: i,
                rank,
                support_level,
                betas,
                max_beyond_support,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let identity_limit = beta_limit(&id, data, schedule)?;
    let compact_table = (1..=n_top)
        .map(|n| {
            let family = PhiFamily::new(data, n)?;
            let w = f64::from(n + 1).powi(2);
            let norms = (0..family.order())
                .into_par_iter()
                .map(|g| family.phi(g)?.coords.z_norm(schedule))
                .collect::<Result<Vec<f64>>>()?;
            Ok(CompactRow {
                level: n,
                weighted_norm: w * norms.into_iter().fold(0.0, f64::max),
                weighted_bound: w * phi_norm_bound(n, schedule, config.a_cross)?,
                compactness: schedule.compactness_sequence(u64::from(n))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ObstructionReport {
        config: config.clone(),
        identity_beta,
        telescoping,
        finite_rank,
        identity_limit,
        compact_table,
    })
}

impl ObstructionReport {
    /// Reruns the experiment and reports whether every value is reproduced.
    pub fn recheck(&self, data: &Construction, schedule: &PSchedule) -> Result<bool> {
        Ok(ap_experiment(&self.config, data, schedule)? == *self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{build_construction, SearchPlan};
    use approx::assert_abs_diff_eq;

    fn data(top: u32) -> Construction {
        build_construction(top, &SearchPlan::default()).unwrap()
    }

    #[test]
    fn flat_index_roundtrip() {
        for i in 0..200 {
            assert_eq!(BasisIndex::from_flat(i).flat(), i);
        }
        assert_eq!(BasisIndex::from_flat(0), BasisIndex::new(0, 0));
        assert_eq!(BasisIndex::from_flat(3), BasisIndex::new(2, 0));
        assert_eq!(basis_dim(3), 15);
    }

    #[test]
    fn basis_vector_support_and_values() {
        let d = data(2);
        let e00 = basis_vector(&d, 0, 0).unwrap();
        assert_eq!(e00.levels().collect::<Vec<_>>(), vec![0]);
        let eps = f64::from(d.signs(0).unwrap().signs[0]);
        let s = d.enumeration(0).unwrap().sigma[0];
        for g in 0..3 {
            let want = eps * d.table(0).unwrap().character_value(s, g).unwrap();
            assert!((e00.get(0, g) - want).norm() < 1e-15);
        }
        let e10 = basis_vector(&d, 1, 0).unwrap();
        let tau = d.enumeration(0).unwrap().tau[0];
        for g in 0..3 {
            let want = d.table(0).unwrap().character_value(tau, g).unwrap();
            assert!((e10.get(0, g) - want).norm() < 1e-15);
        }
        for (_, block) in e10.blocks() {
            assert!(block.iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        }
        assert!(matches!(basis_vector(&d, 1, 2), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(basis_vector(&d, 3, 0), Err(Error::MissingLevelData(3))));
    }

    #[test]
    fn alpha_examples() {
        let d = data(3);
        let e10 = basis_vector(&d, 1, 0).unwrap();
        let e00 = basis_vector(&d, 0, 0).unwrap();
        for form in [AlphaForm::Level, AlphaForm::Previous] {
            assert_abs_diff_eq!(alpha(&d, 1, 0, &e10, form).unwrap().re, 1.0, epsilon = 1e-12);
            assert!(alpha(&d, 1, 0, &e00, form).unwrap().norm() < 1e-12);
        }
        assert_eq!(
            alpha(&d, 0, 0, &e00, AlphaForm::Previous),
            Err(Error::FormUnavailable { level: 0 })
        );
        let fam = PhiFamily::new(&d, 1).unwrap();
        for g in 0..6 {
            let p = fam.phi(g).unwrap();
            for j in 0..2 {
                let a = alpha(&d, 1, j, &p.coords, AlphaForm::Level).unwrap();
                let b = alpha(&d, 1, j, &p.coords, AlphaForm::Previous).unwrap();
                assert!((a - b).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn alpha_all_matches_single_functionals() {
        let d = data(4);
        let p = phi(&d, 2, 5).unwrap();
        for n in 1..=3 {
            for form in [AlphaForm::Level, AlphaForm::Previous] {
                let all = alpha_all(&d, n, &p.coords, form).unwrap();
                for (j, v) in all.iter().enumerate() {
                    let single = alpha(&d, n, j, &p.coords, form).unwrap();
                    assert!((v - single).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn phi_coordinates_match_basis_expansion() {
        let d = data(4);
        for n in 0..=3 {
            let fam = PhiFamily::new(&d, n).unwrap();
            for g in 0..fam.order() {
                let p = fam.phi(g).unwrap();
                let gap = max_coordinate_gap(&p.coords, &p.expand(&d).unwrap());
                assert!(gap < 1e-12, "level {n}, g {g}: {gap}");
            }
        }
    }

    #[test]
    fn phi_middle_values_and_support() {
        let d = data(3);
        let n = 2;
        let e = d.enumeration(n).unwrap();
        let t = d.table(n).unwrap();
        let p = phi(&d, n, 7).unwrap();
        for h in 0..12i64 {
            let u = h - 7;
            let s: Complex64 = e.sigma.iter().map(|&c| t.value(c, u)).sum();
            let tt: Complex64 = e.tau.iter().map(|&c| t.value(c, u)).sum();
            let want = -(2.0 * s - tt) / 8.0;
            assert!((p.coords.get(n, h as u64) - want).norm() < 1e-12);
        }
        assert_eq!(p.coords.get(0, 0), ZERO);
        assert!(p.coords.block(0).is_none());
        assert_eq!(p.current[0], -0.25 * f64::from(d.signs(2).unwrap().signs[0]) * t.value(e.sigma[0], -7));
        assert!(phi(&d, 3, 0).is_err());
    }

    #[test]
    fn realize_and_read_back() {
        let d = data(3);
        let c: Vec<Complex64> = (0..basis_dim(3))
            .map(|i| Complex64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.05))
            .collect();
        let f = realize(&d, &c, 3).unwrap();
        let back = coefficients_of(&d, &f, 3).unwrap();
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut direct = MixedNormVector::new();
        for (i, &x) in c.iter().enumerate() {
            let b = BasisIndex::from_flat(i);
            direct = direct.axpy(x, &basis_vector(&d, b.level, b.index).unwrap());
        }
        assert!(max_coordinate_gap(&f, &direct) < 1e-12);
    }

    #[test]
    fn beta_of_identity_and_rank_one() {
        let d = data(4);
        let id = OperatorMatrix::identity(3);
        for n in 0..=3 {
            assert_abs_diff_eq!(beta_level(&id, n).unwrap().re, 1.0, epsilon = 1e-15);
            let c = beta_level_via_coordinates(&id, n, &d).unwrap();
            assert!((c - 1.0).norm() < 1e-10);
        }
        let mut r1 = OperatorMatrix::zeros(3);
        r1.set(BasisIndex::new(0, 0), BasisIndex::new(0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(beta_level(&r1, 0).unwrap(), Complex64::new(1.0, 0.0));
        for n in 1..=3 {
            assert_eq!(beta_level(&r1, n).unwrap(), ZERO);
        }
        let mut diag = OperatorMatrix::zeros(2);
        diag.set(BasisIndex::new(1, 0), BasisIndex::new(1, 0), Complex64::new(0.3, 0.0));
        diag.set(BasisIndex::new(1, 1), BasisIndex::new(1, 1), Complex64::new(0.9, 1.0));
        assert_eq!(beta_level(&diag, 1).unwrap(), Complex64::new(0.6, 0.5));
        assert!(matches!(beta_level(&id, 4), Err(Error::TruncationTooSmall { .. })));
    }

    #[test]
    fn beta_reduced_matches_coordinates_for_random_operator() {
        let d = data(4);
        let t = OperatorMatrix::random(3, 17);
        for n in 0..=3 {
            let a = beta_level(&t, n).unwrap();
            let b = beta_level_via_coordinates(&t, n, &d).unwrap();
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn telescoping_examples() {
        let d = data(4);
        let id = OperatorMatrix::identity(3);
        let zero = OperatorMatrix::zeros(3);
        for n in 0..3 {
            assert!(telescope_check(&id, n, &d).unwrap() < 1e-10);
            assert_eq!(telescope_check(&zero, n, &d).unwrap(), 0.0);
        }
        let t = OperatorMatrix::random(3, 5);
        for n in 0..3 {
            assert!(telescope_check(&t, n, &d).unwrap() < 1e-9);
        }
        assert!(telescope_check(&id, 3, &d).is_err());
    }

    #[test]
    fn beta_is_linear() {
        let s = OperatorMatrix::random(3, 1);
        let t = OperatorMatrix::random(3, 2);
        let (a, b) = (Complex64::new(0.5, -1.5), Complex64::new(-2.0, 0.25));
        let c = OperatorMatrix::combine(a, &s, b, &t).unwrap();
        for n in 0..=3 {
            let lhs = beta_level(&c, n).unwrap();
            let rhs = a * beta_level(&s, n).unwrap() + b * beta_level(&t, n).unwrap();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn finite_rank_beta_vanishes_above_support() {
        let d = data(5);
        for seed in 0..4 {
            let f = FiniteRankOperator::random(3, 2, seed);
            let t = f.to_matrix(&d, 4).unwrap();
            for n in 3..=4 {
                assert!(beta_level(&t, n).unwrap().norm() < 1e-12);
            }
        }
        let mut r1 = FiniteRankOperator { terms: vec![] };
        r1.terms.push(RankOneTerm {
            functional: vec![(BasisIndex::new(0, 0), Complex64::new(1.0, 0.0))],
            vector: vec![(BasisIndex::new(0, 0), Complex64::new(1.0, 0.0))],
        });
        let t = r1.to_matrix(&d, 3).unwrap();
        assert!((beta_level(&t, 0).unwrap() - 1.0).norm() < 1e-12);
        for n in 1..=3 {
            assert!(beta_level(&t, n).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn biorthogonality_and_forms() {
        let d = data(4);
        assert!(biorthogonality_deviation(&d, 4).unwrap() < 1e-9);
        assert!(form_agreement_on_basis(&d, 4).unwrap() < 1e-9);
        for n in 0..=3 {
            assert!(form_agreement_on_phi(&d, n).unwrap() < 1e-9);
        }
    }

    #[test]
    fn phi_norm_two_ways_and_chain() {
        let d = data(5);
        let s = PSchedule::power(0.5).unwrap();
        let a = crate::signs::certify_constants(0..=4, &d).unwrap().a_cross;
        for n in 1..=4 {
            for g in [0, 1, 5] {
                let r = check_phi_norm(n, g, &d, &s, a).unwrap();
                assert_abs_diff_eq!(r.norm * r.norm, r.three_block_sq, epsilon = 1e-10);
                assert!(r.three_block_sq <= r.chain[0] * (1.0 + 1e-12));
                assert!(r.chain[0] <= r.chain[1] * (1.0 + 1e-12));
                assert!(r.chain[1] <= r.chain[2] * (1.0 + 1e-12));
                assert!(r.pass);
            }
        }
        let zero = PhiVector {
            level: 1,
            g: 0,
            current: vec![],
            upper: vec![],
            coords: MixedNormVector::new(),
        };
        let r = check_phi_norm_of(&zero, &s, 1.0).unwrap();
        assert_eq!(r.norm, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn phi_sup_verdicts() {
        let d = data(4);
        let r = check_phi_sup(2, &d, 6.0).unwrap();
        assert!(r.pass);
        assert_abs_diff_eq!(r.sup.middle, d.enumeration(2).unwrap().defect / 8.0, epsilon = 1e-9);
        let tight = check_phi_sup(2, &d, r.ratio * 0.99).unwrap();
        assert!(!tight.pass);
    }

    #[test]
    fn beta_limit_examples() {
        let d = data(4);
        let s = PSchedule::Log;
        let id = beta_limit(&OperatorMatrix::identity(3), &d, &s).unwrap();
        assert_abs_diff_eq!(id.estimate.re, 1.0, epsilon = 1e-15);
        assert!(id.sup_compact >= 1.0);
        assert!(id.tail_bound > 0.0 && id.tail_bound < id.sup_compact);
        let mut r1 = OperatorMatrix::zeros(3);
        r1.set(BasisIndex::new(0, 0), BasisIndex::new(0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(beta_limit(&r1, &d, &s).unwrap().estimate, ZERO);
    }

    #[test]
    fn experiment_report() {
        let d = data(4);
        let cfg = ApConfig {
            truncation: 3,
            finite_rank_count: 3,
            support_level: 1,
            random_operators: 2,
            ..ApConfig::default()
        };
        let s = PSchedule::power(0.5).unwrap();
        let r = ap_experiment(&cfg, &d, &s).unwrap();
        assert_eq!(r.identity_beta.len(), 4);
        assert!(r.identity_beta.iter().all(|b| (b.via_coordinates - 1.0).norm() < 1e-10));
        assert!(r.telescoping.iter().all(|t| t.identity_residual < 1e-10 && t.random_residual < 1e-9));
        assert!(r.finite_rank.iter().all(|f| f.max_beyond_support < 1e-12));
        assert!(r.compact_table.iter().all(|c| c.weighted_norm <= c.weighted_bound));
        assert!(r.recheck(&d, &s).unwrap());
        assert!(ap_experiment(&ApConfig { truncation: 4, ..cfg.clone() }, &d, &s).is_err());
        assert!(ap_experiment(&ApConfig { support_level: 3, ..cfg }, &d, &s).is_err());
    }

    #[test]
    fn inverse_square_tail_bounds() {
        let exact_from_1 = std::f64::consts::PI.powi(2) / 6.0 - 1.0;
        let t = inverse_square_tail(1);
        assert!(t >= exact_from_1);
        assert!(t - exact_from_1 < 1e-6);
    }
}
