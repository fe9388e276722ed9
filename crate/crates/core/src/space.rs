//! The mixed-norm space `Z`: an l2-sum of blocks `l_{p_n}^{k_n}` with
//! `k_n = 3 * 2^n`.
//!
//! A schedule is described by its gap `delta_n = 1/2 - 1/p_n`. Built-in
//! schedules clamp the gap at `1/6`, which keeps every `p_n` in `(2, 3]`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::characters::group_order;
use crate::error::{Error, Result};

/// Largest admissible gap; `p = 3`.
pub const MAX_GAP: f64 = 1.0 / 6.0;

/// Exponent schedule `(p_n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PSchedule {
    /// Gap `(n+1)^-alpha`, `0 < alpha < 1`.
    Power { alpha: f64 },
    /// Gap with `n * delta_{n+1} = 3 log2(n+1)`.
    Log,
    /// Explicit values `p_0, p_1, ...`.
    Explicit { p: Vec<f64> },
}

impl PSchedule {
    pub fn power(alpha: f64) -> Result<Self> {
        let s = Self::Power { alpha };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Power { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::BadParameter(format!(
                        "power-rate exponent alpha must lie in (0, 1), got {alpha}"
                    )));
                }
            }
            Self::Log => {}
            Self::Explicit { p } => {
                if p.is_empty() {
                    return Err(Error::BadParameter("explicit schedule is empty".into()));
                }
                for (n, &v) in p.iter().enumerate() {
                    if !(v > 2.0 && v <= 3.0) {
                        return Err(Error::BadParameter(format!("p_{n} = {v} is outside (2, 3]")));
                    }
                    if n > 0 && v > p[n - 1] {
                        return Err(Error::BadParameter(format!("p_{n} = {v} increases")));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match self {
            Self::Power { alpha } => format!("power(alpha={alpha})"),
            Self::Log => "log".into(),
            Self::Explicit { p } => format!("explicit({} levels)", p.len()),
        }
    }

    /// Unclamped gap from the closed form. For the log rate,
    /// `delta_0 = delta_1 = 1/6` and `delta_m = 3 log2(m) / (m - 1)` for
    /// `m >= 2`.
    pub fn raw_gap(&self, n: u64) -> Result<f64> {
        match self {
            Self::Power { alpha } => {
                self.validate()?;
                Ok((n as f64 + 1.0).powf(-alpha))
            }
            Self::Log => Ok(if n <= 1 {
                MAX_GAP
            } else {
                3.0 * (n as f64).log2() / (n as f64 - 1.0)
            }),
            Self::Explicit { p } => p
                .get(n as usize)
                .map(|&v| 0.5 - 1.0 / v)
                .ok_or_else(|| Error::BadParameter(format!("explicit schedule has no p_{n}"))),
        }
    }

    /// `delta_n = min(1/6, raw gap)`.
    pub fn gap(&self, n: u64) -> Result<f64> {
        Ok(self.raw_gap(n)?.min(MAX_GAP))
    }

    /// Whether the clamp is active at `n`.
    pub fn clamped(&self, n: u64) -> Result<bool> {
        Ok(self.raw_gap(n)? > MAX_GAP)
    }

    pub fn p_value(&self, n: u64) -> Result<f64> {
        if let Self::Explicit { p } = self {
            self.validate()?;
            return p.get(n as usize).copied().ok_or_else(|| {
                Error::BadParameter(format!("explicit schedule has no exponent for level {n}"))
            });
        }
        let d = self.gap(n)?;
        Ok(6.0 / (3.0 - 6.0 * d))
    }

    /// `k_n^(1/2 - 1/p_n)`.
    pub fn flatness_index(&self, n: u32) -> Result<f64> {
        Ok((3.0 * 2f64.powf(f64::from(n))).powf(self.gap(u64::from(n))?))
    }

    /// `(n+1)^(5/2) 2^(-n delta_{n+1})`.
    pub fn compactness_sequence(&self, n: u64) -> Result<f64> {
        Ok(compactness_from_gap(n, self.gap(n + 1)?))
    }

    /// The same sequence with the unclamped gap.
    pub fn raw_compactness_sequence(&self, n: u64) -> Result<f64> {
        Ok(compactness_from_gap(n, self.raw_gap(n + 1)?))
    }
}

fn compactness_from_gap(n: u64, gap_next: f64) -> f64 {
    let n = n as f64;
    (n + 1.0).powf(2.5) * 2f64.powf(-n * gap_next)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// `(sum |x|^p)^(1/p)`, scaled by the largest entry to avoid overflow.
pub fn lp_norm(block: &[Complex64], p: f64) -> f64 {
    let top = block.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if top == 0.0 {
        return 0.0;
    }
    let s: CompensatedSum = block.iter().map(|z| (z.norm() / top).powf(p)).collect();
    top * s.value().powf(1.0 / p)
}

/// A finitely supported function on the disjoint union of the `G_n`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MixedNormVector {
    blocks: BTreeMap<u32, Vec<Complex64>>,
}

impl MixedNormVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_block(mut self, level: u32, coords: Vec<Complex64>) -> Result<Self> {
        self.set_block(level, coords)?;
        Ok(self)
    }

    pub fn set_block(&mut self, level: u32, coords: Vec<Complex64>) -> Result<()> {
        let expected = group_order(level) as usize;
        if coords.len() != expected {
            return Err(Error::BlockLength {
                level,
                got: coords.len(),
                expected,
            });
        }
        self.blocks.insert(level, coords);
        Ok(())
    }

    /// A single unit coordinate.
    pub fn unit(level: u32, g: u64) -> Result<Self> {
        let k = group_order(level);
        if g >= k {
            return Err(Error::IndexOutOfRange {
                what: "group element",
                index: g,
                size: k,
            });
        }
        let mut coords = vec![Complex64::new(0.0, 0.0); k as usize];
        coords[g as usize] = Complex64::new(1.0, 0.0);
        Self::new().with_block(level, coords)
    }

    pub fn block(&self, level: u32) -> Option<&[Complex64]> {
        self.blocks.get(&level).map(Vec::as_slice)
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.blocks.keys().copied()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (u32, &[Complex64])> {
        self.blocks.iter().map(|(&l, v)| (l, v.as_slice()))
    }

    /// Coordinate at `g` in `G_level`; zero outside the support.
    pub fn get(&self, level: u32, g: u64) -> Complex64 {
        self.blocks
            .get(&level)
            .and_then(|b| b.get(g as usize).copied())
            .unwrap_or_default()
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(Complex64::new(1.0, 0.0), other)
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|(&l, v)| (l, v.iter().map(|z| a * z).collect()))
                .collect(),
        }
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: Complex64, other: &Self) -> Self {
        let mut out = self.clone();
        for (&l, v) in &other.blocks {
            let dst = out
                .blocks
                .entry(l)
                .or_insert_with(|| vec![Complex64::new(0.0, 0.0); v.len()]);
            for (d, s) in dst.iter_mut().zip(v) {
                *d += a * s;
            }
        }
        out
    }

    /// `l_{p_n}` norm of each present block.
    pub fn block_norms(&self, schedule: &PSchedule) -> Result<Vec<(u32, f64)>> {
        self.blocks
            .iter()
            .map(|(&l, v)| Ok((l, lp_norm(v, schedule.p_value(u64::from(l))?))))
            .collect()
    }

    /// `(sum_n (sum_g |f(g)|^{p_n})^{2/p_n})^{1/2}`.
    pub fn z_norm(&self, schedule: &PSchedule) -> Result<f64> {
        let norms = self.block_norms(schedule)?;
        let s: CompensatedSum = norms.iter().map(|(_, b)| b * b).collect();
        Ok(s.value().sqrt())
    }
}
