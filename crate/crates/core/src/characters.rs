//! Cyclic groups of order `3 * 2^n` and their character tables.
//!
//! Characters are handled through exponent indices: `chi_c(g) = w^(c*g mod k)`
//! with `w = exp(2 pi i / k)`. Group-law identities therefore hold exactly on
//! the integer side; floating point only enters when roots of unity are summed.

use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest level accepted by [`build_group`].
pub const DEFAULT_MAX_LEVEL: u32 = 24;

/// The cyclic group `Z/k` with `k = 3 * 2^level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Group {
    level: u32,
    order: u64,
}

/// Order `3 * 2^n` of the level-`n` group.
pub fn group_order(level: u32) -> u64 {
    3u64 << level
}

/// Builds the level-`n` group under the default level budget.
pub fn build_group(level: i64) -> Result<Group> {
    build_group_with_budget(level, DEFAULT_MAX_LEVEL)
}

pub fn build_group_with_budget(level: i64, max_level: u32) -> Result<Group> {
    if level < 0 {
        return Err(Error::NegativeLevel(level));
    }
    if level > i64::from(max_level) || level > 60 {
        return Err(Error::LevelTooLarge {
            level,
            max: max_level,
        });
    }
    let level = level as u32;
    Ok(Group {
        level,
        order: group_order(level),
    })
}

impl Group {
    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn elements(&self) -> std::ops::Range<u64> {
        0..self.order
    }

    pub fn add(&self, g: u64, h: u64) -> u64 {
        (g + h) % self.order
    }

    pub fn neg(&self, g: u64) -> u64 {
        (self.order - g % self.order) % self.order
    }
}

/// Table of the `k`-th roots of unity, indexed by exponent.
#[derive(Debug, Clone)]
pub struct UnitRoots {
    roots: Arc<[Complex64]>,
}

impl UnitRoots {
    pub fn new(order: u64) -> Self {
        let k = order as f64;
        let roots = (0..order)
            .map(|e| Complex64::from_polar(1.0, TAU * e as f64 / k))
            .collect::<Vec<_>>();
        Self {
            roots: roots.into(),
        }
    }

    pub fn order(&self) -> u64 {
        self.roots.len() as u64
    }

    /// `exp(2 pi i e / k)` for any integer exponent `e`.
    #[inline]
    pub fn at(&self, exponent: i64) -> Complex64 {
        let k = self.roots.len() as i64;
        self.roots[exponent.rem_euclid(k) as usize]
    }
}

/// Full character table of a level-`n` group.
///
/// Character `c` evaluated at `g` has exponent `c * g mod k`.
#[derive(Debug, Clone)]
pub struct CharacterTable {
    group: Group,
    roots: UnitRoots,
}

impl CharacterTable {
    pub fn new(group: Group) -> Self {
        Self {
            group,
            roots: UnitRoots::new(group.order()),
        }
    }

    pub fn for_level(level: u32) -> Result<Self> {
        Ok(Self::new(build_group(i64::from(level))?))
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn level(&self) -> u32 {
        self.group.level
    }

    pub fn order(&self) -> u64 {
        self.group.order
    }

    pub fn roots(&self) -> &UnitRoots {
        &self.roots
    }

    fn check(&self, what: &'static str, index: u64) -> Result<()> {
        if index >= self.order() {
            return Err(Error::IndexOutOfRange {
                what,
                index,
                size: self.order(),
            });
        }
        Ok(())
    }

    /// Exact exponent index `c * g mod k`.
    pub fn exponent(&self, c: u64, g: u64) -> Result<u64> {
        self.check("character", c)?;
        self.check("group element", g)?;
        Ok(self.exponent_unchecked(c, g))
    }

    #[inline]
    pub(crate) fn exponent_unchecked(&self, c: u64, g: u64) -> u64 {
        (c * g) % self.order()
    }

    pub fn character_value(&self, c: u64, g: u64) -> Result<Complex64> {
        let e = self.exponent(c, g)?;
        Ok(self.roots.at(e as i64))
    }

    /// `chi_c(g)` without bounds checks on `c` and `g`; any integers are
    /// reduced modulo the group order.
    #[inline]
    pub fn value(&self, c: u64, g: i64) -> Complex64 {
        let k = self.order() as i64;
        let e = ((c as i64 % k) * g.rem_euclid(k)) % k;
        self.roots.at(e)
    }

    /// Exponent matrix `e[c][g]`, the serialized form of the table.
    pub fn exponent_matrix(&self) -> Vec<Vec<u64>> {
        (0..self.order())
            .map(|c| {
                (0..self.order())
                    .map(|g| self.exponent_unchecked(c, g))
                    .collect()
            })
            .collect()
    }
}

/// Outcome of an orthogonality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub max_deviation: f64,
    pub pass: bool,
}

/// Checks `sum_g chi_c(g) conj(chi_d(g)) = k delta_cd` over all pairs `(c, d)`.
pub fn verify_orthogonality(table: &CharacterTable, tol: f64) -> OrthogonalityReport {
    let k = table.order();
    verify_orthogonality_of(k, |c, g| table.roots.at(table.exponent_unchecked(c, g) as i64), tol)
}

/// Orthogonality check over an arbitrary `k x k` value function, used for
/// tables whose entries did not come from exponent arithmetic.
pub fn verify_orthogonality_of<F>(order: u64, value: F, tol: f64) -> OrthogonalityReport
where
    F: Fn(u64, u64) -> Complex64 + Sync,
{
    let k = order as usize;
    let rows: Vec<Vec<Complex64>> = (0..order)
        .into_par_iter()
        .map(|c| (0..order).map(|g| value(c, g)).collect())
        .collect();
    let max_deviation = (0..k)
        .into_par_iter()
        .map(|c| {
            let mut worst = 0.0f64;
            for d in 0..k {
                let mut s = Complex64::new(0.0, 0.0);
                for g in 0..k {
                    s += rows[c][g] * rows[d][g].conj();
                }
                if c == d {
                    s -= order as f64;
                }
                worst = worst.max(s.norm());
            }
            worst
        })
        .reduce(|| 0.0, f64::max);
    OrthogonalityReport {
        max_deviation,
        pass: max_deviation <= tol,
    }
}
