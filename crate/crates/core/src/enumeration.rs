//! Splitting the characters of `G_n` into a sigma-list of size `2^n` and a
//! tau-list of size `2^(n+1)` with a small defect
//! `max_g |2 sum sigma_j(g) - sum tau_j(g)|`.
//!
//! Since all `k` characters sum to `k` at the identity and to zero elsewhere,
//! `2 sum sigma - sum tau = 3 sum sigma - k [g = 0]`. The searches score
//! candidates with that collapsed form; the stored defect is always recomputed
//! from the two explicit lists.

use std::fmt;

use itertools::Itertools;
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characters::CharacterTable;
use crate::error::{Error, Result};
use crate::seeding::stream_rng;

/// Largest level at which exhaustive enumeration search is accepted.
pub const EXHAUSTIVE_ENUMERATION_MAX_LEVEL: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnumerationStrategy {
    Exhaustive,
    RandomRestart,
    GreedySwap,
}

impl fmt::Display for EnumerationStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exhaustive => "exhaustive",
            Self::RandomRestart => "random-restart",
            Self::GreedySwap => "greedy-swap",
        })
    }
}

/// A partition of the character indices of `G_n` into sigma and tau lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Enumeration {
    pub level: u32,
    pub sigma: Vec<u64>,
    pub tau: Vec<u64>,
    pub defect: f64,
}

impl Enumeration {
    /// Builds the enumeration whose tau-list is the ascending complement of
    /// `sigma`, and certifies its defect.
    pub fn from_sigma(table: &CharacterTable, sigma: Vec<u64>) -> Result<Self> {
        let k = table.order();
        let mut member = vec![false; k as usize];
        for &s in &sigma {
            if s < k {
                member[s as usize] = true;
            }
        }
        let tau = (0..k).filter(|&c| !member[c as usize]).collect();
        Self::from_lists(table, sigma, tau)
    }

    pub fn from_lists(table: &CharacterTable, sigma: Vec<u64>, tau: Vec<u64>) -> Result<Self> {
        let mut e = Self {
            level: table.level(),
            sigma,
            tau,
            defect: f64::NAN,
        };
        e.defect = enumeration_defect(&e, table)?;
        Ok(e)
    }

    pub fn validate(&self, table: &CharacterTable) -> Result<()> {
        let level = self.level;
        let invalid = |reason: String| Error::PartitionInvalid { level, reason };
        if table.level() != level {
            return Err(invalid(format!("table is for level {}", table.level())));
        }
        let half = 1usize << level;
        if self.sigma.len() != half {
            return Err(invalid(format!("sigma has {} entries, expected {half}", self.sigma.len())));
        }
        if self.tau.len() != 2 * half {
            return Err(invalid(format!("tau has {} entries, expected {}", self.tau.len(), 2 * half)));
        }
        let k = table.order();
        let mut seen = vec![false; k as usize];
        for &c in self.sigma.iter().chain(&self.tau) {
            if c >= k {
                return Err(invalid(format!("character index {c} out of range")));
            }
            if std::mem::replace(&mut seen[c as usize], true) {
                return Err(invalid(format!("character index {c} listed twice")));
            }
        }
        Ok(())
    }
}

/// `max_g |2 sum_j sigma_j(g) - sum_j tau_j(g)|`, evaluated from both lists.
pub fn enumeration_defect(e: &Enumeration, table: &CharacterTable) -> Result<f64> {
    e.validate(table)?;
    let k = table.order();
    let worst = (0..k)
        .into_par_iter()
        .map(|g| {
            let g = g as i64;
            let s: Complex64 = e.sigma.iter().map(|&c| table.value(c, g)).sum();
            let t: Complex64 = e.tau.iter().map(|&c| table.value(c, g)).sum();
            (2.0 * s - t).norm()
        })
        .reduce(|| 0.0, f64::max);
    Ok(worst)
}

/// Scores are compared after rounding to 1e-9 so that candidates equal up to
/// rounding noise fall through to the lexicographic tie-break.
pub(crate) fn quantize(score: f64) -> u64 {
    (score * 1e9).round() as u64
}

fn collapsed_score(table: &CharacterTable, sums: &[Complex64]) -> f64 {
    let k = table.order() as f64;
    sums.iter()
        .enumerate()
        .map(|(g, s)| {
            let v = 3.0 * s - if g == 0 { k } else { 0.0 };
            v.norm()
        })
        .fold(0.0, f64::max)
}

fn sigma_sums(table: &CharacterTable, sigma: &[u64]) -> Vec<Complex64> {
    (0..table.order() as i64)
        .map(|g| sigma.iter().map(|&c| table.value(c, g)).sum())
        .collect()
}

fn score_sigma(table: &CharacterTable, sigma: &[u64]) -> f64 {
    collapsed_score(table, &sigma_sums(table, sigma))
}

/// Finds an enumeration with small defect.
///
/// Deterministic in `(strategy, budget, seed)`. For `random-restart` the
/// budget is the number of random sigma-lists drawn; for `greedy-swap` it is
/// the number of proposed sigma/tau swaps. Exhaustive search ignores the
/// budget and is accepted for levels up to 4, though level 4 has
/// `C(48, 16)` candidates and is impractical.
pub fn search_enumeration(
    table: &CharacterTable,
    strategy: EnumerationStrategy,
    budget: u64,
    seed: u64,
) -> Result<Enumeration> {
    let level = table.level();
    if budget == 0 {
        return Err(Error::BadParameter("search budget must be at least 1".into()));
    }
    let k = table.order() as usize;
    let half = 1usize << level;
    let sigma = match strategy {
        EnumerationStrategy::Exhaustive => {
            if level > EXHAUSTIVE_ENUMERATION_MAX_LEVEL {
                return Err(Error::StrategyUnavailable {
                    strategy: strategy.to_string(),
                    level,
                });
            }
            (0..k as u64)
                .combinations(half)
                .par_bridge()
                .map(|s| (quantize(score_sigma(table, &s)), s))
                .min()
                .map(|(_, s)| s)
                .expect("at least one combination")
        }
        EnumerationStrategy::RandomRestart => (0..budget)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream_rng(seed, r);
                let mut s: Vec<u64> = sample(&mut rng, k, half)
                    .into_iter()
                    .map(|c| c as u64)
                    .collect();
                s.sort_unstable();
                (quantize(score_sigma(table, &s)), s)
            })
            .min()
            .map(|(_, s)| s)
            .expect("budget is at least one"),
        EnumerationStrategy::GreedySwap => greedy_swap(table, budget, seed),
    };
    Enumeration::from_sigma(table, sigma)
}

fn greedy_swap(table: &CharacterTable, budget: u64, seed: u64) -> Vec<u64> {
    let k = table.order() as usize;
    let half = 1usize << table.level();
    let mut rng = stream_rng(seed, 0);
    let mut in_sigma = vec![false; k];
    for c in sample(&mut rng, k, half) {
        in_sigma[c] = true;
    }
    let mut sigma: Vec<u64> = (0..k as u64).filter(|&c| in_sigma[c as usize]).collect();
    let mut tau: Vec<u64> = (0..k as u64).filter(|&c| !in_sigma[c as usize]).collect();
    let mut sums = sigma_sums(table, &sigma);
    let mut best = quantize(collapsed_score(table, &sums));
    let mut trial = vec![Complex64::new(0.0, 0.0); k];
    for _ in 0..budget {
        let i = rng.gen_range(0..sigma.len());
        let o = rng.gen_range(0..tau.len());
        let (out_c, in_c) = (sigma[i], tau[o]);
        for (g, t) in trial.iter_mut().enumerate() {
            let g = g as i64;
            *t = sums[g as usize] - table.value(out_c, g) + table.value(in_c, g);
        }
        let q = quantize(collapsed_score(table, &trial));
        if q < best {
            sigma[i] = in_c;
            tau[o] = out_c;
            sums = sigma_sums(table, &sigma);
            best = quantize(collapsed_score(table, &sums));
        }
    }
    sigma.sort_unstable();
    sigma
}
