//! Per-level data of the construction: an enumeration of the characters of
//! each `G_n` together with the sign pattern of level `n`.

use serde::{Deserialize, Serialize};

use crate::characters::CharacterTable;
use crate::enumeration::{search_enumeration, Enumeration, EnumerationStrategy};
use crate::error::{Error, Result};
use crate::seeding::derive_seed;
use crate::signs::{search_signs, SignPattern, SignStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelData {
    pub enumeration: Enumeration,
    pub signs: SignPattern,
}

/// Levels `0..=top` of searched data with their character tables.
#[derive(Debug, Clone, Default)]
pub struct Construction {
    levels: Vec<LevelData>,
    tables: Vec<CharacterTable>,
}

impl Construction {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_levels(levels: Vec<LevelData>) -> Result<Self> {
        let mut c = Self::new();
        for l in levels {
            c.push(l)?;
        }
        Ok(c)
    }

    /// Appends the next level; levels must arrive in order starting at 0.
    pub fn push(&mut self, data: LevelData) -> Result<()> {
        let next = self.levels.len() as u32;
        if data.enumeration.level != next || data.signs.level != next {
            return Err(Error::BadParameter(format!(
                "expected data for level {next}, got enumeration level {} and sign level {}",
                data.enumeration.level, data.signs.level
            )));
        }
        let table = CharacterTable::for_level(next)?;
        data.enumeration.validate(&table)?;
        if data.signs.signs.len() != 1 << next {
            return Err(Error::BadParameter(format!(
                "level {next} needs {} signs, got {}",
                1u64 << next,
                data.signs.signs.len()
            )));
        }
        self.tables.push(table);
        self.levels.push(data);
        Ok(())
    }

    pub fn top_level(&self) -> Option<u32> {
        self.levels.len().checked_sub(1).map(|n| n as u32)
    }

    pub fn has_level(&self, n: u32) -> bool {
        (n as usize) < self.levels.len()
    }

    pub fn levels(&self) -> &[LevelData] {
        &self.levels
    }

    pub fn level(&self, n: u32) -> Result<&LevelData> {
        self.levels.get(n as usize).ok_or(Error::MissingLevelData(n))
    }

    pub fn table(&self, n: u32) -> Result<&CharacterTable> {
        self.tables.get(n as usize).ok_or(Error::MissingLevelData(n))
    }

    pub fn enumeration(&self, n: u32) -> Result<&Enumeration> {
        self.level(n).map(|l| &l.enumeration)
    }

    pub fn signs(&self, n: u32) -> Result<&SignPattern> {
        self.level(n).map(|l| &l.signs)
    }

    /// Replaces the sign pattern of an existing level.
    pub fn set_signs(&mut self, signs: SignPattern) -> Result<()> {
        let n = signs.level;
        let slot = self.levels.get_mut(n as usize).ok_or(Error::MissingLevelData(n))?;
        if signs.signs.len() != slot.signs.signs.len() {
            return Err(Error::BadParameter("sign pattern length mismatch".into()));
        }
        slot.signs = signs;
        Ok(())
    }
}

/// Which strategy and budget to use at each level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub seed: u64,
    pub enumeration: StrategyChoice<EnumerationStrategy>,
    pub enumeration_budget: u64,
    pub signs: StrategyChoice<SignStrategy>,
    pub sign_budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyChoice<S> {
    /// Exhaustive up to level 3, randomized above.
    Auto,
    Fixed(S),
}

impl Default for SearchPlan {
    fn default() -> Self {
        Self {
            seed: 0,
            enumeration: StrategyChoice::Auto,
            enumeration_budget: 64,
            signs: StrategyChoice::Auto,
            sign_budget: 64,
        }
    }
}

impl SearchPlan {
    pub fn enumeration_strategy(&self, level: u32) -> EnumerationStrategy {
        match self.enumeration {
            StrategyChoice::Fixed(s) => s,
            StrategyChoice::Auto if level <= 3 => EnumerationStrategy::Exhaustive,
            StrategyChoice::Auto => EnumerationStrategy::GreedySwap,
        }
    }

    pub fn sign_strategy(&self, level: u32) -> SignStrategy {
        match self.signs {
            StrategyChoice::Fixed(s) => s,
            StrategyChoice::Auto if level <= 3 => SignStrategy::Exhaustive,
            StrategyChoice::Auto => SignStrategy::RandomRestart,
        }
    }

    /// Budget handed to the enumeration search: random-restart draws
    /// `budget` candidates, greedy-swap proposes `budget * k_n` swaps.
    pub fn enumeration_budget_at(&self, level: u32) -> u64 {
        match self.enumeration_strategy(level) {
            EnumerationStrategy::GreedySwap => {
                self.enumeration_budget.saturating_mul(crate::characters::group_order(level))
            }
            _ => self.enumeration_budget,
        }
    }

    pub fn enumeration_seed(&self, level: u32) -> u64 {
        derive_seed(self.seed, "enumeration", u64::from(level))
    }

    pub fn sign_seed(&self, level: u32) -> u64 {
        derive_seed(self.seed, "signs", u64::from(level))
    }
}

/// Searches enumerations and signs level by level for `0..=top`.
pub fn build_construction(top: u32, plan: &SearchPlan) -> Result<Construction> {
    let mut c = Construction::new();
    for n in 0..=top {
        let table = CharacterTable::for_level(n)?;
        let enumeration = search_enumeration(
            &table,
            plan.enumeration_strategy(n),
            plan.enumeration_budget_at(n),
            plan.enumeration_seed(n),
        )?;
        let lower = if n == 0 { None } else { Some(c.enumeration(n - 1)?) };
        let signs = search_signs(
            n,
            lower,
            &enumeration,
            plan.sign_strategy(n),
            plan.sign_budget,
            plan.sign_seed(n),
        )?;
        c.push(LevelData { enumeration, signs })?;
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_small_construction() {
        let c = build_construction(3, &SearchPlan::default()).unwrap();
        assert_eq!(c.top_level(), Some(3));
        assert!(c.has_level(3));
        assert!(!c.has_level(4));
        assert!(matches!(c.level(4), Err(Error::MissingLevelData(4))));
        assert_eq!(c.signs(2).unwrap().signs.len(), 4);
    }

    #[test]
    fn push_rejects_out_of_order_levels() {
        let full = build_construction(1, &SearchPlan::default()).unwrap();
        let mut c = Construction::new();
        assert!(c.push(full.level(1).unwrap().clone()).is_err());
        c.push(full.level(0).unwrap().clone()).unwrap();
        c.push(full.level(1).unwrap().clone()).unwrap();
    }

    #[test]
    fn auto_plan_switches_above_level_three() {
        let p = SearchPlan::default();
        assert_eq!(p.enumeration_strategy(3), EnumerationStrategy::Exhaustive);
        assert_eq!(p.enumeration_strategy(4), EnumerationStrategy::GreedySwap);
        assert_eq!(p.sign_strategy(4), SignStrategy::RandomRestart);
        assert_eq!(p.enumeration_budget_at(4), 64 * 48);
    }
}
