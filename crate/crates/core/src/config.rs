//! Run configuration shared by every subcommand.

use serde::{Deserialize, Serialize};

use crate::characters::DEFAULT_MAX_LEVEL;
use crate::construction::SearchPlan;
use crate::error::{Error, Result};
use crate::moduli::DistanceBoundInputs;
use crate::space::PSchedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schedule: PSchedule,
    /// Levels `0..=max_level` are certified; data is searched one level higher.
    pub max_level: u32,
    pub seed: u64,
    /// Base budget for both enumeration and sign searches.
    pub budget: u64,
    /// Tolerance for exact identities.
    pub tol: f64,
    /// Acceptance threshold for the certified constants.
    pub constant_threshold: f64,
    pub c1: f64,
    pub c2: f64,
    /// Truncation level of the operator experiment.
    pub ap_truncation: u32,
    pub ap_support_level: u32,
    pub ap_finite_rank: usize,
    #[serde(with = "wide_list")]
    pub m_samples: Vec<u128>,
    pub split_depth: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schedule: PSchedule::Power { alpha: 0.5 },
            max_level: 6,
            seed: 0,
            budget: 64,
            tol: 1e-9,
            constant_threshold: 6.0,
            c1: 1.0,
            c2: 1.0,
            ap_truncation: 6,
            ap_support_level: 2,
            ap_finite_rank: 8,
            m_samples: vec![1 << 10, 1 << 20, 1 << 40, 1 << 64],
            split_depth: 2,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.max_level < 1 {
            return Err(Error::BadParameter("max level must be >= 1".into()));
        }
        if self.max_level + 1 > DEFAULT_MAX_LEVEL {
            return Err(Error::LevelTooLarge {
                level: i64::from(self.max_level) + 1,
                max: DEFAULT_MAX_LEVEL,
            });
        }
        if let PSchedule::Explicit { p } = &self.schedule {
            if p.len() < self.max_level as usize + 2 {
                return Err(Error::BadParameter(format!(
                    "explicit schedule needs {} exponents, got {}",
                    self.max_level + 2,
                    p.len()
                )));
            }
        }
        if self.budget < 1 {
            return Err(Error::BadParameter("budget must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::BadParameter("tolerance must be > 0".into()));
        }
        if !(self.constant_threshold > 0.0) {
            return Err(Error::BadParameter("constant threshold must be > 0".into()));
        }
        DistanceBoundInputs::new(self.c1, self.c2)?;
        if self.split_depth < 1 {
            return Err(Error::BadParameter("split depth must be >= 1".into()));
        }
        Ok(())
    }

    /// Checks the settings of the operator experiment.
    pub fn validate_ap(&self) -> Result<()> {
        if self.ap_support_level >= self.ap_truncation() {
            return Err(Error::BadParameter(format!(
                "support level {} must lie below the operator truncation {}",
                self.ap_support_level,
                self.ap_truncation()
            )));
        }
        if self.ap_finite_rank < 1 {
            return Err(Error::BadParameter("need at least one finite-rank operator".into()));
        }
        Ok(())
    }

    /// The operator truncation, capped by the certified levels.
    pub fn ap_truncation(&self) -> u32 {
        self.ap_truncation.min(self.max_level)
    }

    pub fn search_plan(&self) -> SearchPlan {
        SearchPlan {
            seed: self.seed,
            enumeration_budget: self.budget,
            sign_budget: self.budget,
            ..SearchPlan::default()
        }
    }

    pub fn distance_inputs(&self) -> Result<DistanceBoundInputs> {
        DistanceBoundInputs::new(self.c1, self.c2)
    }
}

mod wide_list {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u128], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|m| m.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u128>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

/// Parses a dimension written in decimal or as `2^k`.
pub fn parse_dimension(s: &str) -> Result<u128> {
    let s = s.trim();
    if let Some(k) = s.strip_prefix("2^") {
        let k: u32 = k
            .parse()
            .map_err(|_| Error::BadParameter(format!("bad exponent in {s:?}")))?;
        return 1u128
            .checked_shl(k)
            .filter(|_| k < 128)
            .ok_or_else(|| Error::BadParameter(format!("{s} does not fit in 128 bits")));
    }
    s.parse().map_err(|_| Error::BadParameter(format!("bad dimension {s:?}")))
}
