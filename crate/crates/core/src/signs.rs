//! Sign patterns and the cross blocks of `Phi^n_g`.
//!
//! With `e^n_j` carrying `tau^{n-1}_j` on `G_{n-1}` and `eps^n_j sigma^n_j` on
//! `G_n`, the values of `Phi^n_g` split into three kernels:
//!
//! * lower, `h` in `G_{n-1}`: `-2^-n sum_j eps^n_j sigma^n_j(-g) tau^{n-1}_j(h)`
//! * middle, `h` in `G_n`: `-2^{-n-1} (2 sum sigma^n_j(h-g) - sum tau^n_j(h-g))`
//! * upper, `h` in `G_{n+1}`: `2^{-n-1} sum_j tau^n_j(-g) eps^{n+1}_j sigma^{n+1}_j(h)`
//!
//! The sign pattern of level `n` fixes the lower kernel of level `n` and the
//! upper kernel of level `n - 1`; both enter the sign objective.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characters::UnitRoots;
use crate::construction::Construction;
use crate::enumeration::{quantize, Enumeration};
use crate::error::{Error, Result};
use crate::fourier::SparseKernel;
use crate::seeding::stream_rng;

pub const EXHAUSTIVE_SIGN_MAX_LEVEL: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignStrategy {
    Exhaustive,
    RandomRestart,
}

impl std::fmt::Display for SignStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Exhaustive => "exhaustive",
            Self::RandomRestart => "random-restart",
        })
    }
}

/// Signs `eps^n_j` in `{+1, -1}` together with the objective they achieved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignPattern {
    pub level: u32,
    pub signs: Vec<i8>,
    pub objective: f64,
}

impl SignPattern {
    pub fn new(level: u32, signs: Vec<i8>) -> Result<Self> {
        if signs.len() != 1 << level {
            return Err(Error::BadParameter(format!(
                "level {level} needs {} signs, got {}",
                1u64 << level,
                signs.len()
            )));
        }
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::BadParameter(format!("sign {bad} is not +1 or -1")));
        }
        Ok(Self {
            level,
            signs,
            objective: f64::NAN,
        })
    }

    pub fn all_plus(level: u32) -> Self {
        Self {
            level,
            signs: vec![1; 1 << level],
            objective: f64::NAN,
        }
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.signs.iter().map(|&s| f64::from(s))
    }

    /// Lexicographic key with `+1` ordered before `-1`.
    fn lex_key(&self) -> Vec<u8> {
        self.signs.iter().map(|&s| u8::from(s < 0)).collect()
    }
}

fn pow2(e: i32) -> f64 {
    2f64.powi(e)
}

/// Lower kernel of level `n >= 1`: rows `g` in `G_n`, columns `h` in `G_{n-1}`.
pub fn lower_kernel(current: &Enumeration, signs: &[f64], previous: &Enumeration) -> SparseKernel {
    let n = current.level;
    let terms = current
        .sigma
        .iter()
        .zip(&previous.tau)
        .zip(signs)
        .map(|((&s, &t), &e)| (s, t, Complex64::new(e, 0.0)))
        .collect();
    SparseKernel::new(
        UnitRoots::new(crate::characters::group_order(n)),
        crate::characters::group_order(n - 1),
        terms,
        -pow2(-(n as i32)),
    )
}

/// Upper kernel of level `n`: rows `g` in `G_n`, columns `h` in `G_{n+1}`.
pub fn upper_kernel(current: &Enumeration, next: &Enumeration, next_signs: &[f64]) -> SparseKernel {
    let n = current.level;
    let terms = current
        .tau
        .iter()
        .zip(&next.sigma)
        .zip(next_signs)
        .map(|((&t, &s), &e)| (t, s, Complex64::new(e, 0.0)))
        .collect();
    SparseKernel::new(
        UnitRoots::new(crate::characters::group_order(n)),
        crate::characters::group_order(n + 1),
        terms,
        pow2(-(n as i32) - 1),
    )
}

/// Middle kernel of level `n`: rows `g` and columns `h` in `G_n`.
pub fn middle_kernel(current: &Enumeration) -> SparseKernel {
    let n = current.level as i32;
    let terms = current
        .sigma
        .iter()
        .map(|&c| (c, c, Complex64::new(-pow2(-n), 0.0)))
        .chain(current.tau.iter().map(|&c| (c, c, Complex64::new(pow2(-n - 1), 0.0))))
        .collect();
    SparseKernel::new(
        UnitRoots::new(crate::characters::group_order(current.level)),
        crate::characters::group_order(current.level),
        terms,
        1.0,
    )
}

/// The sign objective at level `n`: the largest modulus over the two cross
/// kernels that the level-`n` signs determine.
pub fn sign_objective(previous: Option<&Enumeration>, current: &Enumeration, signs: &[f64]) -> f64 {
    match previous {
        None => 0.0,
        Some(prev) => {
            let lower = lower_kernel(current, signs, prev).max_abs();
            let upper = upper_kernel(prev, current, signs).max_abs();
            lower.max(upper)
        }
    }
}

/// Chooses `eps^n`. Deterministic in `(strategy, budget, seed)`; ties go to
/// the lexicographically smallest pattern with `+1` before `-1`.
///
/// `previous` is the level `n - 1` enumeration and must be present for
/// `n >= 1`.
pub fn search_signs(
    n: u32,
    previous: Option<&Enumeration>,
    current: &Enumeration,
    strategy: SignStrategy,
    budget: u64,
    seed: u64,
) -> Result<SignPattern> {
    if current.level != n {
        return Err(Error::MissingLevelData(n));
    }
    if n >= 1 && previous.map(|p| p.level) != Some(n - 1) {
        return Err(Error::MissingLevelData(n - 1));
    }
    if budget == 0 {
        return Err(Error::BadParameter("search budget must be at least 1".into()));
    }
    let len = 1usize << n;
    let evaluate = |signs: Vec<i8>| {
        let w: Vec<f64> = signs.iter().map(|&s| f64::from(s)).collect();
        let objective = sign_objective(previous, current, &w);
        let p = SignPattern {
            level: n,
            signs,
            objective,
        };
        ((quantize(objective), p.lex_key()), p)
    };
    let best = match strategy {
        SignStrategy::Exhaustive => {
            if n > EXHAUSTIVE_SIGN_MAX_LEVEL {
                return Err(Error::StrategyUnavailable {
                    strategy: strategy.to_string(),
                    level: n,
                });
            }
            (0u64..1 << len)
                .into_par_iter()
                .map(|bits| {
                    let signs = (0..len)
                        .map(|j| if bits >> j & 1 == 1 { -1 } else { 1 })
                        .collect();
                    evaluate(signs)
                })
                .min_by(|a, b| a.0.cmp(&b.0))
        }
        SignStrategy::RandomRestart => (0..budget)
            .into_par_iter()
            .map(|r| {
                use rand::Rng;
                let mut rng = stream_rng(seed, r);
                let signs = (0..len).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
                evaluate(signs)
            })
            .min_by(|a, b| a.0.cmp(&b.0)),
    };
    Ok(best.expect("non-empty search space").1)
}

/// Dense cross blocks of level `n`.
#[derive(Debug, Clone)]
pub struct CrossBlocks {
    /// `Phi^n_g(h)` for `g` in `G_n`, `h` in `G_{n-1}`; absent at level 0.
    pub lower: Option<Vec<Vec<Complex64>>>,
    /// `Phi^n_g(h)` for `g` in `G_n`, `h` in `G_{n+1}`.
    pub upper: Vec<Vec<Complex64>>,
}

pub fn cross_block_matrix(n: u32, data: &Construction) -> Result<CrossBlocks> {
    let current = data.enumeration(n)?;
    let next = data.enumeration(n + 1)?;
    let next_signs: Vec<f64> = data.signs(n + 1)?.weights().collect();
    let lower = if n == 0 {
        None
    } else {
        let signs: Vec<f64> = data.signs(n)?.weights().collect();
        Some(lower_kernel(current, &signs, data.enumeration(n - 1)?).rows())
    };
    let upper = upper_kernel(current, next, &next_signs).rows();
    Ok(CrossBlocks { lower, upper })
}

/// Maxima of `|Phi^n_g(h)|` over `g` in `G_n` per target block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSupremum {
    pub level: u32,
    pub lower: Option<f64>,
    pub middle: f64,
    pub upper: f64,
}

impl PhiSupremum {
    pub fn overall(&self) -> f64 {
        self.lower.unwrap_or(0.0).max(self.middle).max(self.upper)
    }
}

pub fn phi_supremum(n: u32, data: &Construction) -> Result<PhiSupremum> {
    let current = data.enumeration(n)?;
    let next = data.enumeration(n + 1)?;
    let next_signs: Vec<f64> = data.signs(n + 1)?.weights().collect();
    let lower = if n == 0 {
        None
    } else {
        let signs: Vec<f64> = data.signs(n)?.weights().collect();
        Some(lower_kernel(current, &signs, data.enumeration(n - 1)?).max_abs())
    };
    Ok(PhiSupremum {
        level: n,
        lower,
        middle: middle_kernel(current).max_abs(),
        upper: upper_kernel(current, next, &next_signs).max_abs(),
    })
}

/// `(n + 1)^(1/2) 2^(n/2)`, the scale of the enumeration defect.
pub fn enumeration_scale(n: u32) -> f64 {
    f64::from(n + 1).sqrt() * 2f64.powf(f64::from(n) / 2.0)
}

/// `(n + 1)^(1/2) 2^(-n/2)`, the scale of `|Phi^n_g(h)|`.
pub fn phi_scale(n: u32) -> f64 {
    f64::from(n + 1).sqrt() * 2f64.powf(-f64::from(n) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCertificate {
    pub level: u32,
    pub defect: f64,
    pub enumeration_ratio: f64,
    pub sup: PhiSupremum,
    pub lower_ratio: Option<f64>,
    pub upper_ratio: f64,
    pub cross_ratio: f64,
}

/// Smallest constants certified over a set of levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedConstants {
    /// `max defect(n) / ((n+1)^(1/2) 2^(n/2))`.
    pub a_enum: f64,
    /// `max |Phi^n_g(h)| / ((n+1)^(1/2) 2^(-n/2))` over all three blocks.
    pub a_cross: f64,
    /// Same ratio restricted to the lower blocks.
    pub a_lower: f64,
    /// Same ratio restricted to the upper blocks.
    pub a_upper: f64,
    pub levels: Vec<LevelCertificate>,
}

/// Certifies the constants over `levels`. Each level `n` needs data at
/// `n + 1` for its upper block.
pub fn certify_constants(
    levels: impl IntoIterator<Item = u32>,
    data: &Construction,
) -> Result<CertifiedConstants> {
    let levels: Vec<u32> = levels.into_iter().collect();
    if levels.is_empty() {
        return Err(Error::EmptyLevels);
    }
    let certs = levels
        .iter()
        .map(|&n| {
            let sup = phi_supremum(n, data)?;
            let defect = data.enumeration(n)?.defect;
            let ps = phi_scale(n);
            Ok(LevelCertificate {
                level: n,
                defect,
                enumeration_ratio: defect / enumeration_scale(n),
                sup,
                lower_ratio: sup.lower.map(|l| l / ps),
                upper_ratio: sup.upper / ps,
                cross_ratio: sup.overall() / ps,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_of = |f: &dyn Fn(&LevelCertificate) -> f64| certs.iter().map(f).fold(0.0, f64::max);
    Ok(CertifiedConstants {
        a_enum: max_of(&|c| c.enumeration_ratio),
        a_cross: max_of(&|c| c.cross_ratio),
        a_lower: max_of(&|c| c.lower_ratio.unwrap_or(0.0)),
        a_upper: max_of(&|c| c.upper_ratio),
        levels: certs,
    })
}
