//! Moduli of the space: the codimension witness curve, the distance bound
//! for finite-dimensional subspaces, the `m^(log log m)` envelope, the split
//! of the level set into two halves, and a sampled distance estimate for
//! small subspaces.

use nalgebra::{DMatrix, SymmetricEigen};
use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding::stream_rng;
use crate::space::{MixedNormVector, PSchedule};

/// Largest head level whose codimension is materialized.
pub const MAX_WITNESS_LEVEL: u64 = 1 << 24;

/// Largest threshold exponent whose value `2 * 5^E` is materialized.
pub const MAX_MATERIALIZED_EXPONENT: u64 = 4096;

mod decimal {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_str_radix(10))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigUint, D::Error> {
        let s = String::deserialize(d)?;
        BigUint::parse_bytes(s.as_bytes(), 10).ok_or_else(|| serde::de::Error::custom("bad decimal integer"))
    }

    pub mod wide {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &u128, s: S) -> Result<S::Ok, S::Error> {
            s.serialize_str(&v.to_string())
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u128, D::Error> {
            String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
        }
    }

    pub mod option {
        use num_bigint::BigUint;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(x) => s.serialize_some(&x.to_str_radix(10)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<BigUint>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| {
                    BigUint::parse_bytes(s.as_bytes(), 10)
                        .ok_or_else(|| serde::de::Error::custom("bad decimal integer"))
                })
                .transpose()
        }
    }
}

/// `log2` of a big integer, accurate to double precision.
pub fn log2_big(x: &BigUint) -> f64 {
    if x.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap_or(f64::INFINITY).log2();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap_or(f64::INFINITY).log2() + shift as f64
}

/// Bounds `c1` (type 2) and `c2` (cotype) used in the distance estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBoundInputs {
    pub c1: f64,
    pub c2: f64,
}

impl Default for DistanceBoundInputs {
    fn default() -> Self {
        Self { c1: 1.0, c2: 1.0 }
    }
}

impl DistanceBoundInputs {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 1.0 && c2 >= 1.0 && c1.is_finite() && c2.is_finite()) {
            return Err(Error::BadParameter(format!("c1 and c2 must be finite and >= 1, got {c1}, {c2}")));
        }
        Ok(Self { c1, c2 })
    }

    /// `K = 2 sqrt(2) c1 c2`.
    pub fn k_constant(&self) -> f64 {
        2.0 * 2f64.sqrt() * self.c1 * self.c2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessCurvePoint {
    #[serde(with = "decimal::wide")]
    pub m: u128,
    pub head_level: u64,
    /// `sum_{j <= head} k_j`.
    #[serde(with = "decimal")]
    pub codimension: BigUint,
    pub k_constant: f64,
}

/// Smallest `n >= lo` with `pred(n)`, for a predicate that is monotone in `n`.
fn first_index(lo: u64, hi: u64, pred: impl Fn(u64) -> Result<bool>) -> Result<Option<u64>> {
    if !pred(hi)? {
        return Ok(None);
    }
    let (mut a, mut b) = (lo, hi);
    while a < b {
        let mid = a + (b - a) / 2;
        if pred(mid)? {
            b = mid;
        } else {
            a = mid + 1;
        }
    }
    Ok(Some(a))
}

fn last_level(s: &PSchedule) -> u64 {
    match s {
        PSchedule::Explicit { p } => p.len() as u64 - 1,
        _ => u64::MAX,
    }
}

/// `0 < delta_{n+1} < 1 / log2(m)`.
pub fn witness_criterion(s: &PSchedule, m: u128, n: u64) -> Result<bool> {
    let d = s.gap(n + 1)?;
    Ok(d > 0.0 && d * (m as f64).log2() < 1.0)
}

/// `sum_{j <= n} 3 * 2^j`, summed term by term.
pub fn codimension_partial_sum(n: u64) -> BigUint {
    let mut total = BigUint::zero();
    let mut term = BigUint::from(3u32);
    for _ in 0..=n {
        total += &term;
        term <<= 1;
    }
    total
}

/// `3 (2^{n+1} - 1)`.
pub fn codimension_closed_form(n: u64) -> BigUint {
    ((BigUint::one() << (n + 1)) - 1u32) * 3u32
}

pub fn witness_point(s: &PSchedule, m: u128, inputs: &DistanceBoundInputs) -> Result<WitnessCurvePoint> {
    s.validate()?;
    if m < 2 {
        return Err(Error::BadParameter(format!("witness dimension must be >= 2, got {m}")));
    }
    let hi = last_level(s).saturating_sub(1);
    let head = first_index(0, hi, |n| witness_criterion(s, m, n))?.ok_or_else(|| {
        Error::NoWitness(format!("the gap never drops below 1/log2({m}) = {}", 1.0 / (m as f64).log2()))
    })?;
    if head > MAX_WITNESS_LEVEL {
        return Err(Error::NoWitness(format!(
            "head level {head} exceeds the materialization limit {MAX_WITNESS_LEVEL}"
        )));
    }
    Ok(WitnessCurvePoint {
        m,
        head_level: head,
        codimension: codimension_closed_form(head),
        k_constant: inputs.k_constant(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceBound {
    /// `sqrt(2) c1 c2 m^(1/2 - 1/p)`.
    pub bound: f64,
    /// `2 sqrt(2) c1 c2` when `m^(1/2 - 1/p) <= 2`.
    pub capped: Option<f64>,
}

pub fn distance_bound(m: u128, p: f64, inputs: &DistanceBoundInputs) -> Result<DistanceBound> {
    if !(p > 2.0 && p <= 3.0) {
        return Err(Error::BadParameter(format!("p must lie in (2, 3], got {p}")));
    }
    if m < 1 {
        return Err(Error::BadParameter("dimension must be >= 1".into()));
    }
    let growth = (m as f64).powf(0.5 - 1.0 / p);
    Ok(DistanceBound {
        bound: 2f64.sqrt() * inputs.c1 * inputs.c2 * growth,
        capped: (growth <= 2.0).then(|| inputs.k_constant()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    #[serde(with = "decimal::wide")]
    pub m: u128,
    pub head_level: Option<u64>,
    pub log2_codimension: Option<f64>,
    /// `log2(m) * log2(log2(m))`.
    pub log2_envelope: Option<f64>,
    pub status: EnvelopeStatus,
    pub note: String,
}

/// Relative slack granted to the envelope before comparison.
const ENVELOPE_GUARD: f64 = 1e-12;

/// Compares the witness codimension with `m^(log2 log2 m)` for each sample.
pub fn growth_envelope_check(s: &PSchedule, samples: &[u128]) -> Result<Vec<EnvelopeRow>> {
    samples
        .iter()
        .map(|&m| {
            if m < 16 {
                return Ok(EnvelopeRow {
                    m,
                    head_level: None,
                    log2_codimension: None,
                    log2_envelope: None,
                    status: EnvelopeStatus::Skipped,
                    note: "m below 16, log2 log2 m <= 2".into(),
                });
            }
            let w = witness_point(s, m, &DistanceBoundInputs::default())?;
            let lm = (m as f64).log2();
            let env = lm * lm.log2();
            let lc = log2_big(&w.codimension);
            let pass = lc <= env * (1.0 + ENVELOPE_GUARD);
            Ok(EnvelopeRow {
                m,
                head_level: Some(w.head_level),
                log2_codimension: Some(lc),
                log2_envelope: Some(env),
                status: if pass { EnvelopeStatus::Pass } else { EnvelopeStatus::Fail },
                note: String::new(),
            })
        })
        .collect()
}

/// A threshold `2 * 5^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    #[serde(with = "decimal")]
    pub exponent: BigUint,
    /// The integer itself when the exponent is at most `MAX_MATERIALIZED_EXPONENT`.
    #[serde(with = "decimal::option")]
    pub value: Option<BigUint>,
    pub ln_value: f64,
}

impl Threshold {
    fn new(exponent: BigUint) -> Self {
        let value = exponent
            .to_u64()
            .filter(|&e| e <= MAX_MATERIALIZED_EXPONENT)
            .map(|e| BigUint::from(5u32).pow(e as u32) * 2u32);
        let e = exponent.to_f64().unwrap_or(f64::INFINITY);
        Self {
            ln_value: 2f64.ln() + e * 5f64.ln(),
            exponent,
            value,
        }
    }
}

/// Half-open range of levels; `end == None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexRange {
    pub start: u64,
    pub end: Option<u64>,
}

impl IndexRange {
    pub fn contains(&self, n: u64) -> bool {
        n >= self.start && self.end.is_none_or(|e| n < e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub indices: Vec<u64>,
    /// `thresholds[j] = 2 * 5^(k_{n_1} + ... + k_{n_{j+1}})`.
    pub thresholds: Vec<Threshold>,
    pub first: Vec<IndexRange>,
    pub second: Vec<IndexRange>,
    /// Why the requested depth was not reached, if it was not.
    pub unreachable: Option<String>,
}

impl SplitResult {
    pub fn depth(&self) -> usize {
        self.indices.len()
    }

    /// `ln(m_j) * delta_{n_{j+1}}` for each consecutive pair, to be `<= ln 2`.
    pub fn threshold_exponents(&self, s: &PSchedule) -> Result<Vec<f64>> {
        self.thresholds
            .iter()
            .zip(self.indices.iter().skip(1))
            .map(|(t, &n)| Ok(t.ln_value * s.gap(n)?))
            .collect()
    }
}

fn assemble_ranges(indices: &[u64]) -> (Vec<IndexRange>, Vec<IndexRange>) {
    let mut first = Vec::new();
    let mut second = Vec::new();
    for (j, &start) in indices.iter().enumerate() {
        let range = IndexRange {
            start,
            end: indices.get(j + 1).copied(),
        };
        if j % 2 == 0 {
            first.push(range);
        } else {
            second.push(range);
        }
    }
    (first, second)
}

/// Builds as many split indices as possible, up to `depth`.
pub fn split_sequence_partial(s: &PSchedule, depth: usize) -> Result<SplitResult> {
    s.validate()?;
    if depth == 0 {
        return Err(Error::BadParameter("split depth must be >= 1".into()));
    }
    let mut indices = vec![0u64];
    let mut thresholds = Vec::new();
    let mut exponent = BigUint::zero();
    let mut unreachable = None;
    while indices.len() < depth {
        let last = *indices.last().unwrap_or(&0);
        exponent += BigUint::from(3u32) << last;
        let t = Threshold::new(exponent.clone());
        let ln_m = t.ln_value;
        thresholds.push(t);
        let limit = 2f64.ln() / ln_m;
        let hi = last_level(s);
        let found = if last >= hi {
            None
        } else {
            first_index(last + 1, hi, |n| Ok(s.gap(n)? <= limit))?
        };
        match found {
            Some(n) => indices.push(n),
            None => {
                unreachable = Some(format!(
                    "no level above {last} up to {hi} has gap <= ln 2 / ln m = {limit:e}"
                ));
                break;
            }
        }
    }
    let (first, second) = assemble_ranges(&indices);
    Ok(SplitResult {
        indices,
        thresholds,
        first,
        second,
        unreachable,
    })
}

pub fn split_sequence(s: &PSchedule, depth: usize) -> Result<SplitResult> {
    let r = split_sequence_partial(s, depth)?;
    match &r.unreachable {
        Some(reason) => Err(Error::DepthUnreachable {
            depth,
            reason: reason.clone(),
        }),
        None => Ok(r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub max_norm: f64,
    pub min_norm: f64,
    /// `max_norm / min_norm`, an upper bound on the distance to `l_2^d`
    /// up to `sampling_error`.
    pub ratio: f64,
    pub sampling_error: f64,
}

pub const MAX_ORACLE_DIM: usize = 4;

/// Dense evaluation of `||sum c_i b_i||_Z`.
struct Combination {
    blocks: Vec<(f64, Vec<Vec<Complex64>>)>,
}

impl Combination {
    fn new(basis: &[MixedNormVector], s: &PSchedule) -> Result<Self> {
        let mut levels: Vec<u32> = basis.iter().flat_map(|b| b.levels()).collect();
        levels.sort_unstable();
        levels.dedup();
        let mut blocks = Vec::with_capacity(levels.len());
        for l in levels {
            let k = crate::characters::group_order(l) as usize;
            let cols = basis
                .iter()
                .map(|b| b.block(l).map_or_else(|| vec![Complex64::new(0.0, 0.0); k], |x| x.to_vec()))
                .collect();
            blocks.push((s.p_value(u64::from(l))?, cols));
        }
        Ok(Self { blocks })
    }

    fn norm(&self, c: &[Complex64]) -> f64 {
        let mut total = 0.0;
        let mut buf = Vec::new();
        for (p, cols) in &self.blocks {
            buf.clear();
            buf.resize(cols[0].len(), Complex64::new(0.0, 0.0));
            for (ci, col) in c.iter().zip(cols) {
                for (b, x) in buf.iter_mut().zip(col) {
                    *b += ci * x;
                }
            }
            let n = crate::space::lp_norm(&buf, *p);
            total += n * n;
        }
        total.sqrt()
    }

    /// Gram matrix in the coordinate inner product.
    fn gram(&self, d: usize) -> DMatrix<Complex64> {
        DMatrix::from_fn(d, d, |i, j| {
            self.blocks
                .iter()
                .map(|(_, cols)| cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum::<Complex64>())
                .sum()
        })
    }
}

fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect()
}

fn normalize(x: &mut [f64]) {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    x.iter_mut().for_each(|v| *v /= r);
}

/// Pattern search on the real unit sphere, maximizing `sign * norm`.
fn refine(comb: &Combination, start: &[f64], sign: f64) -> f64 {
    let mut x = start.to_vec();
    let mut best = sign * comb.norm(&to_complex(&x));
    let mut step = 0.1;
    while step > 1e-11 {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let mut y = x.clone();
                y[i] += dir * step;
                normalize(&mut y);
                let v = sign * comb.norm(&to_complex(&y));
                if v > best {
                    best = v;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    sign * best
}

fn extremes(comb: &Combination, dim: usize, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream_rng(seed, 0);
    let mut points: Vec<(f64, Vec<f64>)> = (0..samples)
        .map(|_| {
            let mut x: Vec<f64> = (0..2 * dim).map(|_| rng.sample(StandardNormal)).collect();
            normalize(&mut x);
            (comb.norm(&to_complex(&x)), x)
        })
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let starts = 4.min(points.len());
    let max = points[points.len() - starts..]
        .iter()
        .map(|(_, x)| refine(comb, x, 1.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let min = points[..starts]
        .iter()
        .map(|(_, x)| refine(comb, x, -1.0))
        .fold(f64::INFINITY, f64::min);
    (max, min)
}

/// Estimates the extreme norms of `sum c_i b_i` over the Euclidean unit
/// sphere of coefficients. The sampling error is the change in the ratio
/// between the first half of the samples and all of them.
pub fn numeric_distance_upper(
    basis: &[MixedNormVector],
    s: &PSchedule,
    samples: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    let d = basis.len();
    if d > MAX_ORACLE_DIM {
        return Err(Error::DimensionTooLarge(d));
    }
    if d == 0 {
        return Err(Error::DegenerateBasis);
    }
    let comb = Combination::new(basis, s)?;
    if comb.blocks.is_empty() {
        return Err(Error::DegenerateBasis);
    }
    let eig = SymmetricEigen::new(comb.gram(d)).eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 1e-12 * hi) {
        return Err(Error::DegenerateBasis);
    }
    let samples = samples.max(8);
    let (max_norm, min_norm) = extremes(&comb, d, samples, seed);
    let (half_max, half_min) = extremes(&comb, d, samples / 2, seed);
    let ratio = (max_norm / min_norm).max(1.0);
    let half_ratio = (half_max / half_min).max(1.0);
    Ok(DistanceEstimate {
        max_norm,
        min_norm,
        ratio,
        sampling_error: (ratio - half_ratio).abs() + 1e-9 * ratio,
    })
}
