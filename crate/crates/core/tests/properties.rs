use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;

use hilbertian_ap::characters::CharacterTable;
use hilbertian_ap::construction::{build_construction, Construction, LevelData, SearchPlan};
use hilbertian_ap::enumeration::{search_enumeration, Enumeration, EnumerationStrategy};
use hilbertian_ap::moduli::{
    codimension_closed_form, codimension_partial_sum, distance_bound, numeric_distance_upper, split_sequence,
    witness_point, DistanceBoundInputs,
};
use hilbertian_ap::obstruction::{
    basis_dim, beta_level, biorthogonality_deviation, max_coordinate_gap, telescope_check, FiniteRankOperator,
    OperatorMatrix, PhiFamily,
};
use hilbertian_ap::signs::{sign_objective, SignPattern};
use hilbertian_ap::space::{lp_norm, MixedNormVector, PSchedule};

fn searched() -> &'static Construction {
    static DATA: OnceLock<Construction> = OnceLock::new();
    DATA.get_or_init(|| build_construction(5, &SearchPlan::default()).unwrap())
}

fn schedule() -> impl Strategy<Value = PSchedule> {
    prop_oneof![
        (0.05f64..0.95).prop_map(|alpha| PSchedule::Power { alpha }),
        Just(PSchedule::Log),
    ]
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(re, im)| Complex64::new(re, im))
}

fn vector() -> impl Strategy<Value = MixedNormVector> {
    (
        prop::collection::vec(complex(), 3),
        prop::collection::vec(complex(), 6),
        prop::collection::vec(complex(), 12),
        0u8..8,
    )
        .prop_map(|(a, b, c, mask)| {
            let mut v = MixedNormVector::new();
            for (bit, (level, block)) in [(0u32, a), (1, b), (2, c)].into_iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    v.set_block(level, block).unwrap();
                }
            }
            v
        })
}

/// Data built from arbitrary partitions and signs.
fn arbitrary_data(top: u32) -> impl Strategy<Value = Construction> {
    let levels: Vec<_> = (0..=top)
        .map(|n| {
            let k = 3usize << n;
            (
                Just(n),
                Just((0..k as u64).collect::<Vec<u64>>())
                    .prop_shuffle()
                    .prop_map(move |idx| idx[..1 << n].to_vec()),
                prop::collection::vec(prop_oneof![Just(1i8), Just(-1i8)], 1 << n),
            )
        })
        .collect();
    levels.prop_map(|levels| {
        let mut c = Construction::new();
        for (n, sigma, signs) in levels {
            let table = CharacterTable::for_level(n).unwrap();
            let enumeration = Enumeration::from_sigma(&table, sigma).unwrap();
            c.push(LevelData {
                enumeration,
                signs: SignPattern::new(n, signs).unwrap(),
            })
            .unwrap();
        }
        c
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn z_norm_is_a_norm(x in vector(), y in vector(), a in complex(), s in schedule()) {
        let nx = x.z_norm(&s).unwrap();
        let ny = y.z_norm(&s).unwrap();
        prop_assert!(nx >= 0.0);
        prop_assert!(x.add(&y).z_norm(&s).unwrap() <= (nx + ny) * (1.0 + 1e-12) + 1e-12);
        let scaled = x.scale(a).z_norm(&s).unwrap();
        prop_assert!((scaled - a.norm() * nx).abs() <= 1e-10 * (1.0 + scaled));
        if x.blocks().any(|(_, b)| b.iter().any(|z| z.norm() > 0.0)) {
            prop_assert!(nx > 0.0);
        }
    }

    #[test]
    fn lp_norm_decreases_in_p(block in prop::collection::vec(complex(), 1..20), p in 2.0f64..3.0, q in 2.0f64..3.0) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        prop_assert!(lp_norm(&block, hi) <= lp_norm(&block, lo) * (1.0 + 1e-12));
    }

    #[test]
    fn schedules_are_admissible(s in schedule(), n in 0u64..100_000) {
        let p = s.p_value(n).unwrap();
        prop_assert!(p > 2.0 && p <= 3.0);
        prop_assert!(s.p_value(n + 1).unwrap() <= p);
        prop_assert!(s.gap(n).unwrap() <= 1.0 / 6.0);
    }

    #[test]
    fn telescoping_holds_for_random_operators(seed in any::<u64>()) {
        let t = OperatorMatrix::random(3, seed);
        for n in 0..3 {
            prop_assert!(telescope_check(&t, n, searched()).unwrap() < 1e-9);
        }
    }

    #[test]
    fn beta_is_linear(s1 in any::<u64>(), s2 in any::<u64>(), a in complex(), b in complex()) {
        let s = OperatorMatrix::random(3, s1);
        let t = OperatorMatrix::random(3, s2);
        let c = OperatorMatrix::combine(a, &s, b, &t).unwrap();
        for n in 0..=3 {
            let lhs = beta_level(&c, n).unwrap();
            let rhs = a * beta_level(&s, n).unwrap() + b * beta_level(&t, n).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn finite_rank_traces_vanish_above_support(seed in any::<u64>(), rank in 1usize..=5, support in 0u32..=2) {
        let op = FiniteRankOperator::random(rank, support, seed);
        let t = op.to_matrix(searched(), 4).unwrap();
        for n in op.support_level() + 1..=4 {
            prop_assert!(beta_level(&t, n).unwrap().norm() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn biorthogonality_for_any_partition_and_signs(data in arbitrary_data(3)) {
        prop_assert!(biorthogonality_deviation(&data, 3).unwrap() < 1e-9);
    }

    #[test]
    fn phi_closed_forms_match_expansion(data in arbitrary_data(3)) {
        for n in 0..=2 {
            let family = PhiFamily::new(&data, n).unwrap();
            for g in 0..family.order() {
                let p = family.phi(g).unwrap();
                prop_assert!(max_coordinate_gap(&p.coords, &p.expand(&data).unwrap()) < 1e-12);
            }
        }
    }

    #[test]
    fn telescoping_for_any_partition_and_signs(data in arbitrary_data(3), seed in any::<u64>()) {
        let t = OperatorMatrix::random(2, seed);
        prop_assert_eq!(t.dim(), basis_dim(2));
        for n in 0..2 {
            prop_assert!(telescope_check(&t, n, &data).unwrap() < 1e-9);
        }
    }

    #[test]
    fn sign_objective_is_flip_invariant(data in arbitrary_data(3)) {
        for n in 1..=3 {
            let e = data.enumeration(n).unwrap();
            let prev = data.enumeration(n - 1).unwrap();
            let w: Vec<f64> = data.signs(n).unwrap().weights().collect();
            let flipped: Vec<f64> = w.iter().map(|x| -x).collect();
            let a = sign_objective(Some(prev), e, &w);
            let b = sign_objective(Some(prev), e, &flipped);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn searches_are_deterministic(seed in any::<u64>(), level in 2u32..=4) {
        let t = CharacterTable::for_level(level).unwrap();
        for strategy in [EnumerationStrategy::RandomRestart, EnumerationStrategy::GreedySwap] {
            let a = search_enumeration(&t, strategy, 50, seed).unwrap();
            let b = search_enumeration(&t, strategy, 50, seed).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn distance_ratio_is_at_least_one(coords in prop::collection::vec(prop::collection::vec(complex(), 6), 1..=3), seed in any::<u64>()) {
        let basis: Vec<MixedNormVector> = coords
            .into_iter()
            .map(|c| MixedNormVector::new().with_block(1, c).unwrap())
            .collect();
        if let Ok(e) = numeric_distance_upper(&basis, &PSchedule::Log, 64, seed) {
            prop_assert!(e.ratio >= 1.0);
            let finer = numeric_distance_upper(&basis, &PSchedule::Log, 128, seed).unwrap();
            prop_assert!(finer.ratio <= e.ratio + e.sampling_error + 1e-6);
        }
    }
}

proptest! {
    #[test]
    fn witness_head_is_monotone_and_codimension_exact(a in 2u128..1 << 60, b in 2u128..1 << 60, s in schedule()) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let inputs = DistanceBoundInputs::default();
        let (Ok(wl), Ok(wh)) = (witness_point(&s, lo, &inputs), witness_point(&s, hi, &inputs)) else {
            return Ok(());
        };
        prop_assert!(wl.head_level <= wh.head_level);
        if wl.head_level < 4096 {
            prop_assert_eq!(&wl.codimension, &codimension_partial_sum(wl.head_level));
        }
        prop_assert_eq!(wh.codimension, codimension_closed_form(wh.head_level));
    }

    #[test]
    fn distance_bound_is_monotone(m in 1u128..1 << 40, dm in 0u128..1000, p in 2.01f64..3.0, dp in 0.0f64..0.5) {
        let inputs = DistanceBoundInputs::default();
        let base = distance_bound(m, p, &inputs).unwrap().bound;
        prop_assert!(distance_bound(m + dm, p, &inputs).unwrap().bound >= base);
        let q = (p + dp).min(3.0);
        prop_assert!(distance_bound(m, q, &inputs).unwrap().bound >= base * (1.0 - 1e-15));
    }

    #[test]
    fn split_is_increasing(alpha in 0.3f64..0.95) {
        let s = PSchedule::Power { alpha };
        let r = split_sequence(&s, 2).unwrap();
        prop_assert!(r.indices.windows(2).all(|w| w[0] < w[1]));
        for e in r.threshold_exponents(&s).unwrap() {
            prop_assert!(e <= 2f64.ln() * (1.0 + 1e-12));
        }
    }
}
