//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::time::Instant;

use num_bigint::BigUint;

use hilbertian_ap::characters::{verify_orthogonality, CharacterTable};
use hilbertian_ap::commands::{cmd_ap, cmd_build, cmd_moduli, cmd_split, cmd_verify};
use hilbertian_ap::config::RunConfig;
use hilbertian_ap::construction::{build_construction, Construction, SearchPlan};
use hilbertian_ap::enumeration::{search_enumeration, EnumerationStrategy};
use hilbertian_ap::moduli::{
    codimension_partial_sum, growth_envelope_check, numeric_distance_upper, split_sequence, witness_point,
    DistanceBoundInputs, EnvelopeStatus,
};
use hilbertian_ap::obstruction::{
    beta_level, beta_level_via_coordinates, biorthogonality_deviation, check_phi_norm_of,
    form_agreement_on_basis, form_agreement_on_phi, telescope_check, FiniteRankOperator, OperatorMatrix,
    PhiFamily,
};
use hilbertian_ap::seeding::derive_seed;
use hilbertian_ap::signs::{certify_constants, search_signs, SignStrategy};
use hilbertian_ap::space::{MixedNormVector, PSchedule};
use hilbertian_ap::store::ArtifactStore;

const TOP: u32 = 8;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

type Criterion = fn(&Construction) -> Verdict;

fn orthogonality(_: &Construction) -> Verdict {
    let start = Instant::now();
    let worst = (0..=TOP)
        .map(|n| verify_orthogonality(&CharacterTable::for_level(n).unwrap(), 1e-9).max_deviation)
        .fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-9 && secs < 10.0,
        format!("character orthogonality n <= {TOP}: max deviation {worst:.2e} (< 1e-9), {secs:.2} s (< 10 s)"),
    )
}

fn oracle_equivalence(_: &Construction) -> Verdict {
    let start = Instant::now();
    let mut worst_enum = 0.0f64;
    for n in 0..=2 {
        let t = CharacterTable::for_level(n).unwrap();
        let ex = search_enumeration(&t, EnumerationStrategy::Exhaustive, 1, 0).unwrap();
        let rr = search_enumeration(&t, EnumerationStrategy::RandomRestart, 4000, 11).unwrap();
        worst_enum = worst_enum.max((ex.defect - rr.defect).abs());
    }
    let mut worst_sign = 0.0f64;
    let mut prev = None;
    for n in 0..=3 {
        let t = CharacterTable::for_level(n).unwrap();
        let cur = search_enumeration(&t, EnumerationStrategy::Exhaustive, 1, 0).unwrap();
        let ex = search_signs(n, prev.as_ref(), &cur, SignStrategy::Exhaustive, 1, 0).unwrap();
        let rr = search_signs(n, prev.as_ref(), &cur, SignStrategy::RandomRestart, 2560, 5).unwrap();
        worst_sign = worst_sign.max((ex.objective - rr.objective).abs());
        prev = Some(cur);
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_enum < 1e-9 && worst_sign < 1e-9 && secs < 30.0,
        format!(
            "exhaustive vs randomized: defect gap {worst_enum:.1e} (n <= 2), sign objective gap {worst_sign:.1e} (n <= 3), {secs:.2} s (< 30 s)"
        ),
    )
}

fn bound_certification(data: &Construction) -> Verdict {
    let start = Instant::now();
    let cert = certify_constants(0..=TOP, data).unwrap();
    let mut middle_gap = 0.0f64;
    for c in &cert.levels {
        let want = c.defect * 2f64.powi(-(c.level as i32) - 1);
        middle_gap = middle_gap.max((c.sup.middle - want).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        cert.a_enum <= 6.0 && cert.a_cross <= 6.0 && middle_gap < 1e-9 && secs < 300.0,
        format!(
            "certified constants n <= {TOP}: A_enum {:.6} (<= 6), A_cross {:.6} (<= 6), middle-block identity gap {middle_gap:.1e} (< 1e-9), {secs:.2} s",
            cert.a_enum, cert.a_cross
        ),
    )
}

fn biorthogonality(data: &Construction) -> Verdict {
    let bio = biorthogonality_deviation(data, TOP).unwrap();
    let basis = form_agreement_on_basis(data, TOP).unwrap();
    let phi = (0..=TOP).map(|n| form_agreement_on_phi(data, n).unwrap()).fold(0.0, f64::max);
    verdict(
        bio < 1e-9 && basis < 1e-9 && phi < 1e-9,
        format!(
            "biorthogonality n, m <= {TOP}: {bio:.1e}; form agreement on basis {basis:.1e}, on Phi {phi:.1e} (all < 1e-9)"
        ),
    )
}

fn telescoping(data: &Construction) -> Verdict {
    let mut worst = 0.0f64;
    for i in 0..100 {
        let t = OperatorMatrix::random(4, derive_seed(2024, "acceptance-operator", i));
        for n in 0..4 {
            worst = worst.max(telescope_check(&t, n, data).unwrap());
        }
    }
    verdict(
        worst < 1e-9,
        format!("telescoping over 100 random operators at N = 4: max residual {worst:.2e} (< 1e-9)"),
    )
}

fn norm_bound(data: &Construction) -> Verdict {
    let a = certify_constants(0..=TOP, data).unwrap().a_cross;
    let mut worst_ratio = 0.0f64;
    let mut all = true;
    for schedule in [PSchedule::power(0.5).unwrap(), PSchedule::Log] {
        for n in 0..=TOP {
            let family = PhiFamily::new(data, n).unwrap();
            for g in 0..family.order() {
                let r = check_phi_norm_of(&family.phi(g).unwrap(), &schedule, a).unwrap();
                all &= r.pass;
                worst_ratio = worst_ratio.max(r.norm / r.bound);
            }
        }
    }
    verdict(
        all,
        format!("Phi norm bound n <= {TOP}, all g, power and log schedules: max norm/bound {worst_ratio:.4} (<= 1)"),
    )
}

fn obstruction(data: &Construction) -> Verdict {
    let id = OperatorMatrix::identity(TOP);
    let mut id_dev = 0.0f64;
    for n in 0..=TOP {
        id_dev = id_dev.max((beta_level(&id, n).unwrap() - 1.0).norm());
        id_dev = id_dev.max((beta_level_via_coordinates(&id, n, data).unwrap() - 1.0).norm());
    }
    let mut fr_worst = 0.0f64;
    let mut count = 0;
    for support in 0..=3u32 {
        for k in 0..3u64 {
            let op = FiniteRankOperator::random(1 + (k as usize + support as usize) % 5, support, 100 * u64::from(support) + k);
            let l = op.support_level();
            let t = op.to_matrix(data, TOP).unwrap();
            for n in l + 1..=TOP {
                fr_worst = fr_worst.max(beta_level(&t, n).unwrap().norm());
            }
            count += 1;
        }
    }
    verdict(
        id_dev < 1e-10 && fr_worst < 1e-12,
        format!(
            "beta^n(I) n <= {TOP}: max |beta - 1| {id_dev:.1e} (< 1e-10); {count} finite-rank operators: max |beta^n| above support {fr_worst:.1e} (< 1e-12)"
        ),
    )
}

fn compactness(_: &Construction) -> Verdict {
    let log = PSchedule::Log;
    let rel = |v: f64, n: u64| (v / ((n + 1) as f64).powf(-0.5) - 1.0).abs();
    let at99 = rel(log.raw_compactness_sequence(99).unwrap(), 99);
    let at9999 = rel(log.compactness_sequence(9999).unwrap(), 9999);
    let clamped99 = log.compactness_sequence(99).unwrap();
    let power = PSchedule::power(0.5).unwrap();
    let worst_mid = (600..=2000u64)
        .step_by(50)
        .map(|n| power.compactness_sequence(n).unwrap())
        .fold(0.0, f64::max);
    let at5000 = power.compactness_sequence(5000).unwrap();
    verdict(
        at99 < 1e-12 && at9999 < 1e-12 && worst_mid < 1.0 && at5000 < 1e-3,
        format!(
            "log rate vs (n+1)^(-1/2): rel err {at99:.1e} at n = 99 (unclamped rate; clamped value {clamped99:.4}), {at9999:.1e} at n = 9999; power 1/2: max {worst_mid:.3} on [600, 2000] (< 1), {at5000:.2e} at n = 5000 (< 1e-3)"
        ),
    )
}

fn moduli(_: &Construction) -> Verdict {
    let samples: Vec<u128> = vec![1 << 10, 1 << 20, 1 << 40, 1 << 64];
    let inputs = DistanceBoundInputs::default();
    let mut identity = true;
    for s in [PSchedule::Log, PSchedule::power(0.5).unwrap()] {
        for &m in &samples {
            let w = witness_point(&s, m, &inputs).unwrap();
            let closed = (BigUint::from(2u32).pow(w.head_level as u32 + 1) - 1u32) * 3u32;
            identity &= w.codimension == codimension_partial_sum(w.head_level) && w.codimension == closed;
        }
    }
    let rows = growth_envelope_check(&PSchedule::Log, &samples).unwrap();
    let env_pass = rows.iter().all(|r| r.status == EnvelopeStatus::Pass);
    let env_detail: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "m=2^{}: log2 codim {:.1} vs {:.1}",
                r.m.trailing_zeros(),
                r.log2_codimension.unwrap_or(f64::NAN),
                r.log2_envelope.unwrap_or(f64::NAN)
            )
        })
        .collect();
    let split = split_sequence(&PSchedule::power(0.5).unwrap(), 2).unwrap();
    let first = split.thresholds[0].value.as_ref() == Some(&BigUint::from(250u32));
    let increasing = split.indices.windows(2).all(|w| w[0] < w[1]);
    verdict(
        identity && env_pass && first && increasing,
        format!(
            "codimension identity {}; envelope (log rate) {} [{}]; first split threshold 250 {}; split indices {:?} increasing {}",
            ok(identity),
            ok(env_pass),
            env_detail.join("; "),
            ok(first),
            split.indices,
            ok(increasing)
        ),
    )
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILS"
    }
}

fn distance_oracle(_: &Construction) -> Verdict {
    let s = PSchedule::power(0.5).unwrap();
    let unit = |l, g| MixedNormVector::unit(l, g).unwrap();
    let same = numeric_distance_upper(&[unit(0, 0), unit(0, 1)], &s, 4000, 7).unwrap();
    let cross = numeric_distance_upper(&[unit(0, 0), unit(1, 3)], &s, 4000, 7).unwrap();
    let target = 2f64.powf(1.0 / 6.0);
    verdict(
        (same.ratio - target).abs() < 1e-3 && (cross.ratio - 1.0).abs() < 1e-9,
        format!(
            "distance oracle: p = 3 pair ratio {:.6} (2^(1/6) = {target:.6} +- 1e-3), cross-level ratio {:.12} (1 +- 1e-9)",
            same.ratio, cross.ratio
        ),
    )
}

fn run_pipeline(dir: &Path) {
    let config = RunConfig::default();
    let store = ArtifactStore::new(dir);
    cmd_build(&config, &store).unwrap();
    cmd_verify(&config, &store).unwrap();
    cmd_ap(&config, &store).unwrap();
    cmd_moduli(&config, &store).unwrap();
    cmd_split(&config, &store).unwrap();
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(_: &Construction) -> Verdict {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path());
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_pipeline(b.path()));
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    let same = ta == tb;
    verdict(
        same && !ta.is_empty(),
        format!(
            "two full pipeline runs (default pool and one thread): {} files, byte-identical {}",
            ta.len(),
            ok(same)
        ),
    )
}

fn main() {
    let start = Instant::now();
    let data = build_construction(TOP + 1, &SearchPlan::default()).expect("searched data");
    println!("searched data for levels 0..={} in {:.1} s", TOP + 1, start.elapsed().as_secs_f64());
    let criteria: [(&str, Criterion); 11] = [
        ("character orthogonality", orthogonality),
        ("oracle equivalence", oracle_equivalence),
        ("bound certification", bound_certification),
        ("biorthogonality and form agreement", biorthogonality),
        ("telescoping identity", telescoping),
        ("norm bound", norm_bound),
        ("obstruction mechanism", obstruction),
        ("compactness criterion", compactness),
        ("moduli", moduli),
        ("distance oracle sanity", distance_oracle),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check(&data);
        println!(
            "ACCEPTANCE {:>2} {} {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        if !v.pass {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
