//! Subcommands of the `hap` binary: build, verify, ap, moduli, split.
//!
//! Each command returns an [`Outcome`] of check rows; the binary prints them
//! and maps the result to an exit code.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::characters::verify_orthogonality;
use crate::config::RunConfig;
use crate::construction::{build_construction, Construction, LevelData};
use crate::enumeration::enumeration_defect;
use crate::error::Error;
use crate::moduli::{
    codimension_partial_sum, distance_bound, growth_envelope_check, split_sequence_partial, witness_point,
    EnvelopeStatus, WitnessCurvePoint,
};
use crate::obstruction::{
    ap_experiment, biorthogonality_deviation, check_phi_norm_of, check_phi_sup, form_agreement_on_basis,
    form_agreement_on_phi, phi_norm_bound, telescope_check, ApConfig, ObstructionReport, OperatorMatrix,
    PhiFamily,
};
use crate::seeding::derive_seed;
use crate::signs::{certify_constants, sign_objective, CertifiedConstants};
use crate::space::PSchedule;
use crate::store::{ArtifactStore, StoreError};

/// Tolerance on `beta^n(I) = 1`.
pub const IDENTITY_TRACE_TOL: f64 = 1e-10;
/// Tolerance on `beta^n(T) = 0` above the support of a finite-rank `T`.
pub const FINITE_RANK_TRACE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(Error),
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Store(StoreError::Missing(_)) => 3,
            _ => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub scope: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

impl CheckRow {
    fn at_most(check: &str, scope: impl Into<String>, value: f64, bound: f64) -> Self {
        Self {
            check: check.into(),
            scope: scope.into(),
            value,
            bound,
            pass: value <= bound,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub command: String,
    pub rows: Vec<CheckRow>,
    pub notes: Vec<String>,
}

impl Outcome {
    fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn first_failure(&self) -> Option<&CheckRow> {
        self.rows.iter().find(|r| !r.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            out.push_str(&format!(
                "{} {:<28} {:<14} value={:.6e} bound={:.6e}\n",
                if r.pass { "PASS" } else { "FAIL" },
                r.check,
                r.scope,
                r.value,
                r.bound
            ));
        }
        for n in &self.notes {
            out.push_str(&format!("note: {n}\n"));
        }
        match self.first_failure() {
            None => out.push_str(&format!("{}: all {} checks pass\n", self.command, self.rows.len())),
            Some(r) => out.push_str(&format!("{}: first failing check {} [{}]\n", self.command, r.check, r.scope)),
        }
        out
    }
}

/// Construction payload as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConstruction {
    pub top_level: u32,
    pub levels: Vec<LevelData>,
}

fn validated(config: &RunConfig) -> CliResult<()> {
    config.validate().map_err(CliError::Config)
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))
}

fn load_construction(store: &ArtifactStore) -> CliResult<Construction> {
    let stored: StoredConstruction = store.get("construction")?;
    Ok(Construction::from_levels(stored.levels)?)
}

#[derive(Serialize)]
struct LevelCsvRow {
    level: u32,
    defect: f64,
    enumeration_ratio: f64,
    lower_ratio: Option<f64>,
    middle: f64,
    upper_ratio: f64,
    cross_ratio: f64,
    sign_objective: f64,
}

fn certificate_rows(out: &mut Outcome, cert: &CertifiedConstants, threshold: f64) {
    for c in &cert.levels {
        out.rows.push(CheckRow::at_most(
            "enumeration-bound",
            format!("level {}", c.level),
            c.enumeration_ratio,
            threshold,
        ));
        out.rows.push(CheckRow::at_most(
            "cross-block-bound",
            format!("level {}", c.level),
            c.cross_ratio,
            threshold,
        ));
    }
}

/// Searches data for levels `0..=max_level + 1` and certifies levels
/// `0..=max_level`.
pub fn cmd_build(config: &RunConfig, store: &ArtifactStore) -> CliResult<Outcome> {
    validated(config)?;
    let n_top = config.max_level;
    let data = build_construction(n_top + 1, &config.search_plan())?;
    let cert = certify_constants(0..=n_top, &data)?;
    store.put("config", config)?;
    store.put(
        "construction",
        &StoredConstruction {
            top_level: n_top + 1,
            levels: data.levels().to_vec(),
        },
    )?;
    store.put("certificate", &cert)?;
    let rows = cert.levels.iter().map(|c| LevelCsvRow {
        level: c.level,
        defect: c.defect,
        enumeration_ratio: c.enumeration_ratio,
        lower_ratio: c.lower_ratio,
        middle: c.sup.middle,
        upper_ratio: c.upper_ratio,
        cross_ratio: c.cross_ratio,
        sign_objective: data.levels()[c.level as usize].signs.objective,
    });
    store.write_file("build/levels.csv", &csv_bytes(rows)?)?;
    let mut out = Outcome::new("build");
    certificate_rows(&mut out, &cert, config.constant_threshold);
    out.notes.push(format!(
        "A_enum = {:.6}, A_cross = {:.6} over levels 0..={n_top}",
        cert.a_enum, cert.a_cross
    ));
    Ok(out)
}

/// Rechecks the stored data: integrity, drift against stored values, and
/// every identity and bound of the construction.
pub fn cmd_verify(config: &RunConfig, store: &ArtifactStore) -> CliResult<Outcome> {
    validated(config)?;
    let mut out = Outcome::new("verify");
    for (kind, ok) in store.integrity()? {
        out.rows.push(CheckRow {
            check: "artifact-integrity".into(),
            scope: kind,
            value: if ok { 0.0 } else { 1.0 },
            bound: 0.0,
            pass: ok,
        });
    }
    let data = load_construction(store)?;
    let stored_cert: CertifiedConstants = store.get("certificate")?;
    let top = data.top_level().ok_or(Error::EmptyLevels)?;
    if top < 2 {
        return Err(Error::MissingLevelData(2).into());
    }
    let n_top = top - 1;
    if n_top != config.max_level {
        out.notes.push(format!("store holds levels 0..={top}; verifying 0..={n_top}"));
    }
    let tol = config.tol;
    for n in 0..=top {
        let table = data.table(n)?;
        let r = verify_orthogonality(table, tol);
        out.rows.push(CheckRow::at_most(
            "character-orthogonality",
            format!("level {n}"),
            r.max_deviation,
            tol,
        ));
        let e = data.enumeration(n)?;
        let recomputed = enumeration_defect(e, table)?;
        out.rows.push(CheckRow::at_most(
            "stored-defect-drift",
            format!("level {n}"),
            (recomputed - e.defect).abs(),
            tol,
        ));
        let prev = if n == 0 { None } else { Some(data.enumeration(n - 1)?) };
        let s = data.signs(n)?;
        let w: Vec<f64> = s.weights().collect();
        out.rows.push(CheckRow::at_most(
            "stored-sign-objective-drift",
            format!("level {n}"),
            (sign_objective(prev, e, &w) - s.objective).abs(),
            tol,
        ));
    }
    let cert = certify_constants(0..=n_top, &data)?;
    let drift = (cert.a_enum - stored_cert.a_enum)
        .abs()
        .max((cert.a_cross - stored_cert.a_cross).abs());
    out.rows.push(CheckRow::at_most("certificate-drift", "all levels", drift, tol));
    certificate_rows(&mut out, &cert, config.constant_threshold);
    for n in 0..=n_top {
        let r = check_phi_sup(n, &data, config.constant_threshold)?;
        let defect = data.enumeration(n)?.defect;
        out.rows.push(CheckRow::at_most(
            "middle-block-identity",
            format!("level {n}"),
            (r.sup.middle - defect * 2f64.powi(-(n as i32) - 1)).abs(),
            tol,
        ));
    }
    out.rows.push(CheckRow::at_most(
        "biorthogonality",
        format!("levels 0..={n_top}"),
        biorthogonality_deviation(&data, n_top)?,
        tol,
    ));
    out.rows.push(CheckRow::at_most(
        "form-agreement-basis",
        format!("levels 1..={n_top}"),
        form_agreement_on_basis(&data, n_top)?,
        tol,
    ));
    for n in 0..=n_top {
        out.rows.push(CheckRow::at_most(
            "form-agreement-phi",
            format!("level {n}"),
            form_agreement_on_phi(&data, n)?,
            tol,
        ));
    }
    let trunc = config.ap_truncation();
    let mut ops = vec![OperatorMatrix::identity(trunc)];
    ops.extend((0..3).map(|i| OperatorMatrix::random(trunc, derive_seed(config.seed, "verify-operator", i))));
    for n in 0..trunc {
        let mut worst = 0.0f64;
        for t in &ops {
            worst = worst.max(telescope_check(t, n, &data)?);
        }
        out.rows.push(CheckRow::at_most("telescoping", format!("level {n}"), worst, tol));
    }
    for n in 0..=n_top {
        let family = PhiFamily::new(&data, n)?;
        let mut worst_norm = 0.0f64;
        let mut worst_gap = 0.0f64;
        for g in 0..family.order() {
            let r = check_phi_norm_of(&family.phi(g)?, &config.schedule, cert.a_cross)?;
            worst_norm = worst_norm.max(r.norm);
            worst_gap = worst_gap.max((r.norm * r.norm - r.three_block_sq).abs());
        }
        out.rows.push(CheckRow::at_most(
            "phi-norm-two-ways",
            format!("level {n}"),
            worst_gap,
            tol,
        ));
        out.rows.push(CheckRow::at_most(
            "phi-norm-bound",
            format!("level {n}"),
            worst_norm,
            phi_norm_bound(n, &config.schedule, cert.a_cross)?,
        ));
    }
    Ok(out)
}

#[derive(Serialize)]
struct BetaCsvRow {
    level: u32,
    reduced_re: f64,
    reduced_im: f64,
    coordinates_re: f64,
    coordinates_im: f64,
}

#[derive(Serialize)]
struct FiniteRankCsvRow {
    id: usize,
    rank: usize,
    support_level: u32,
    level: usize,
    beta_re: f64,
    beta_im: f64,
}

/// Runs the operator experiment on the stored data.
pub fn cmd_ap(config: &RunConfig, store: &ArtifactStore) -> CliResult<Outcome> {
    validated(config)?;
    config.validate_ap().map_err(CliError::Config)?;
    let data = load_construction(store)?;
    let cert: CertifiedConstants = store.get("certificate")?;
    let top = data.top_level().ok_or(Error::EmptyLevels)?;
    let truncation = config.ap_truncation().min(top.saturating_sub(1));
    let ap = ApConfig {
        truncation,
        finite_rank_count: config.ap_finite_rank,
        support_level: config.ap_support_level,
        seed: config.seed,
        a_cross: cert.a_cross,
        ..ApConfig::default()
    };
    let report = ap_experiment(&ap, &data, &config.schedule)?;
    store.put("ap-report", &report)?;
    write_ap_tables(store, &report)?;
    let mut out = Outcome::new("ap");
    for b in &report.identity_beta {
        let dev = (b.reduced - 1.0).norm().max((b.via_coordinates - 1.0).norm());
        out.rows.push(CheckRow::at_most(
            "identity-trace",
            format!("level {}", b.level),
            dev,
            IDENTITY_TRACE_TOL,
        ));
    }
    for f in &report.finite_rank {
        out.rows.push(CheckRow::at_most(
            "finite-rank-trace",
            format!("operator {}", f.id),
            f.max_beyond_support,
            FINITE_RANK_TRACE_TOL,
        ));
    }
    for t in &report.telescoping {
        out.rows.push(CheckRow::at_most(
            "telescoping",
            format!("level {}", t.level),
            t.identity_residual.max(t.random_residual),
            config.tol,
        ));
    }
    for c in &report.compact_table {
        out.rows.push(CheckRow::at_most(
            "compact-set-bound",
            format!("level {}", c.level),
            c.weighted_norm,
            c.weighted_bound,
        ));
    }
    let lim = &report.identity_limit;
    out.rows.push(CheckRow::at_most(
        "trace-limit-bound",
        format!("truncation {}", lim.truncation),
        lim.estimate.norm(),
        lim.beta_bound,
    ));
    out.notes.push(format!(
        "beta(I) estimate {:.12} with tail bound {:.3e}",
        lim.estimate.re, lim.tail_bound
    ));
    Ok(out)
}

fn write_ap_tables(store: &ArtifactStore, r: &ObstructionReport) -> CliResult<()> {
    let beta = r.identity_beta.iter().map(|b| BetaCsvRow {
        level: b.level,
        reduced_re: b.reduced.re,
        reduced_im: b.reduced.im,
        coordinates_re: b.via_coordinates.re,
        coordinates_im: b.via_coordinates.im,
    });
    store.write_file("ap/beta_identity.csv", &csv_bytes(beta)?)?;
    store.write_file("ap/telescoping.csv", &csv_bytes(&r.telescoping)?)?;
    let fr = r.finite_rank.iter().flat_map(|f| {
        f.betas.iter().enumerate().map(move |(level, b): (usize, &Complex64)| FiniteRankCsvRow {
            id: f.id,
            rank: f.rank,
            support_level: f.support_level,
            level,
            beta_re: b.re,
            beta_im: b.im,
        })
    });
    store.write_file("ap/finite_rank.csv", &csv_bytes(fr)?)?;
    store.write_file("ap/compact.csv", &csv_bytes(&r.compact_table)?)?;
    Ok(())
}

#[derive(Serialize)]
struct WitnessCsvRow {
    m: String,
    head_level: u64,
    codimension: String,
    k_constant: f64,
    p_next: f64,
    distance_bound: f64,
    capped_bound: Option<f64>,
}

#[derive(Serialize)]
struct EnvelopeCsvRow {
    m: String,
    head_level: Option<u64>,
    log2_codimension: Option<f64>,
    log2_envelope: Option<f64>,
    status: EnvelopeStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuliReport {
    pub witness: Vec<WitnessCurvePoint>,
    pub envelope: Vec<crate::moduli::EnvelopeRow>,
}

/// Largest head level for which the partial sum is recomputed term by term.
const PARTIAL_SUM_LIMIT: u64 = 1 << 16;

/// Witness curve, distance bounds and the growth envelope for the sampled
/// dimensions. The envelope is a gating check only for the log-rate schedule.
pub fn cmd_moduli(config: &RunConfig, store: &ArtifactStore) -> CliResult<Outcome> {
    validated(config)?;
    let inputs = config.distance_inputs().map_err(CliError::Config)?;
    let s = &config.schedule;
    let mut out = Outcome::new("moduli");
    let mut witness = Vec::new();
    let mut rows = Vec::new();
    for &m in &config.m_samples {
        if m < 2 {
            out.notes.push(format!("m = {m} skipped, witness needs m >= 2"));
            continue;
        }
        let w = witness_point(s, m, &inputs)?;
        let p_next = s.p_value(w.head_level + 1)?;
        let d = distance_bound(m, p_next, &inputs)?;
        if w.head_level <= PARTIAL_SUM_LIMIT {
            let same = codimension_partial_sum(w.head_level) == w.codimension;
            out.rows.push(CheckRow {
                check: "witness-codimension".into(),
                scope: format!("m = {m}"),
                value: if same { 0.0 } else { 1.0 },
                bound: 0.0,
                pass: same,
            });
        }
        rows.push(WitnessCsvRow {
            m: m.to_string(),
            head_level: w.head_level,
            codimension: w.codimension.to_string(),
            k_constant: w.k_constant,
            p_next,
            distance_bound: d.bound,
            capped_bound: d.capped,
        });
        witness.push(w);
    }
    let envelope = growth_envelope_check(s, &config.m_samples)?;
    let gating = matches!(s, PSchedule::Log);
    for e in &envelope {
        match (e.status, e.log2_codimension, e.log2_envelope) {
            (EnvelopeStatus::Skipped, ..) => out.notes.push(format!("envelope at m = {} skipped: {}", e.m, e.note)),
            (_, Some(c), Some(env)) if gating => out.rows.push(CheckRow {
                check: "growth-envelope".into(),
                scope: format!("m = {}", e.m),
                value: c,
                bound: env,
                pass: e.status == EnvelopeStatus::Pass,
            }),
            _ => {}
        }
    }
    if !gating {
        out.notes.push("growth envelope is informational for this schedule".into());
    }
    store.write_file("moduli/witness.csv", &csv_bytes(rows)?)?;
    let env_rows = envelope.iter().map(|e| EnvelopeCsvRow {
        m: e.m.to_string(),
        head_level: e.head_level,
        log2_codimension: e.log2_codimension,
        log2_envelope: e.log2_envelope,
        status: e.status,
    });
    store.write_file("moduli/envelope.csv", &csv_bytes(env_rows)?)?;
    store.put("moduli", &ModuliReport { witness, envelope })?;
    Ok(out)
}

/// Splits the level set into two alternating families of ranges.
pub fn cmd_split(config: &RunConfig, store: &ArtifactStore) -> CliResult<Outcome> {
    validated(config)?;
    let s = &config.schedule;
    let r = split_sequence_partial(s, config.split_depth)?;
    store.put("split", &r)?;
    let mut out = Outcome::new("split");
    if let Some(t) = r.thresholds.first() {
        let ok = t.value.as_ref().is_some_and(|v| *v == 250u32.into());
        out.rows.push(CheckRow {
            check: "split-first-threshold".into(),
            scope: "j = 1".into(),
            value: t.ln_value.exp(),
            bound: 250.0,
            pass: ok,
        });
    }
    for (j, e) in r.threshold_exponents(s)?.into_iter().enumerate() {
        out.rows.push(CheckRow::at_most(
            "split-threshold-exponent",
            format!("j = {}", j + 1),
            e,
            2f64.ln(),
        ));
    }
    let increasing = r.indices.windows(2).all(|w| w[0] < w[1]);
    out.rows.push(CheckRow {
        check: "split-indices-increasing".into(),
        scope: format!("depth {}", r.depth()),
        value: if increasing { 0.0 } else { 1.0 },
        bound: 0.0,
        pass: increasing,
    });
    out.rows.push(CheckRow {
        check: "split-depth-reached".into(),
        scope: format!("depth {}", config.split_depth),
        value: r.depth() as f64,
        bound: config.split_depth as f64,
        pass: r.unreachable.is_none(),
    });
    out.notes.push(format!("indices {:?}", r.indices));
    for (j, t) in r.thresholds.iter().enumerate() {
        out.notes.push(format!("m_{} = 2 * 5^{}", j + 1, t.exponent));
    }
    if let Some(reason) = &r.unreachable {
        out.notes.push(reason.clone());
    }
    Ok(out)
}
