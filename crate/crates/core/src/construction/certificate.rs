//! Serialized construction records and their verifier.
//!
//! A certificate carries everything needed to re-derive the run: the
//! forms, the bound schedule, each level's factors with the map that
//! extends onto them, and one record per check with its seed and sample
//! count. Every numeric value is a decimal string so the JSON is exact
//! and byte-stable. Verification is layered: structural and arithmetic
//! facts are re-derived first (factor selection, cardinalities, map
//! multipliers, pair counts, the counting inequality), then the digest
//! is recomputed over the whole document, and only then are the recorded
//! checks replayed with their stated seeds. Any single-field edit is
//! caught at or before the digest, so tampering never triggers a replay.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::admissible::{description_count, AdmissibleEnumeration};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::{check_hypotheses, parse_form, select_coprime_primes, subset_sums, LinearForm};
use crate::images::{image, is_surjective, level_image};
use crate::modules::FiniteModule;
use crate::rational::{count_below, parse_rational};

use super::map::{MapDescription, StructuredMap};
use super::schedule::EpsilonSchedule;
use super::steps::{
    build_set, check_commuting, check_counting, check_covering_exhaustive, check_covering_low,
    check_covering_sampled, check_labeled_residue, check_level_bound, check_level_in_image,
    check_pair_oracle, check_zero_coordinate, CHECK_COMMUTING, CHECK_COUNTING,
    CHECK_COVERING_EXHAUSTIVE, CHECK_COVERING_LOW, CHECK_COVERING_SAMPLED, CHECK_LABELED_RESIDUE,
    CHECK_LEVEL_BOUND, CHECK_LEVEL_IN_IMAGE, CHECK_PAIR_ORACLE, CHECK_ZERO_COORDINATE,
};

pub const SCHEMA: &str = "hrlab-cert/1";

/// One verification performed during a run: `status` is `verified`,
/// `failed`, or `skipped`, and randomized checks record their seed and
/// sample count so a verifier can replay them exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRecord {
    pub name: String,
    pub status: String,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<String>,
}

impl CheckRecord {
    pub(crate) fn verified(name: &str, detail: String) -> Self {
        CheckRecord {
            name: name.into(),
            status: "verified".into(),
            detail,
            samples: None,
            seed: None,
        }
    }

    pub(crate) fn failed(name: &str, detail: String) -> Self {
        CheckRecord {
            name: name.into(),
            status: "failed".into(),
            detail,
            samples: None,
            seed: None,
        }
    }

    pub(crate) fn skipped(name: &str, detail: String) -> Self {
        CheckRecord {
            name: name.into(),
            status: "skipped".into(),
            detail,
            samples: None,
            seed: None,
        }
    }

    pub(crate) fn with_sampling(mut self, samples: u64, seed: u64) -> Self {
        self.samples = Some(samples.to_string());
        self.seed = Some(seed.to_string());
        self
    }

    /// A check is acceptable unless it failed outright.
    pub fn passed(&self) -> bool {
        self.status != "failed"
    }
}

/// The state of the construction after one step: the factors added at
/// this level, the extended map, and the checks that ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelRecord {
    pub level: u32,
    /// Factors added at this level, in order.
    pub factors: Vec<String>,
    /// Level 1 only: the subset sum each factor cancels, if any.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub factor_labels: Option<Vec<Option<String>>>,
    /// |M_ℓ| across all factors so far.
    pub cardinality: String,
    pub map: MapDescription,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pair_count: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub description_count: Option<String>,
    /// Level 1 only: |Φ^{(1)}(A_1)|, exact.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image_count: Option<String>,
    pub checks: Vec<CheckRecord>,
}

/// What the finished run asserts about A = A(M_h, f_h).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conclusion {
    pub cardinality: String,
    pub exceeds_floor: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub set_size: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image_size: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub image_bound_holds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub surjectivity_verified: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Certificate {
    pub schema: String,
    pub tool_version: String,
    pub mode: String,
    pub seed: String,
    pub upsilons: Vec<String>,
    pub phi: String,
    /// When Φ was assembled from several forms, the parts in order.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub chi_parts: Option<Vec<String>>,
    pub eps: String,
    pub floor_c: String,
    pub schedule: Vec<String>,
    pub moduli_note: String,
    pub levels: Vec<LevelRecord>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conclusion: Option<Conclusion>,
    pub digest: String,
}

impl Certificate {
    pub fn all_checks_passed(&self) -> bool {
        self.levels
            .iter()
            .flat_map(|l| &l.checks)
            .all(CheckRecord::passed)
    }
}

/// SHA-256 over the compact serialization with the digest field blanked.
pub fn certificate_digest(cert: &Certificate) -> String {
    let mut plain = cert.clone();
    plain.digest = String::new();
    let bytes = serde_json::to_vec(&plain).expect("certificate serializes");
    let hash = Sha256::digest(&bytes);
    hash.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_json(cert: &Certificate) -> String {
    let mut s = serde_json::to_string_pretty(cert).expect("certificate serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<Certificate> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format {
        msg: format!("not valid JSON: {e}"),
    })?;
    match value.get("schema").and_then(|v| v.as_str()) {
        Some(SCHEMA) => {}
        Some(other) => {
            return Err(Error::Format {
                msg: format!("unsupported schema {other:?}"),
            })
        }
        None => {
            return Err(Error::Format {
                msg: "missing schema field".into(),
            })
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Format {
        msg: format!("malformed certificate: {e}"),
    })
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::CertificateInvalid { msg: msg.into() }
}

fn parse_u64(s: &str, what: &str) -> Result<u64> {
    s.parse()
        .map_err(|_| invalid(format!("{what} {s:?} is not a number")))
}

fn parse_factors(rec: &LevelRecord) -> Result<Vec<u64>> {
    rec.factors
        .iter()
        .map(|f| {
            let m = parse_u64(f, "factor")?;
            if m < 2 {
                return Err(invalid(format!("factor {m} is not a modulus")));
            }
            Ok(m)
        })
        .collect()
}

fn sampling_of(check: &CheckRecord) -> Result<(u64, u64)> {
    let samples = check
        .samples
        .as_deref()
        .ok_or_else(|| invalid(format!("{} lacks a sample count", check.name)))?;
    let seed = check
        .seed
        .as_deref()
        .ok_or_else(|| invalid(format!("{} lacks a seed", check.name)))?;
    Ok((
        parse_u64(samples, "sample count")?,
        parse_u64(seed, "seed")?,
    ))
}

struct ParsedLevel {
    module: FiniteModule,
    map: StructuredMap,
    new_factors: Vec<u64>,
    labels: Vec<Option<i64>>,
}

/// Re-derives every claim a certificate makes.
///
/// Cheap re-derivations run first and name the field they contradict;
/// the digest then covers everything else byte for byte; the recorded
/// checks are replayed last, with their own seeds, and must reproduce
/// their recorded status. Replay assumes the verifier's budget matches
/// the producer's.
pub fn verify_certificate(cert: &Certificate, budget: &Budget) -> Result<()> {
    if cert.schema != SCHEMA {
        return Err(Error::Format {
            msg: format!("unsupported schema {:?}", cert.schema),
        });
    }
    let toy = match cert.mode.as_str() {
        "toy" => true,
        "exhaustive" | "sampled" => false,
        other => return Err(invalid(format!("unknown mode {other:?}"))),
    };
    let phi = parse_form(&cert.phi)
        .map_err(|_| invalid(format!("the form {:?} does not parse", cert.phi)))?;
    let upsilons = cert
        .upsilons
        .iter()
        .map(|u| parse_form(u).map_err(|_| invalid(format!("the form {u:?} does not parse"))))
        .collect::<Result<Vec<_>>>()?;
    if upsilons.is_empty() {
        return Err(invalid("no surjective forms recorded"));
    }
    for u in &upsilons {
        let hyp = check_hypotheses(u, &phi, budget)?;
        if !hyp.zero_sum_in_upsilon || !hyp.zero_sum_avoided_by_phi {
            return Err(invalid(format!(
                "the pair ({u}, {}) violates the subset-sum hypotheses",
                cert.phi
            )));
        }
    }
    if let Some(parts) = &cert.chi_parts {
        let parsed = parts
            .iter()
            .map(|p| parse_form(p).map_err(|_| invalid(format!("the part {p:?} does not parse"))))
            .collect::<Result<Vec<_>>>()?;
        let glued = LinearForm::concat(&parsed)?;
        if glued != phi {
            return Err(invalid("the recorded parts do not concatenate to the form"));
        }
    }
    let eps = parse_rational(&cert.eps).map_err(|_| invalid("the bound does not parse"))?;
    let floor_c = parse_u64(&cert.floor_c, "floor")?;
    parse_u64(&cert.seed, "seed")?;
    let levels_r = cert
        .schedule
        .iter()
        .map(|s| {
            parse_rational(s).map_err(|_| invalid(format!("schedule entry {s:?} does not parse")))
        })
        .collect::<Result<Vec<_>>>()?;
    let schedule = EpsilonSchedule::custom(eps.clone(), levels_r)
        .map_err(|_| invalid("the schedule is not strictly increasing below the bound"))?;
    if schedule.depth() != phi.arity() {
        return Err(invalid("the schedule does not have one level per variable"));
    }
    if cert.levels.is_empty() || cert.levels.len() > phi.arity() {
        return Err(invalid("the level count does not fit the form"));
    }
    for (i, rec) in cert.levels.iter().enumerate() {
        if rec.level != (i + 1) as u32 {
            return Err(invalid(format!("level records out of order at index {i}")));
        }
        let required: &[&str] = if i == 0 {
            &[
                CHECK_LABELED_RESIDUE,
                CHECK_ZERO_COORDINATE,
                CHECK_LEVEL_BOUND,
                CHECK_LEVEL_IN_IMAGE,
            ]
        } else {
            &[
                CHECK_PAIR_ORACLE,
                CHECK_COMMUTING,
                CHECK_COVERING_SAMPLED,
                CHECK_COVERING_LOW,
                CHECK_COUNTING,
            ]
        };
        for name in required {
            if !rec.checks.iter().any(|c| c.name == *name) {
                return Err(invalid(format!(
                    "level {} lacks the {name} record",
                    rec.level
                )));
            }
        }
    }

    // ---- structural and arithmetic re-derivation ----
    let phi_profile = subset_sums(&phi, budget)?;
    let mut labeled: std::collections::BTreeSet<i64> = phi_profile.sums.clone();
    labeled.insert(0);
    let sums_sorted: Vec<i64> = labeled.into_iter().collect();
    let mut avoid = phi_profile.nonzero_magnitudes();
    for u in &upsilons {
        avoid.extend(subset_sums(u, budget)?.nonzero_magnitudes());
    }

    let mut parsed: Vec<ParsedLevel> = Vec::with_capacity(cert.levels.len());
    for (i, rec) in cert.levels.iter().enumerate() {
        let new_factors = parse_factors(rec)?;
        let labels: Vec<Option<i64>>;
        let module;
        if i == 0 {
            let recorded_labels = rec
                .factor_labels
                .as_ref()
                .ok_or_else(|| invalid("the first level must label its factors"))?;
            if recorded_labels.len() != new_factors.len() {
                return Err(invalid("one label slot per factor is required"));
            }
            let expected: Vec<Option<i64>> = if toy {
                crate::construction::steps::validate_toy_choice(&new_factors, &avoid)?;
                (0..new_factors.len())
                    .map(|k| sums_sorted.get(k).copied())
                    .collect()
            } else {
                let need = BigRational::from_integer(BigInt::from(sums_sorted.len() as u64))
                    / schedule.level(1)?;
                let bound = need.floor().to_integer().to_u64().ok_or(Error::Overflow {
                    context: "initial factor bound".into(),
                })?;
                let derived =
                    select_coprime_primes(&avoid, &[], bound.max(floor_c), sums_sorted.len());
                if new_factors != derived {
                    return Err(invalid(
                        "the first level's factors do not match the deterministic selection",
                    ));
                }
                sums_sorted.iter().map(|&s| Some(s)).collect()
            };
            let rendered: Vec<Option<String>> =
                expected.iter().map(|l| l.map(|s| s.to_string())).collect();
            if recorded_labels != &rendered {
                return Err(invalid("the factor labels do not match the subset sums"));
            }
            labels = expected;
            module = FiniteModule::new(new_factors.clone())?;
            match &rec.map {
                MapDescription::CoordinateScale { multipliers } => {
                    let derived = crate::construction::steps::derive_initial_multipliers(
                        &new_factors,
                        &labels,
                        phi.coefficient_total()?,
                    )?;
                    let rendered: Vec<String> = derived.iter().map(u64::to_string).collect();
                    if multipliers != &rendered {
                        return Err(invalid("the initial map does not cancel its labeled sums"));
                    }
                }
                _ => return Err(invalid("the first level must scale coordinates")),
            }
        } else {
            if rec.factor_labels.is_some() {
                return Err(invalid("only the first level labels factors"));
            }
            let prev = &parsed[i - 1];
            let enumeration =
                AdmissibleEnumeration::new(&phi, &prev.module, rec.level as usize, budget)?;
            let n = enumeration
                .count()
                .to_u64()
                .filter(|&n| n <= budget.pair_factors)
                .ok_or_else(|| Error::BudgetExceeded {
                    what: format!("allocating one factor per level-{} pair", rec.level),
                    needed: enumeration.count().to_string(),
                    cap: budget.pair_factors.to_string(),
                })?;
            if rec.pair_count.as_deref() != Some(enumeration.count().to_string().as_str()) {
                return Err(invalid(
                    "the recorded pair count differs from the enumeration",
                ));
            }
            let descriptions =
                description_count(&phi, &prev.module, rec.level as usize).to_string();
            if rec.description_count.as_deref() != Some(descriptions.as_str()) {
                return Err(invalid("the recorded description count is wrong"));
            }
            let delta =
                schedule.level(rec.level as usize)? - schedule.level(rec.level as usize - 1)?;
            let bound = (BigRational::from_integer(BigInt::from(n)) / delta)
                .floor()
                .to_integer()
                .to_u64()
                .ok_or(Error::Overflow {
                    context: "inductive factor bound".into(),
                })?;
            let mut avoid_here = avoid.clone();
            avoid_here.extend(prev.module.factors().iter().copied());
            let derived = select_coprime_primes(&avoid_here, &[], bound, n as usize);
            if new_factors != derived {
                return Err(invalid(format!(
                    "level {} factors do not match the deterministic selection",
                    rec.level
                )));
            }
            match &rec.map {
                MapDescription::Inductive {
                    base,
                    prefix_rank,
                    level,
                    ..
                } => {
                    if **base != cert.levels[i - 1].map {
                        return Err(invalid("the map does not extend the previous level's map"));
                    }
                    if *prefix_rank != prev.module.rank() || *level != rec.level as usize {
                        return Err(invalid("the map extends the wrong module or level"));
                    }
                }
                _ => return Err(invalid("an inductive level needs an inductive map")),
            }
            let mut all = prev.module.factors().to_vec();
            all.extend_from_slice(&new_factors);
            module = FiniteModule::new(all)?;
            labels = prev.labels.clone();
            let counting = check_counting(
                &module.cardinality(),
                &new_factors,
                schedule.level(rec.level as usize - 1)?,
                schedule.level(rec.level as usize)?,
            )?;
            let recorded = rec
                .checks
                .iter()
                .find(|c| c.name == CHECK_COUNTING)
                .ok_or_else(|| invalid("the counting inequality record is missing"))?;
            if recorded.status != counting.status {
                return Err(invalid("the counting inequality does not re-derive"));
            }
        }
        if module.cardinality().to_string() != rec.cardinality {
            return Err(invalid(format!(
                "level {} cardinality is not the product of the factors",
                rec.level
            )));
        }
        // rebuilds the evaluator and cross-checks the recorded pair tuples
        let map = StructuredMap::from_description(&rec.map, &phi, &module, budget)?;
        parsed.push(ParsedLevel {
            module,
            map,
            new_factors,
            labels,
        });
    }

    let last = parsed.last().expect("at least one level");
    if let Some(conc) = &cert.conclusion {
        if toy {
            return Err(invalid("toy runs draw no conclusion"));
        }
        if conc.cardinality != last.module.cardinality().to_string() {
            return Err(invalid(
                "the concluded cardinality is not the final module's",
            ));
        }
        if conc.exceeds_floor != (last.module.cardinality() > BigUint::from(floor_c)) {
            return Err(invalid("the floor comparison is wrong"));
        }
        let exact = [
            conc.set_size.is_some(),
            conc.image_size.is_some(),
            conc.image_bound_holds.is_some(),
            conc.surjectivity_verified.is_some(),
        ];
        if cert.mode == "exhaustive" {
            if exact.iter().any(|p| !p) {
                return Err(invalid("an exhaustive conclusion must state exact sizes"));
            }
        } else if exact.iter().any(|p| *p) {
            return Err(invalid("a sampled conclusion cannot state exact sizes"));
        }
    } else if cert.mode != "toy" {
        return Err(invalid("a finished run must record a conclusion"));
    }

    // ---- integrity ----
    if certificate_digest(cert) != cert.digest {
        return Err(invalid("the integrity digest does not match"));
    }

    // ---- replay of the recorded checks ----
    for (i, rec) in cert.levels.iter().enumerate() {
        let here = &parsed[i];
        if i == 0 {
            let lvl1 = level_image(
                &phi,
                &here.module,
                |p| {
                    here.map
                        .eval(&here.module, p)
                        .expect("map evaluates on its own module")
                },
                1,
                budget,
            )?;
            if rec.image_count.as_deref() != Some(lvl1.len().to_string().as_str()) {
                return Err(invalid("the recorded level-1 image size is wrong"));
            }
            let fully_labeled = here
                .labels
                .iter()
                .copied()
                .eq(sums_sorted.iter().map(|&s| Some(s)));
            for check in &rec.checks {
                let fresh = match check.name.as_str() {
                    CHECK_LABELED_RESIDUE => {
                        check_labeled_residue(&phi, &here.module, &here.map, &here.labels, budget)?
                    }
                    CHECK_ZERO_COORDINATE => check_zero_coordinate(&lvl1, fully_labeled),
                    CHECK_LEVEL_BOUND => check_level_bound(
                        &lvl1.len(),
                        schedule.level(1)?,
                        &here.module.cardinality(),
                        toy,
                    ),
                    CHECK_LEVEL_IN_IMAGE => {
                        check_level_in_image(&phi, &here.module, &here.map, &lvl1, budget)?
                    }
                    other => return Err(invalid(format!("unknown check {other:?}"))),
                };
                if fresh.status != check.status {
                    return Err(invalid(format!(
                        "the {} check replays to {}, not {}",
                        check.name, fresh.status, check.status
                    )));
                }
            }
        } else {
            let prev = &parsed[i - 1];
            let enumeration =
                AdmissibleEnumeration::new(&phi, &prev.module, rec.level as usize, budget)?;
            for check in &rec.checks {
                let fresh = match check.name.as_str() {
                    CHECK_PAIR_ORACLE => {
                        check_pair_oracle(&phi, &prev.module, &enumeration, budget)?
                    }
                    CHECK_COMMUTING => {
                        let (samples, seed) = sampling_of(check)?;
                        check_commuting(
                            &here.module,
                            &here.map,
                            &prev.module,
                            &prev.map,
                            samples,
                            seed,
                        )?
                    }
                    CHECK_COVERING_SAMPLED => {
                        if check.status == "skipped" {
                            check_covering_sampled(
                                &phi,
                                &here.module,
                                &here.map,
                                &enumeration,
                                0,
                                0,
                            )?
                        } else {
                            let (samples, seed) = sampling_of(check)?;
                            check_covering_sampled(
                                &phi,
                                &here.module,
                                &here.map,
                                &enumeration,
                                samples,
                                seed,
                            )?
                        }
                    }
                    CHECK_COVERING_LOW => {
                        let (samples, seed) = if check.status == "skipped" {
                            (0, 0)
                        } else {
                            sampling_of(check)?
                        };
                        check_covering_low(
                            &phi,
                            &here.module,
                            &here.map,
                            &prev.module,
                            &prev.map,
                            rec.level as usize - 1,
                            samples,
                            seed,
                            budget,
                        )?
                    }
                    CHECK_COVERING_EXHAUSTIVE => check_covering_exhaustive(
                        &phi,
                        &here.module,
                        &here.map,
                        &prev.module,
                        &prev.map,
                        &enumeration,
                        budget,
                    )?,
                    CHECK_COUNTING => check_counting(
                        &here.module.cardinality(),
                        &here.new_factors,
                        schedule.level(rec.level as usize - 1)?,
                        schedule.level(rec.level as usize)?,
                    )?,
                    other => return Err(invalid(format!("unknown check {other:?}"))),
                };
                if fresh.status != check.status {
                    return Err(invalid(format!(
                        "the {} check replays to {}, not {}",
                        check.name, fresh.status, check.status
                    )));
                }
            }
        }
    }

    // ---- conclusion replay ----
    if let Some(conc) = &cert.conclusion {
        if cert.mode == "exhaustive" {
            let a = build_set(&last.module, &last.map, budget)?;
            if conc.set_size.as_deref() != Some(a.len().to_string().as_str()) {
                return Err(invalid("the recorded set size is wrong"));
            }
            let img = image(&phi, &a, budget)?;
            if conc.image_size.as_deref() != Some(img.len().to_string().as_str()) {
                return Err(invalid("the recorded image size is wrong"));
            }
            let holds = count_below(&img.len(), &eps, &last.module.cardinality());
            if conc.image_bound_holds != Some(holds) {
                return Err(invalid("the image bound flag does not re-derive"));
            }
            let mut surjective = true;
            for u in &upsilons {
                surjective &= is_surjective(u, &a, false, budget)?;
            }
            if conc.surjectivity_verified != Some(surjective) {
                return Err(invalid("the surjectivity flag does not re-derive"));
            }
        }
    }
    Ok(())
}
