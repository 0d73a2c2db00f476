//! The initial and inductive steps that grow (M_ℓ, f_ℓ) level by level.
//!
//! The initial module takes one cyclic factor per element of S(Φ) ∪ {0},
//! each factor m_s large enough that |Φ^{(1)}(A_1)| < ε_1|M_1|, and scales
//! coordinate s by −s·(φ*)^{-1} so that every level-1 value
//! w = φ*·f(x) + s·x vanishes on the factor labeled s. The inductive step
//! adjoins one factor per admissible pair of the next level; the extended
//! map cancels each pair on its own factor, so values that acquire a new
//! representation level are confined to a union of hyperplane slices whose
//! density is controlled by the factor sizes.
//!
//! Every step emits a [`LevelRecord`] whose checks re-derive the claims
//! with the stated seeds, so a verifier can replay them from the record
//! alone.

use std::collections::BTreeSet;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::admissible::{
    brute_force_pairs, description_count, AdmissibleEnumeration, AdmissiblePair,
};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::{
    check_hypotheses, lex_least_zero_subset, select_coprime_primes, subset_sums, LinearForm,
};
use crate::images::{image, level_image, Representation, SubsetOfModule};
use crate::modules::{mod_inverse, Element, FiniteModule};
use crate::primes::mul_mod;
use crate::rational::{count_below, format_rational};

use super::certificate::{CheckRecord, LevelRecord};
use super::map::{InductiveMap, StructuredMap};
use super::schedule::EpsilonSchedule;

pub(crate) const CHECK_LABELED_RESIDUE: &str = "labeled_residue_zero";
pub(crate) const CHECK_ZERO_COORDINATE: &str = "zero_coordinate_scan";
pub(crate) const CHECK_LEVEL_BOUND: &str = "level_bound";
pub(crate) const CHECK_LEVEL_IN_IMAGE: &str = "level_image_in_image";
pub(crate) const CHECK_PAIR_ORACLE: &str = "pair_count_oracle";
pub(crate) const CHECK_COMMUTING: &str = "commuting_square";
pub(crate) const CHECK_COVERING_SAMPLED: &str = "covering_sampled";
pub(crate) const CHECK_COVERING_LOW: &str = "covering_low_level";
pub(crate) const CHECK_COVERING_EXHAUSTIVE: &str = "covering_exhaustive";
pub(crate) const CHECK_COUNTING: &str = "counting_inequality";

const COMMUTE_SAMPLES: u64 = 1000;
const LOW_LEVEL_SAMPLES: u64 = 50;
/// Oracle cross-checks only run below this module size.
const ORACLE_CARD_CAP: u64 = 40;
const ORACLE_ARITY_CAP: usize = 3;

/// How a construction run treats the parts it cannot enumerate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Everything enumerated; the conclusion states the exact image size.
    Exhaustive,
    /// Real-scale factors, randomized spot checks, no exact conclusion.
    Sampled,
    /// Hand-picked small factors so the mechanics stay enumerable; the
    /// run demonstrates the bookkeeping and claims nothing quantitative.
    Toy,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Exhaustive => "exhaustive",
            Mode::Sampled => "sampled",
            Mode::Toy => "toy",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "exhaustive" => Ok(Mode::Exhaustive),
            "sampled" => Ok(Mode::Sampled),
            "toy" => Ok(Mode::Toy),
            other => Err(Error::Parse {
                position: 0,
                msg: format!("unknown mode {other:?}"),
            }),
        }
    }
}

/// The construction after ℓ steps: M_ℓ, f_ℓ, and the factor labels chosen
/// at level 1 (None for a factor with no subset sum of its own).
#[derive(Debug, Clone)]
pub struct StepState {
    pub module: FiniteModule,
    pub map: StructuredMap,
    pub level: usize,
    pub labels: Vec<Option<i64>>,
}

/// A(M, f) = {f(x) : x ∈ M} ∪ {f(x) + x : x ∈ M}.
pub fn build_set(
    module: &FiniteModule,
    f: &StructuredMap,
    budget: &Budget,
) -> Result<SubsetOfModule> {
    let card = module.cardinality();
    if card.to_u64().filter(|&c| c <= budget.work).is_none() {
        return Err(Error::BudgetExceeded {
            what: "enumerating the module to build A(M, f)".into(),
            needed: card.to_string(),
            cap: budget.work.to_string(),
        });
    }
    let mut a = SubsetOfModule::empty(module, budget);
    for x in module.elements() {
        let fx = f.eval(module, &x)?;
        a.insert(module.add(&fx, &x))?;
        a.insert(fx)?;
    }
    Ok(a)
}

/// The unique y with k·y = t, coordinatewise; needs gcd(k, m_i) = 1.
fn scalar_solve(module: &FiniteModule, k: i64, target: &Element) -> Result<Element> {
    let coords = target
        .coords()
        .iter()
        .zip(module.factors())
        .map(|(&t, &m)| Ok(mul_mod(mod_inverse(k, m)?, t, m)))
        .collect::<Result<Vec<u64>>>()?;
    Ok(Element(coords))
}

/// An explicit representation of `x` as Υ applied to A(M, f).
///
/// Take the least zero-sum index set I of Υ and its first index i; put
/// f(x̃) + x̃ in slot i, f(x̃) in the rest of I, and f(0) elsewhere. The
/// total collapses to υ_i·x̃ + s·f(0) with s the sum over the complement,
/// so x̃ = υ_i^{-1}(x − s·f(0)) lands on x. Both inversions need every
/// nonzero subset sum of Υ to be coprime to every factor, which is
/// exactly how the factors are chosen.
pub fn surjectivity_witness(
    upsilon: &LinearForm,
    module: &FiniteModule,
    f: &StructuredMap,
    x: &Element,
    budget: &Budget,
) -> Result<Representation> {
    if !module.contains(x) {
        return Err(Error::ShapeMismatch {
            msg: format!("target {x} does not belong to {module}"),
        });
    }
    let profile = subset_sums(upsilon, budget)?;
    if !profile.contains_zero {
        return Err(Error::HypothesisViolated {
            msg: format!("0 is not a subset sum of {upsilon}"),
        });
    }
    for v in profile.nonzero_magnitudes() {
        for &m in module.factors() {
            if v.gcd(&m) != 1 {
                return Err(Error::HypothesisViolated {
                    msg: format!(
                        "subset sum {v} of {upsilon} shares a factor with the modulus {m}"
                    ),
                });
            }
        }
    }
    let zero_set = lex_least_zero_subset(upsilon, budget)?.expect("0 is a subset sum");
    let anchor = zero_set[0];
    let coeffs = upsilon.coefficients();
    // the complement's sum equals the full sum because I sums to zero
    let s_rest = upsilon.coefficient_total()?;
    let f_zero = f.eval(module, &module.zero())?;
    let shifted = module.sub(x, &module.scalar_mul(s_rest, &f_zero));
    let tilde = scalar_solve(module, coeffs[anchor - 1], &shifted)?;
    let g = upsilon.arity();
    let mut points = Vec::with_capacity(g);
    let mut flags = Vec::with_capacity(g);
    for slot in 1..=g {
        if slot == anchor {
            points.push(tilde.clone());
            flags.push(true);
        } else if zero_set.binary_search(&slot).is_ok() {
            points.push(tilde.clone());
            flags.push(false);
        } else {
            points.push(module.zero());
            flags.push(false);
        }
    }
    let rep = Representation { points, flags };
    let value = rep.evaluate(upsilon, module, |p| {
        f.eval(module, p).expect("map evaluates on its own module")
    });
    if &value != x {
        return Err(Error::HypothesisViolated {
            msg: format!("witness recipe produced {value} instead of {x}"),
        });
    }
    Ok(rep)
}

pub(crate) fn validate_toy_choice(factors: &[u64], avoid: &BTreeSet<u64>) -> Result<()> {
    if factors.is_empty() {
        return Err(Error::ShapeMismatch {
            msg: "at least one toy factor is required".into(),
        });
    }
    for (i, &m) in factors.iter().enumerate() {
        if m < 2 {
            return Err(Error::ShapeMismatch {
                msg: format!("toy factor {m} is not a modulus"),
            });
        }
        for &v in avoid {
            if v.gcd(&m) != 1 {
                return Err(Error::HypothesisViolated {
                    msg: format!("toy factor {m} shares a divisor with the subset sum {v}"),
                });
            }
        }
        for &other in &factors[..i] {
            if other.gcd(&m) != 1 {
                return Err(Error::NotCoprime { a: other, b: m });
            }
        }
    }
    Ok(())
}

/// Nonzero subset-sum magnitudes of Φ and of every Υ; factors must avoid
/// all of their divisors.
fn avoided_magnitudes(
    upsilons: &[LinearForm],
    phi: &LinearForm,
    budget: &Budget,
) -> Result<BTreeSet<u64>> {
    let mut avoid = subset_sums(phi, budget)?.nonzero_magnitudes();
    for u in upsilons {
        avoid.extend(subset_sums(u, budget)?.nonzero_magnitudes());
    }
    Ok(avoid)
}

/// Multiplier −s·(φ*)^{-1} mod m for a labeled factor, 0 for an unlabeled
/// one.
pub(crate) fn derive_initial_multipliers(
    factors: &[u64],
    labels: &[Option<i64>],
    phi_star: i64,
) -> Result<Vec<u64>> {
    factors
        .iter()
        .zip(labels)
        .map(|(&m, &label)| match label {
            None => Ok(0),
            Some(s) => {
                let inv = mod_inverse(phi_star, m)?;
                let neg_s = (-s).rem_euclid(m as i64) as u64;
                Ok(mul_mod(neg_s, inv, m))
            }
        })
        .collect()
}

/// Builds M_1 and f_1.
///
/// `toy_factors` overrides the sizing rule with hand-picked moduli; subset
/// sums are then assigned to factors in sorted order until one list runs
/// out, and the density checks that depend on the sizing rule are recorded
/// as skipped.
pub fn initial_step(
    upsilons: &[LinearForm],
    phi: &LinearForm,
    schedule: &EpsilonSchedule,
    floor_c: u64,
    toy_factors: Option<&[u64]>,
    budget: &Budget,
) -> Result<(StepState, LevelRecord)> {
    if upsilons.is_empty() {
        return Err(Error::ShapeMismatch {
            msg: "at least one surjective form is required".into(),
        });
    }
    let h = phi.arity();
    if schedule.depth() != h {
        return Err(Error::ShapeMismatch {
            msg: format!(
                "schedule has {} levels for a form in {h} variables",
                schedule.depth()
            ),
        });
    }
    for u in upsilons {
        let hyp = check_hypotheses(u, phi, budget)?;
        if !hyp.zero_sum_in_upsilon {
            return Err(Error::HypothesisViolated {
                msg: format!("0 is not a subset sum of {u}"),
            });
        }
        if !hyp.zero_sum_avoided_by_phi {
            return Err(Error::HypothesisViolated {
                msg: format!("0 is a subset sum of {phi}"),
            });
        }
    }
    let phi_profile = subset_sums(phi, budget)?;
    let mut labeled: BTreeSet<i64> = phi_profile.sums.clone();
    labeled.insert(0);
    let sums_sorted: Vec<i64> = labeled.into_iter().collect();
    let avoid = avoided_magnitudes(upsilons, phi, budget)?;
    let eps_1 = schedule.level(1)?;
    let (factors, labels): (Vec<u64>, Vec<Option<i64>>) = match toy_factors {
        Some(tf) => {
            validate_toy_choice(tf, &avoid)?;
            let labels = (0..tf.len()).map(|i| sums_sorted.get(i).copied()).collect();
            (tf.to_vec(), labels)
        }
        None => {
            // every factor must exceed (|S(Φ)| + 1)/ε_1 and the floor c
            let need = BigRational::from_integer(BigInt::from(sums_sorted.len() as u64)) / eps_1;
            let bound = need.floor().to_integer().to_u64().ok_or(Error::Overflow {
                context: "initial factor bound".into(),
            })?;
            let primes = select_coprime_primes(&avoid, &[], bound.max(floor_c), sums_sorted.len());
            (primes, sums_sorted.iter().map(|&s| Some(s)).collect())
        }
    };
    let module = FiniteModule::new(factors.clone())?;
    let phi_star = phi.coefficient_total()?;
    let multipliers = derive_initial_multipliers(&factors, &labels, phi_star)?;
    let map = StructuredMap::CoordinateScale { multipliers };

    let mut checks = vec![check_labeled_residue(phi, &module, &map, &labels, budget)?];
    let lvl1 = level_image(
        phi,
        &module,
        |p| {
            map.eval(&module, p)
                .expect("map evaluates on its own module")
        },
        1,
        budget,
    )?;
    let fully_labeled = labels
        .iter()
        .copied()
        .eq(sums_sorted.iter().map(|&s| Some(s)));
    checks.push(check_zero_coordinate(&lvl1, fully_labeled));
    checks.push(check_level_bound(
        &lvl1.len(),
        eps_1,
        &module.cardinality(),
        toy_factors.is_some(),
    ));
    checks.push(check_level_in_image(phi, &module, &map, &lvl1, budget)?);

    let record = LevelRecord {
        level: 1,
        factors: factors.iter().map(u64::to_string).collect(),
        factor_labels: Some(labels.iter().map(|l| l.map(|s| s.to_string())).collect()),
        cardinality: module.cardinality().to_string(),
        map: map.describe(),
        pair_count: None,
        description_count: None,
        image_count: Some(lvl1.len().to_string()),
        checks,
    };
    let state = StepState {
        module,
        map,
        level: 1,
        labels,
    };
    Ok((state, record))
}

/// Extends (M_ℓ, f_ℓ) to (M_{ℓ+1}, f_{ℓ+1}) with one new factor per
/// admissible pair of level ℓ+1.
#[allow(clippy::too_many_arguments)]
pub fn inductive_step(
    state: &StepState,
    upsilons: &[LinearForm],
    phi: &LinearForm,
    schedule: &EpsilonSchedule,
    mode: Mode,
    sample_size: u64,
    seed: u64,
    budget: &Budget,
) -> Result<(StepState, LevelRecord)> {
    let ell = state.level;
    let h = phi.arity();
    if ell >= h {
        return Err(Error::ShapeMismatch {
            msg: format!("level {ell} is already final for a form in {h} variables"),
        });
    }
    let next = ell + 1;
    let enumeration = AdmissibleEnumeration::new(phi, &state.module, next, budget)?;
    let n_big = enumeration.count().clone();
    let n = n_big
        .to_u64()
        .filter(|&n| n <= budget.pair_factors)
        .ok_or_else(|| Error::BudgetExceeded {
            what: format!("allocating one factor per level-{next} pair"),
            needed: n_big.to_string(),
            cap: budget.pair_factors.to_string(),
        })?;
    let eps_lo = schedule.level(ell)?;
    let eps_hi = schedule.level(next)?;
    let delta = eps_hi - eps_lo;
    let mut avoid = avoided_magnitudes(upsilons, phi, budget)?;
    avoid.extend(state.module.factors().iter().copied());
    let bound = (BigRational::from_integer(BigInt::from(n)) / delta)
        .floor()
        .to_integer()
        .to_u64()
        .ok_or(Error::Overflow {
            context: "inductive factor bound".into(),
        })?;
    let new_factors = select_coprime_primes(&avoid, &[], bound, n as usize);
    let mut factors = state.module.factors().to_vec();
    factors.extend_from_slice(&new_factors);
    let module = FiniteModule::new(factors)?;
    let map = StructuredMap::Inductive(Box::new(InductiveMap::new(
        state.map.clone(),
        state.module.clone(),
        enumeration.clone(),
    )?));

    let mut checks = vec![
        check_pair_oracle(phi, &state.module, &enumeration, budget)?,
        check_commuting(
            &module,
            &map,
            &state.module,
            &state.map,
            COMMUTE_SAMPLES,
            derive_seed(seed, next, CHECK_COMMUTING),
        )?,
        check_covering_sampled(
            phi,
            &module,
            &map,
            &enumeration,
            sample_size,
            derive_seed(seed, next, CHECK_COVERING_SAMPLED),
        )?,
        check_covering_low(
            phi,
            &module,
            &map,
            &state.module,
            &state.map,
            ell,
            LOW_LEVEL_SAMPLES,
            derive_seed(seed, next, CHECK_COVERING_LOW),
            budget,
        )?,
    ];
    if mode == Mode::Exhaustive {
        checks.push(check_covering_exhaustive(
            phi,
            &module,
            &map,
            &state.module,
            &state.map,
            &enumeration,
            budget,
        )?);
    }
    checks.push(check_counting(
        &module.cardinality(),
        &new_factors,
        eps_lo,
        eps_hi,
    )?);

    let record = LevelRecord {
        level: next as u32,
        factors: new_factors.iter().map(u64::to_string).collect(),
        factor_labels: None,
        cardinality: module.cardinality().to_string(),
        map: map.describe(),
        pair_count: Some(n_big.to_string()),
        description_count: Some(description_count(phi, &state.module, next).to_string()),
        image_count: None,
        checks,
    };
    let new_state = StepState {
        module,
        map,
        level: next,
        labels: state.labels.clone(),
    };
    Ok((new_state, record))
}

/// Per-check seed, split off the run seed so checks are independent and
/// individually replayable.
pub(crate) fn derive_seed(seed: u64, level: usize, tag: &str) -> u64 {
    let mut acc = seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(level as u64 + 1);
    for b in tag.bytes() {
        acc = (acc.rotate_left(7) ^ u64::from(b)).wrapping_mul(0x100_0000_01b3);
    }
    acc
}

// ---- Level-1 checks ----

/// Exhaustively verifies that w = φ*·f(x) + s·x vanishes on the factor
/// labeled s, for every x and every subset sum s that carries a label.
pub(crate) fn check_labeled_residue(
    phi: &LinearForm,
    module: &FiniteModule,
    map: &StructuredMap,
    labels: &[Option<i64>],
    budget: &Budget,
) -> Result<CheckRecord> {
    let h = phi.arity();
    budget.check_arity(h)?;
    let card = module.cardinality().to_u64().ok_or(Error::BudgetExceeded {
        what: "scanning labeled placements".into(),
        needed: module.cardinality().to_string(),
        cap: budget.work.to_string(),
    })?;
    budget.check_work(card.saturating_mul(1 << h), "scanning labeled placements")?;
    let coeffs = phi.coefficients();
    let phi_star = phi.coefficient_total()?;
    let mut checked: u64 = 0;
    for x in module.elements() {
        let fx = map.eval(module, &x)?;
        let base = module.scalar_mul(phi_star, &fx);
        for lambda in 0..1u64 << h {
            let s: i64 = (0..h)
                .filter(|j| lambda >> j & 1 == 1)
                .map(|j| coeffs[j])
                .sum();
            if let Some(k) = labels.iter().position(|&l| l == Some(s)) {
                let w = module.add(&base, &module.scalar_mul(s, &x));
                if w.coords()[k] != 0 {
                    return Ok(CheckRecord::failed(
                        CHECK_LABELED_RESIDUE,
                        format!("w = {w} at x = {x}, mask {lambda} does not vanish on factor {k}"),
                    ));
                }
                checked += 1;
            }
        }
    }
    Ok(CheckRecord::verified(
        CHECK_LABELED_RESIDUE,
        format!("{checked} placements project to zero on their labeled factor"),
    ))
}

/// Scans the level-1 image for an element with no zero coordinate. Only
/// meaningful when every subset sum has a labeled factor.
pub(crate) fn check_zero_coordinate(lvl1: &SubsetOfModule, fully_labeled: bool) -> CheckRecord {
    if !fully_labeled {
        return CheckRecord::skipped(
            CHECK_ZERO_COORDINATE,
            "not every subset sum has a labeled factor, so no coordinate is forced to vanish"
                .into(),
        );
    }
    let elems = lvl1.sorted_elements();
    for w in &elems {
        if !w.coords().contains(&0) {
            return CheckRecord::failed(
                CHECK_ZERO_COORDINATE,
                format!("{w} lies in the level-1 image but has no zero coordinate"),
            );
        }
    }
    CheckRecord::verified(
        CHECK_ZERO_COORDINATE,
        format!("all {} level-1 values have a zero coordinate", elems.len()),
    )
}

/// |Φ^{(1)}(A_1)| < ε_1·|M_1|, exact.
pub(crate) fn check_level_bound(
    image_count: &BigUint,
    eps_1: &BigRational,
    card: &BigUint,
    toy: bool,
) -> CheckRecord {
    if toy {
        return CheckRecord::skipped(
            CHECK_LEVEL_BOUND,
            "toy factors are hand-picked, not sized for the density bound".into(),
        );
    }
    let ok = count_below(image_count, eps_1, card);
    let detail = format!(
        "|level-1 image| = {image_count} against {}·{card}",
        format_rational(eps_1)
    );
    if ok {
        CheckRecord::verified(CHECK_LEVEL_BOUND, detail)
    } else {
        CheckRecord::failed(CHECK_LEVEL_BOUND, detail)
    }
}

/// Φ^{(1)}(A_1) ⊆ Φ(A_1), with Φ(A_1) computed by the sumset engine.
pub(crate) fn check_level_in_image(
    phi: &LinearForm,
    module: &FiniteModule,
    map: &StructuredMap,
    lvl1: &SubsetOfModule,
    budget: &Budget,
) -> Result<CheckRecord> {
    let a = build_set(module, map, budget)?;
    let img = image(phi, &a, budget)?;
    let detail = format!(
        "|A| = {}, |Φ(A)| = {}, level-1 image of {} values",
        a.len(),
        img.len(),
        lvl1.len()
    );
    if lvl1.is_subset(&img) {
        Ok(CheckRecord::verified(CHECK_LEVEL_IN_IMAGE, detail))
    } else {
        Ok(CheckRecord::failed(
            CHECK_LEVEL_IN_IMAGE,
            format!("{detail}; containment fails"),
        ))
    }
}

// ---- Inductive checks ----

/// Streams the enumeration against the brute-force oracle on small
/// modules.
pub(crate) fn check_pair_oracle(
    phi: &LinearForm,
    prefix: &FiniteModule,
    enumeration: &AdmissibleEnumeration,
    budget: &Budget,
) -> Result<CheckRecord> {
    let small = prefix
        .cardinality()
        .to_u64()
        .is_some_and(|c| c <= ORACLE_CARD_CAP);
    if !small || phi.arity() > ORACLE_ARITY_CAP {
        return Ok(CheckRecord::skipped(
            CHECK_PAIR_ORACLE,
            format!(
                "oracle runs only for modules of at most {ORACLE_CARD_CAP} elements and forms in at most {ORACLE_ARITY_CAP} variables"
            ),
        ));
    }
    let oracle = brute_force_pairs(phi, prefix, enumeration.level(), budget)?;
    let streamed: BTreeSet<AdmissiblePair> = enumeration.iter()?.collect();
    if streamed == oracle && BigUint::from(oracle.len()) == *enumeration.count() {
        Ok(CheckRecord::verified(
            CHECK_PAIR_ORACLE,
            format!("{} streamed pairs match the brute-force set", oracle.len()),
        ))
    } else {
        Ok(CheckRecord::failed(
            CHECK_PAIR_ORACLE,
            format!(
                "streamed {} pairs ({} counted), oracle found {}",
                streamed.len(),
                enumeration.count(),
                oracle.len()
            ),
        ))
    }
}

/// π ∘ f_{ℓ+1} = f_ℓ ∘ π at random points of the extended module.
pub(crate) fn check_commuting(
    module: &FiniteModule,
    map: &StructuredMap,
    prefix: &FiniteModule,
    base: &StructuredMap,
    samples: u64,
    seed: u64,
) -> Result<CheckRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prefix_rank = prefix.rank();
    for _ in 0..samples {
        let x = module.random_element(&mut rng);
        let lhs = module.project_prefix(prefix_rank, &map.eval(module, &x)?)?;
        let y = module.project_prefix(prefix_rank, &x)?;
        let rhs = base.eval(prefix, &y)?;
        if lhs != rhs {
            return Ok(CheckRecord::failed(
                CHECK_COMMUTING,
                format!("projection of f({x}) is {lhs}, but f of the projection is {rhs}"),
            )
            .with_sampling(samples, seed));
        }
    }
    Ok(CheckRecord::verified(
        CHECK_COMMUTING,
        format!("projection commutes with the map at {samples} random points"),
    )
    .with_sampling(samples, seed))
}

/// For each value tuple, one surjective (assignment, mask) realizing it.
/// Every tuple has one: its blocks were cut from slot subsets with the
/// masks remembering the flag side.
fn tuple_descriptors(
    phi: &LinearForm,
    enumeration: &AdmissibleEnumeration,
) -> Result<Vec<(Vec<usize>, u32)>> {
    let h = phi.arity();
    let ell = enumeration.level();
    let coeffs = phi.coefficients();
    enumeration
        .tuples()
        .iter()
        .map(|tuple| {
            let mut assign = vec![0usize; h];
            loop {
                let mut hit = vec![false; ell];
                for &a in &assign {
                    hit[a] = true;
                }
                if hit.iter().all(|&b| b) {
                    for lambda in 0..1u32 << h {
                        let mut acc = vec![(0i64, 0i64); ell];
                        for (j, &c) in coeffs.iter().enumerate() {
                            let t = &mut acc[assign[j]];
                            if lambda >> j & 1 == 1 {
                                t.1 += c;
                            } else {
                                t.0 += c;
                            }
                        }
                        if acc == *tuple {
                            return Ok((assign.clone(), lambda));
                        }
                    }
                }
                // odometer over assignments
                let mut pos = h;
                loop {
                    if pos == 0 {
                        return Err(Error::HypothesisViolated {
                            msg: "a value tuple admits no surjective realization; some block sums to zero".into(),
                        });
                    }
                    pos -= 1;
                    assign[pos] += 1;
                    if assign[pos] < ell {
                        break;
                    }
                    assign[pos] = 0;
                }
            }
        })
        .collect()
}

/// Samples level-(ℓ+1) pairs, realizes each as a representation with
/// random lifts, and verifies the value vanishes on the pair's own factor.
pub(crate) fn check_covering_sampled(
    phi: &LinearForm,
    module: &FiniteModule,
    map: &StructuredMap,
    enumeration: &AdmissibleEnumeration,
    samples: u64,
    seed: u64,
) -> Result<CheckRecord> {
    if enumeration.count().to_u64() == Some(0) {
        return Ok(CheckRecord::skipped(
            CHECK_COVERING_SAMPLED,
            "no pairs at this level".into(),
        ));
    }
    let descriptors = tuple_descriptors(phi, enumeration)?;
    let prefix_rank = enumeration.module().rank();
    let new_factors = &module.factors()[prefix_rank..];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let pair = enumeration.sample(&mut rng)?;
        let tuple: Vec<(i64, i64)> = pair
            .alpha()
            .iter()
            .zip(pair.beta())
            .map(|(&a, &b)| (a, b))
            .collect();
        let t_idx =
            enumeration
                .tuples()
                .binary_search(&tuple)
                .map_err(|_| Error::ShapeMismatch {
                    msg: "sampled pair has an unlisted value tuple".into(),
                })?;
        let (assign, lambda) = &descriptors[t_idx];
        let lifts: Vec<Element> = pair
            .support()
            .iter()
            .map(|y| {
                let mut coords = y.coords().to_vec();
                coords.extend(new_factors.iter().map(|&m| rng.gen_range(0..m)));
                Element(coords)
            })
            .collect();
        let f_vals = lifts
            .iter()
            .map(|x| map.eval(module, x))
            .collect::<Result<Vec<_>>>()?;
        let mut w = module.zero();
        for (j, &c) in phi.coefficients().iter().enumerate() {
            let k = assign[j];
            let mut term = f_vals[k].clone();
            if lambda >> j & 1 == 1 {
                term = module.add(&term, &lifts[k]);
            }
            w = module.add(&w, &module.scalar_mul(c, &term));
        }
        let rank = enumeration.rank(&pair)?.to_usize().ok_or(Error::Overflow {
            context: "pair rank".into(),
        })?;
        if w.coords()[prefix_rank + rank] != 0 {
            return Ok(CheckRecord::failed(
                CHECK_COVERING_SAMPLED,
                format!("value {w} of pair {rank} does not vanish on its factor"),
            )
            .with_sampling(samples, seed));
        }
    }
    Ok(CheckRecord::verified(
        CHECK_COVERING_SAMPLED,
        format!("{samples} sampled pair values vanish on their own factors"),
    )
    .with_sampling(samples, seed))
}

/// Representations whose lifts collapse to a single base point stay at
/// level 1; their projections must land in Φ^{(ℓ)}(A_ℓ).
#[allow(clippy::too_many_arguments)]
pub(crate) fn check_covering_low(
    phi: &LinearForm,
    module: &FiniteModule,
    map: &StructuredMap,
    prefix: &FiniteModule,
    base: &StructuredMap,
    ell: usize,
    samples: u64,
    seed: u64,
    budget: &Budget,
) -> Result<CheckRecord> {
    let low = match level_image(
        phi,
        prefix,
        |p| {
            base.eval(prefix, p)
                .expect("map evaluates on its own module")
        },
        ell,
        budget,
    ) {
        Ok(s) => s,
        Err(Error::BudgetExceeded { .. }) => {
            return Ok(CheckRecord::skipped(
                CHECK_COVERING_LOW,
                "the previous module is too large to enumerate its low-level image".into(),
            ));
        }
        Err(e) => return Err(e),
    };
    let h = phi.arity();
    let prefix_rank = prefix.rank();
    let new_factors = &module.factors()[prefix_rank..];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        let y = prefix.random_element(&mut rng);
        let lift = |rng: &mut ChaCha8Rng| {
            let mut coords = y.coords().to_vec();
            coords.extend(new_factors.iter().map(|&m| rng.gen_range(0..m)));
            Element(coords)
        };
        let x0 = lift(&mut rng);
        let mut x1 = lift(&mut rng);
        // distinct lifts exist unless the extension added no coordinates
        for _ in 0..64 {
            if x1 != x0 {
                break;
            }
            x1 = lift(&mut rng);
        }
        let pts = [x0, x1];
        let assign: Vec<usize> = if h < 2 {
            vec![0; h]
        } else {
            loop {
                let a: Vec<usize> = (0..h).map(|_| rng.gen_range(0..2)).collect();
                if a.contains(&0) && a.contains(&1) {
                    break a;
                }
            }
        };
        let lambda: u32 = rng.gen_range(0..1u32 << h);
        let f_vals = pts
            .iter()
            .map(|x| map.eval(module, x))
            .collect::<Result<Vec<_>>>()?;
        let mut w = module.zero();
        for (j, &c) in phi.coefficients().iter().enumerate() {
            let k = assign[j];
            let mut term = f_vals[k].clone();
            if lambda >> j & 1 == 1 {
                term = module.add(&term, &pts[k]);
            }
            w = module.add(&w, &module.scalar_mul(c, &term));
        }
        let shadow = module.project_prefix(prefix_rank, &w)?;
        if !low.contains(&shadow) {
            return Ok(CheckRecord::failed(
                CHECK_COVERING_LOW,
                format!("projection {shadow} escapes the level-{ell} image"),
            )
            .with_sampling(samples, seed));
        }
    }
    Ok(CheckRecord::verified(
        CHECK_COVERING_LOW,
        format!("{samples} single-point values project into the level-{ell} image"),
    )
    .with_sampling(samples, seed))
}

/// Walks every representation of level ≤ ℓ+1 on the extended module and
/// checks the covering dichotomy: a value whose projected pair keeps full
/// level vanishes on that pair's factor, and every other value projects
/// into Φ^{(ℓ)}(A_ℓ). Only tractable for tiny extensions, so budget
/// overruns record a skip.
pub(crate) fn check_covering_exhaustive(
    phi: &LinearForm,
    module: &FiniteModule,
    map: &StructuredMap,
    prefix: &FiniteModule,
    base: &StructuredMap,
    enumeration: &AdmissibleEnumeration,
    budget: &Budget,
) -> Result<CheckRecord> {
    let ell = enumeration.level() - 1;
    let low = match level_image(
        phi,
        prefix,
        |p| {
            base.eval(prefix, p)
                .expect("map evaluates on its own module")
        },
        ell.max(1),
        budget,
    ) {
        Ok(s) => s,
        Err(Error::BudgetExceeded { .. }) => {
            return Ok(CheckRecord::skipped(
                CHECK_COVERING_EXHAUSTIVE,
                "the previous module is too large to enumerate its low-level image".into(),
            ));
        }
        Err(e) => return Err(e),
    };
    let prefix_rank = prefix.rank();
    let coeffs = phi.coefficients();
    let mut scanned: u64 = 0;
    let mut failure: Option<String> = None;
    let mut stash: Option<Error> = None;
    let walk = crate::images::for_each_representation(
        phi,
        module,
        &|p: &Element| {
            map.eval(module, p)
                .expect("map evaluates on its own module")
        },
        enumeration.level(),
        budget,
        |w, combo, assign, lambda, elems| {
            if failure.is_some() || stash.is_some() {
                return;
            }
            scanned += 1;
            // coefficient split per support point, pushed to the prefix
            let mut merged: Vec<(Element, i64, i64)> = Vec::with_capacity(combo.len());
            for (k, &idx) in combo.iter().enumerate() {
                let mut a = 0i64;
                let mut b = 0i64;
                for (j, &c) in coeffs.iter().enumerate() {
                    if assign[j] == k {
                        if lambda >> j & 1 == 1 {
                            b += c;
                        } else {
                            a += c;
                        }
                    }
                }
                let y = match module.project_prefix(prefix_rank, &elems[idx]) {
                    Ok(y) => y,
                    Err(e) => {
                        stash = Some(e);
                        return;
                    }
                };
                match merged.iter_mut().find(|(p, _, _)| *p == y) {
                    Some(slot) => {
                        slot.1 += a;
                        slot.2 += b;
                    }
                    None => merged.push((y, a, b)),
                }
            }
            merged.retain(|&(_, a, b)| (a, b) != (0, 0));
            merged.sort_by(|l, r| l.0.cmp(&r.0));
            if merged.len() == enumeration.level() {
                let support: Vec<Element> = merged.iter().map(|(p, _, _)| p.clone()).collect();
                let alpha: Vec<i64> = merged.iter().map(|&(_, a, _)| a).collect();
                let beta: Vec<i64> = merged.iter().map(|&(_, _, b)| b).collect();
                let outcome = AdmissiblePair::new(support, alpha, beta)
                    .and_then(|pair| enumeration.rank(&pair))
                    .and_then(|r| {
                        r.to_usize().ok_or(Error::Overflow {
                            context: "pair rank".into(),
                        })
                    });
                match outcome {
                    Ok(rank) => {
                        if w.coords()[prefix_rank + rank] != 0 {
                            failure = Some(format!("full-level value {w} misses factor {rank}"));
                        }
                    }
                    Err(e) => stash = Some(e),
                }
            } else {
                match module.project_prefix(prefix_rank, w) {
                    Ok(shadow) => {
                        if !low.contains(&shadow) {
                            failure = Some(format!(
                                "merged value {w} projects outside the level-{ell} image"
                            ));
                        }
                    }
                    Err(e) => stash = Some(e),
                }
            }
        },
    );
    if let Err(Error::BudgetExceeded { .. }) = walk {
        return Ok(CheckRecord::skipped(
            CHECK_COVERING_EXHAUSTIVE,
            "the extended module is too large to enumerate".into(),
        ));
    }
    walk?;
    if let Some(e) = stash {
        return Err(e);
    }
    match failure {
        Some(detail) => Ok(CheckRecord::failed(CHECK_COVERING_EXHAUSTIVE, detail)),
        None => Ok(CheckRecord::verified(
            CHECK_COVERING_EXHAUSTIVE,
            format!("all {scanned} representations satisfy the covering dichotomy"),
        )),
    }
}

/// ε_ℓ·|M_{ℓ+1}| + Σ_i |M_{ℓ+1}|/m″_i < ε_{ℓ+1}·|M_{ℓ+1}|, cleared of
/// denominators and compared in exact integers.
pub(crate) fn check_counting(
    card: &BigUint,
    new_factors: &[u64],
    eps_lo: &BigRational,
    eps_hi: &BigRational,
) -> Result<CheckRecord> {
    let part = |r: &BigRational| -> Result<(BigUint, BigUint)> {
        let num = r.numer().to_biguint().ok_or(Error::ShapeMismatch {
            msg: "level bounds must be positive".into(),
        })?;
        let den = r.denom().to_biguint().ok_or(Error::ShapeMismatch {
            msg: "level bounds must be positive".into(),
        })?;
        Ok((num, den))
    };
    let (p_lo, q_lo) = part(eps_lo)?;
    let (p_hi, q_hi) = part(eps_hi)?;
    let mut slice_total = BigUint::zero();
    for &m in new_factors {
        // each new factor divides the cardinality exactly
        slice_total += card / BigUint::from(m);
    }
    let lhs = &p_lo * &q_hi * card + &q_lo * &q_hi * &slice_total;
    let rhs = &p_hi * &q_lo * card;
    let detail = format!(
        "{} slices: {lhs} < {rhs} over the common denominator",
        new_factors.len()
    );
    if lhs < rhs {
        Ok(CheckRecord::verified(CHECK_COUNTING, detail))
    } else {
        Ok(CheckRecord::failed(CHECK_COUNTING, detail))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_form;
    use crate::rational::parse_rational;

    fn schedule_for(eps: &str, h: usize) -> EpsilonSchedule {
        EpsilonSchedule::even(parse_rational(eps).unwrap(), h).unwrap()
    }

    fn upsilon_diff() -> Vec<LinearForm> {
        vec![parse_form("t1 - t2").unwrap()]
    }

    #[test]
    fn initial_step_sizes_factors_for_sum_of_two() {
        let b = Budget::default();
        let phi = parse_form("t1 + t2").unwrap();
        let sched = schedule_for("9/10", 2);
        let (state, record) = initial_step(&upsilon_diff(), &phi, &sched, 1, None, &b).unwrap();
        // labels 0, 1, 2 need primes above 3/(3/10) = 10
        assert_eq!(state.module.factors(), &[11, 13, 17]);
        assert_eq!(record.cardinality, "2431");
        // union of the three labeled hyperplanes: 551 - 41 + 1
        assert_eq!(record.image_count.as_deref(), Some("511"));
        assert_eq!(
            record.factor_labels,
            Some(vec![Some("0".into()), Some("1".into()), Some("2".into())])
        );
        for check in &record.checks {
            assert_eq!(check.status, "verified", "{}: {}", check.name, check.detail);
        }
    }

    #[test]
    fn initial_step_with_toy_factors_skips_density_checks() {
        let b = Budget::default();
        let phi = parse_form("t1 + t2").unwrap();
        let sched = schedule_for("9/10", 2);
        let (state, record) =
            initial_step(&upsilon_diff(), &phi, &sched, 1, Some(&[5, 7]), &b).unwrap();
        assert_eq!(state.labels, vec![Some(0), Some(1)]);
        // with the sum 2 unlabeled, level-1 values reach everything
        assert_eq!(record.image_count.as_deref(), Some("35"));
        let by_name = |n: &str| record.checks.iter().find(|c| c.name == n).unwrap();
        assert_eq!(by_name(CHECK_LABELED_RESIDUE).status, "verified");
        assert_eq!(by_name(CHECK_ZERO_COORDINATE).status, "skipped");
        assert_eq!(by_name(CHECK_LEVEL_BOUND).status, "skipped");
        assert_eq!(by_name(CHECK_LEVEL_IN_IMAGE).status, "verified");
    }

    #[test]
    fn initial_step_rejects_a_form_with_zero_sum() {
        let b = Budget::default();
        let phi = parse_form("t1 - t2").unwrap();
        let sched = schedule_for("9/10", 2);
        let err = initial_step(&upsilon_diff(), &phi, &sched, 1, None, &b).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated { .. }));
    }

    #[test]
    fn witness_reaches_every_target_on_the_toy_module() {
        let b = Budget::default();
        let phi = parse_form("t1 + t2").unwrap();
        let sched = schedule_for("9/10", 2);
        let (state, _) = initial_step(&upsilon_diff(), &phi, &sched, 1, Some(&[5, 7]), &b).unwrap();
        let upsilon = parse_form("t1 - t2").unwrap();
        for x in state.module.elements() {
            let rep = surjectivity_witness(&upsilon, &state.module, &state.map, &x, &b).unwrap();
            // t1 − t2 collapses to f(x̃) + x̃ in slot 1 and f(x̃) in slot 2
            assert_eq!(rep.points[0], rep.points[1]);
            assert!(rep.flags[0] && !rep.flags[1]);
            assert_eq!(rep.points[0], x);
        }
    }

    #[test]
    fn witness_handles_anchors_with_unit_inverses() {
        let b = Budget::default();
        let module = FiniteModule::new(vec![5, 7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let values: Vec<Element> = (0..35).map(|_| module.random_element(&mut rng)).collect();
        let f = StructuredMap::Table { values };
        for upsilon in ["3t1 - t2 - 2t3", "t1 + t2 - 2t3"] {
            let u = parse_form(upsilon).unwrap();
            for x in module.elements() {
                let rep = surjectivity_witness(&u, &module, &f, &x, &b).unwrap();
                let got = rep.evaluate(&u, &module, |p| f.eval(&module, p).unwrap());
                assert_eq!(got, x);
            }
        }
    }

    #[test]
    fn witness_requires_coprime_subset_sums() {
        let b = Budget::default();
        let module = FiniteModule::new(vec![6]).unwrap();
        let f = StructuredMap::Zero;
        // 3 − 1 − 2 = 0 puts 3 in S(Υ), and gcd(3, 6) > 1
        let u = parse_form("3t1 - t2 - 2t3").unwrap();
        let err = surjectivity_witness(&u, &module, &f, &module.zero(), &b).unwrap_err();
        assert!(matches!(err, Error::HypothesisViolated { .. }));
    }

    #[test]
    fn toy_inductive_step_matches_the_frozen_pair_count() {
        let b = Budget::default();
        let phi = parse_form("t1 + t2").unwrap();
        let sched = schedule_for("9/10", 2);
        let (state, _) = initial_step(&upsilon_diff(), &phi, &sched, 1, Some(&[5, 7]), &b).unwrap();
        let (next, record) = inductive_step(
            &state,
            &upsilon_diff(),
            &phi,
            &sched,
            Mode::Toy,
            200,
            0x5eed,
            &b,
        )
        .unwrap();
        // C(35, 2)·4 tuples = 2380 pairs, primes above 2380/(3/10) = 7933
        assert_eq!(record.pair_count.as_deref(), Some("2380"));
        assert_eq!(record.factors.len(), 2380);
        assert_eq!(record.factors[0], "7937");
        assert_eq!(next.module.rank(), 2382);
        for check in &record.checks {
            assert_ne!(check.status, "failed", "{}: {}", check.name, check.detail);
        }
        let names: Vec<&str> = record.checks.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            [
                CHECK_PAIR_ORACLE,
                CHECK_COMMUTING,
                CHECK_COVERING_SAMPLED,
                CHECK_COVERING_LOW,
                CHECK_COUNTING
            ]
        );
        for name in [
            CHECK_PAIR_ORACLE,
            CHECK_COMMUTING,
            CHECK_COVERING_SAMPLED,
            CHECK_COVERING_LOW,
            CHECK_COUNTING,
        ] {
            let c = record.checks.iter().find(|c| c.name == name).unwrap();
            assert_eq!(c.status, "verified", "{name}: {}", c.detail);
        }
    }

    #[test]
    fn commuting_check_detects_a_broken_extension() {
        let module = FiniteModule::new(vec![5, 7]).unwrap();
        let prefix = FiniteModule::new(vec![5]).unwrap();
        // pretends to extend f ≡ 0 but copies x through instead
        let values: Vec<Element> = module.elements().collect();
        let fake = StructuredMap::Table { values };
        let record = check_commuting(&module, &fake, &prefix, &StructuredMap::Zero, 50, 3).unwrap();
        assert_eq!(record.status, "failed");
    }

    #[test]
    fn exhaustive_covering_skips_when_the_extension_is_large() {
        let b = Budget::default();
        let phi = parse_form("t1 + t2").unwrap();
        let sched = schedule_for("9/10", 2);
        let (state, _) = initial_step(&upsilon_diff(), &phi, &sched, 1, Some(&[5, 7]), &b).unwrap();
        let (next, record) = inductive_step(
            &state,
            &upsilon_diff(),
            &phi,
            &sched,
            Mode::Exhaustive,
            50,
            7,
            &b,
        )
        .unwrap();
        let c = record
            .checks
            .iter()
            .find(|c| c.name == CHECK_COVERING_EXHAUSTIVE)
            .unwrap();
        assert_eq!(c.status, "skipped");
        assert!(next.module.cardinality() > BigUint::from(u64::MAX));
    }

    #[test]
    fn inductive_step_with_no_pairs_adds_nothing() {
        let b = Budget::default();
        // ℓ+1 = 4 distinct support points cannot fit in a 3-element module
        let phi = parse_form("t1 + t2 + 2t3 + 4t4").unwrap();
        let sched = schedule_for("9/10", 4);
        let module = FiniteModule::new(vec![3]).unwrap();
        let state = StepState {
            module: module.clone(),
            map: StructuredMap::Zero,
            level: 3,
            labels: vec![Some(0)],
        };
        let (next, record) =
            inductive_step(&state, &upsilon_diff(), &phi, &sched, Mode::Toy, 20, 9, &b).unwrap();
        assert_eq!(record.pair_count.as_deref(), Some("0"));
        assert!(record.factors.is_empty());
        assert_eq!(next.module, module);
        let sampled = record
            .checks
            .iter()
            .find(|c| c.name == CHECK_COVERING_SAMPLED)
            .unwrap();
        assert_eq!(sampled.status, "skipped");
        let counting = record
            .checks
            .iter()
            .find(|c| c.name == CHECK_COUNTING)
            .unwrap();
        assert_eq!(counting.status, "verified");
    }

    #[test]
    fn counting_check_is_exact_at_the_boundary() {
        // ε from 1/4 to 1/2 on card 40 with one factor of 8: 10 + 5 < 20
        let lo = parse_rational("1/4").unwrap();
        let hi = parse_rational("1/2").unwrap();
        let card = BigUint::from(40u32);
        let ok = check_counting(&card, &[8], &lo, &hi).unwrap();
        assert_eq!(ok.status, "verified");
        // with a factor of 2 the slice term is 20: 10 + 20 ≥ 20 fails
        let bad = check_counting(&card, &[2], &lo, &hi).unwrap();
        assert_eq!(bad.status, "failed");
    }

    #[test]
    fn real_scale_inductive_step_exceeds_the_pair_budget() {
        let b = Budget::default();
        let phi = parse_form("t1 + t2").unwrap();
        let sched = schedule_for("9/10", 2);
        let (state, _) = initial_step(&upsilon_diff(), &phi, &sched, 1, None, &b).unwrap();
        let err = inductive_step(
            &state,
            &upsilon_diff(),
            &phi,
            &sched,
            Mode::Sampled,
            200,
            0,
            &b,
        )
        .unwrap_err();
        // C(2431, 2)·4 pairs is over the default factor allocation cap
        assert!(matches!(err, Error::BudgetExceeded { .. }));
    }

    #[test]
    fn derived_seeds_separate_checks_and_levels() {
        let a = derive_seed(7, 2, CHECK_COMMUTING);
        assert_eq!(a, derive_seed(7, 2, CHECK_COMMUTING));
        assert_ne!(a, derive_seed(7, 3, CHECK_COMMUTING));
        assert_ne!(a, derive_seed(7, 2, CHECK_COVERING_SAMPLED));
        assert_ne!(a, derive_seed(8, 2, CHECK_COMMUTING));
    }
}
