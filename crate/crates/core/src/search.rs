//! Exhaustive search for the covering-with-sparse-image property on Z/mZ.
//!
//! A modulus m has the property for (Υ, Φ, ε) when some nonempty
//! A ⊆ Z/mZ satisfies Υ(A) = Z/mZ and |Φ(A)| < ε·m (with the option of
//! adjoining 0 before applying Υ). The scan walks all subsets in
//! lexicographic bit-string order (bit i = [i ∈ A], excluded before
//! included), maintaining exact image refcounts incrementally, with two
//! sound prunes:
//!
//! - covering needs m ≤ |A ∪ {0}|^g for g the arity of Υ, so subtrees
//!   that cannot reach ⌈m^(1/g)⌉ elements are dropped;
//! - |Φ(A)| only grows along ⊆, so a prefix already at the ε bound
//!   closes its subtree.
//!
//! Both prunes discard only unsatisfiable sets, so full scans still see
//! every witness: smallest satisfiable m, the lexicographically least
//! and the largest witness, the reachable |Φ(A)| minimum, and the set
//! of achievable |A|. Above the exhaustive budget a seeded annealer
//! looks for witnesses; its answers are labeled non-exhaustive and
//! never feed the smallest-m claim. Every witness that leaves this
//! module is re-verified against the image engine first.
//!
//! The singleton module is answered in closed form: A = {0} forces
//! |Φ(A)| = 1, so m = 1 satisfies the property exactly when ε > 1.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::LinearForm;
use crate::images::{image, is_surjective, SubsetOfModule};
use crate::modules::{Element, FiniteModule};
use crate::rational::{count_below, format_rational};

const ANNEAL_ITERS: u64 = 30_000;
const ANNEAL_RESTARTS: u64 = 3;
const ANNEAL_SEED: u64 = 0x4852_4c41;

/// The property to test: Υ(A) = Z/mZ (optionally Υ(A ∪ {0}) = Z/mZ)
/// while |Φ(A)| < ε·m.
#[derive(Debug, Clone)]
pub struct PropertyQuery {
    pub upsilon: LinearForm,
    pub phi: LinearForm,
    pub eps: BigRational,
    pub include_zero: bool,
}

impl PropertyQuery {
    pub fn new(
        upsilon: LinearForm,
        phi: LinearForm,
        eps: BigRational,
        include_zero: bool,
    ) -> Result<Self> {
        if eps <= BigRational::from_integer(0.into()) {
            return Err(Error::ShapeMismatch {
                msg: format!("the density bound must be positive, got {}", eps),
            });
        }
        Ok(PropertyQuery {
            upsilon,
            phi,
            eps,
            include_zero,
        })
    }
}

/// Answer for a single modulus.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyOutcome {
    pub satisfiable: bool,
    /// Lexicographically least witness (sorted residues), when one exists.
    pub witness: Option<Vec<u64>>,
    /// False when the answer came from the annealer, which can miss.
    pub exhaustive: bool,
}

/// Full accounting for one modulus in a scan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchRow {
    pub m: u64,
    pub satisfiable: bool,
    /// False for rows produced by the annealer; those never carry the
    /// smallest-m claim and an unsatisfiable verdict means "not found".
    pub exhaustive: bool,
    /// Size prune used: any witness has at least this many elements.
    pub min_size_bound: u64,
    pub min_phi_image: Option<u64>,
    pub witness: Option<Vec<u64>>,
    pub witness_bits_hex: Option<String>,
    /// Achievable |A| over all witnesses, ascending.
    pub sizes: Vec<u64>,
    /// Witness of maximum size (least bit string among those).
    pub largest_witness: Option<Vec<u64>>,
}

/// Scan over m = 1..=m_max.
#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub upsilon: String,
    pub phi: String,
    pub eps: String,
    pub include_zero: bool,
    pub m_max: u64,
    /// Annealer seed behind any non-exhaustive rows; 0 when none exist.
    pub seed: u64,
    /// Smallest satisfiable modulus, when any.
    pub min_m: Option<u64>,
    pub rows: Vec<SearchRow>,
}

impl SearchReport {
    /// One line per modulus; `sizes` joined with ';' inside the cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,satisfiable,min_phi_image,witness_bits_hex,sizes\n");
        for row in &self.rows {
            let image = row.min_phi_image.map(|v| v.to_string()).unwrap_or_default();
            let bits = row.witness_bits_hex.clone().unwrap_or_default();
            let sizes = row
                .sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                row.m, row.satisfiable, image, bits, sizes
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }
}

/// One instance in a ratio table.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub m: u64,
    pub set_size: u64,
    pub upsilon_image: u64,
    pub phi_image: u64,
    /// log|Υ(A)| / log|Φ(A)|, display only; absent when |Φ(A)| = 1.
    pub ratio: Option<f64>,
    /// Exact check of |Φ(A)|^(3/4) ≤ |Υ(A)| ≤ |Φ(A)|^(4/3).
    pub within_band: Option<bool>,
}

/// Bit i = [i ∈ A], packed most significant bit first.
pub fn witness_bits_hex(m: u64, residues: &[u64]) -> String {
    let mut bytes = vec![0u8; m.div_ceil(8) as usize];
    for &r in residues {
        debug_assert!(r < m);
        bytes[(r / 8) as usize] |= 0x80 >> (r % 8);
    }
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Bit-string order: at the least residue where exactly one set differs,
/// the set containing it is the greater string.
fn cmp_bit_string(a: &[u64], b: &[u64]) -> Ordering {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Equal => {
                i += 1;
                j += 1;
            }
            Ordering::Less => return Ordering::Greater,
            Ordering::Greater => return Ordering::Less,
        }
    }
    if i < a.len() {
        Ordering::Greater
    } else if j < b.len() {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

/// Smallest s ≥ 1 with s^g ≥ m.
fn min_size_for(m: u64, g: u32) -> u64 {
    (1..=m)
        .find(|&s| {
            let mut acc: u128 = 1;
            for _ in 0..g {
                acc = acc.saturating_mul(s as u128);
                if acc >= m as u128 {
                    return true;
                }
            }
            false
        })
        .unwrap_or(m)
}

/// Largest image count strictly below ε·m, clipped to m.
fn allowed_image(eps: &BigRational, m: u64) -> u64 {
    let bound = eps * BigRational::from_integer(m.into());
    let ceil = bound.ceil().to_integer();
    ceil.to_u64().map_or(m, |v| v.saturating_sub(1).min(m))
}

fn reduced_multipliers(form: &LinearForm, m: u64) -> Vec<u64> {
    form.coefficients()
        .iter()
        .map(|&c| c.rem_euclid(m as i64) as u64)
        .collect()
}

/// Visits Φ over every tuple from `old ∪ {e}` that uses `e` at least
/// once, each exactly once (split by the first slot holding `e`).
fn each_new_value<F: FnMut(u64)>(mults: &[u64], m: u64, old: &[u64], e: u64, visit: &mut F) {
    #[allow(clippy::too_many_arguments)]
    fn rec<F: FnMut(u64)>(
        mults: &[u64],
        m: u64,
        old: &[u64],
        e: u64,
        first: usize,
        slot: usize,
        acc: u64,
        visit: &mut F,
    ) {
        if slot == mults.len() {
            visit(acc);
            return;
        }
        let step =
            |x: u64, acc: u64| (acc + (mults[slot] as u128 * x as u128 % m as u128) as u64) % m;
        match slot.cmp(&first) {
            Ordering::Equal => rec(mults, m, old, e, first, slot + 1, step(e, acc), visit),
            Ordering::Less => {
                for &x in old {
                    rec(mults, m, old, e, first, slot + 1, step(x, acc), visit);
                }
            }
            Ordering::Greater => {
                for &x in old {
                    rec(mults, m, old, e, first, slot + 1, step(x, acc), visit);
                }
                rec(mults, m, old, e, first, slot + 1, step(e, acc), visit);
            }
        }
    }
    for first in 0..mults.len() {
        rec(mults, m, old, e, first, 0, 0, visit);
    }
}

/// Incremental images of Φ and Υ over a growing/shrinking subset.
///
/// Υ is counted over the chosen set plus a phantom zero when the query
/// adjoins it; inserting the residue 0 then leaves the Υ side alone.
struct ScanState {
    m: u64,
    include_zero: bool,
    allow: u64,
    phi_mults: Vec<u64>,
    ups_mults: Vec<u64>,
    phi_counts: Vec<u64>,
    phi_distinct: u64,
    ups_counts: Vec<u64>,
    ups_covered: u64,
    ups_base: Vec<u64>,
    chosen: Vec<u64>,
}

impl ScanState {
    fn new(query: &PropertyQuery, m: u64) -> Self {
        let mut state = ScanState {
            m,
            include_zero: query.include_zero,
            allow: allowed_image(&query.eps, m),
            phi_mults: reduced_multipliers(&query.phi, m),
            ups_mults: reduced_multipliers(&query.upsilon, m),
            phi_counts: vec![0; m as usize],
            phi_distinct: 0,
            ups_counts: vec![0; m as usize],
            ups_covered: 0,
            ups_base: Vec::new(),
            chosen: Vec::new(),
        };
        if state.include_zero {
            // the singleton {0} contributes exactly the all-zero tuple
            state.ups_counts[0] = 1;
            state.ups_covered = 1;
            state.ups_base.push(0);
        }
        state
    }

    fn insert(&mut self, e: u64) {
        let ScanState {
            m,
            phi_mults,
            phi_counts,
            phi_distinct,
            chosen,
            ..
        } = self;
        each_new_value(phi_mults, *m, chosen, e, &mut |v| {
            let c = &mut phi_counts[v as usize];
            if *c == 0 {
                *phi_distinct += 1;
            }
            *c += 1;
        });
        if !(self.include_zero && e == 0) {
            let ScanState {
                m,
                ups_mults,
                ups_counts,
                ups_covered,
                ups_base,
                ..
            } = self;
            each_new_value(ups_mults, *m, ups_base, e, &mut |v| {
                let c = &mut ups_counts[v as usize];
                if *c == 0 {
                    *ups_covered += 1;
                }
                *c += 1;
            });
            self.ups_base.push(e);
        }
        self.chosen.push(e);
    }

    fn remove(&mut self, e: u64) {
        let pos = self
            .chosen
            .iter()
            .position(|&x| x == e)
            .expect("chosen element");
        self.chosen.swap_remove(pos);
        if !(self.include_zero && e == 0) {
            let pos = self
                .ups_base
                .iter()
                .position(|&x| x == e)
                .expect("base element");
            self.ups_base.swap_remove(pos);
            let ScanState {
                m,
                ups_mults,
                ups_counts,
                ups_covered,
                ups_base,
                ..
            } = self;
            each_new_value(ups_mults, *m, ups_base, e, &mut |v| {
                let c = &mut ups_counts[v as usize];
                *c -= 1;
                if *c == 0 {
                    *ups_covered -= 1;
                }
            });
        }
        let ScanState {
            m,
            phi_mults,
            phi_counts,
            phi_distinct,
            chosen,
            ..
        } = self;
        each_new_value(phi_mults, *m, chosen, e, &mut |v| {
            let c = &mut phi_counts[v as usize];
            *c -= 1;
            if *c == 0 {
                *phi_distinct -= 1;
            }
        });
    }

    fn satisfied(&self) -> bool {
        !self.chosen.is_empty() && self.ups_covered == self.m && self.phi_distinct <= self.allow
    }

    /// Deficit-weighted distance from the property, 0 iff satisfied.
    fn energy(&self) -> u64 {
        if self.chosen.is_empty() {
            return u64::MAX;
        }
        (self.m - self.ups_covered) * (self.m + 1) + self.phi_distinct.saturating_sub(self.allow)
    }
}

#[derive(Debug, Clone, Default)]
struct Aggregates {
    witness: Option<Vec<u64>>,
    min_image: Option<u64>,
    sizes: BTreeSet<u64>,
    largest: Option<Vec<u64>>,
}

impl Aggregates {
    fn record(&mut self, chosen: &[u64], image_count: u64) {
        let mut set = chosen.to_vec();
        set.sort_unstable();
        match &self.witness {
            Some(best) if cmp_bit_string(&set, best) != Ordering::Less => {}
            _ => self.witness = Some(set.clone()),
        }
        self.min_image = Some(self.min_image.map_or(image_count, |v| v.min(image_count)));
        self.sizes.insert(set.len() as u64);
        let better = match &self.largest {
            None => true,
            Some(big) => match set.len().cmp(&big.len()) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => cmp_bit_string(&set, big) == Ordering::Less,
            },
        };
        if better {
            self.largest = Some(set);
        }
    }

    fn merge(mut self, other: Aggregates) -> Aggregates {
        if let Some(w) = other.witness {
            match &self.witness {
                Some(best) if cmp_bit_string(&w, best) != Ordering::Less => {}
                _ => self.witness = Some(w),
            }
        }
        if let Some(v) = other.min_image {
            self.min_image = Some(self.min_image.map_or(v, |x| x.min(v)));
        }
        self.sizes.extend(other.sizes);
        if let Some(w) = other.largest {
            let better = match &self.largest {
                None => true,
                Some(big) => match w.len().cmp(&big.len()) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => cmp_bit_string(&w, big) == Ordering::Less,
                },
            };
            if better {
                self.largest = Some(w);
            }
        }
        self
    }
}

/// Depth-first over residues idx..m, exclusion before inclusion, so
/// leaves arrive in bit-string order. Returns true to stop the scan.
fn scan(
    state: &mut ScanState,
    idx: u64,
    min_need: u64,
    stop_at_first: bool,
    agg: &mut Aggregates,
) -> bool {
    if state.phi_distinct > state.allow {
        return false;
    }
    if state.chosen.len() as u64 + (state.m - idx) < min_need {
        return false;
    }
    if idx == state.m {
        if state.satisfied() {
            agg.record(&state.chosen, state.phi_distinct);
            return stop_at_first;
        }
        return false;
    }
    if scan(state, idx + 1, min_need, stop_at_first, agg) {
        return true;
    }
    state.insert(idx);
    let stop = scan(state, idx + 1, min_need, stop_at_first, agg);
    state.remove(idx);
    stop
}

fn scan_work_estimate(m: u64, h: usize) -> u128 {
    let per_insert = (h as u128) * ((m as u128) + 1).pow(h.saturating_sub(1) as u32);
    (1u128 << m.min(127)) * per_insert
}

fn check_scan_budget(query: &PropertyQuery, m: u64, budget: &Budget) -> Result<()> {
    let h = query.phi.arity().max(query.upsilon.arity());
    let est = scan_work_estimate(m, h);
    if est > budget.work as u128 {
        return Err(Error::BudgetExceeded {
            what: format!("exhaustive subset scan of Z/{m}Z at arity {h}"),
            needed: est.to_string(),
            cap: budget.work.to_string(),
        });
    }
    Ok(())
}

fn min_need_for(query: &PropertyQuery, m: u64) -> u64 {
    let g = query.upsilon.arity() as u32;
    min_size_for(m, g)
        .saturating_sub(query.include_zero as u64)
        .max(1)
}

/// Full scan of one modulus, parallel over fixed prefixes of the first
/// min(m, 8) bits; the merge is order-independent, so the result does
/// not depend on the worker count.
fn scan_all(query: &PropertyQuery, m: u64, budget: &Budget) -> Result<Aggregates> {
    check_scan_budget(query, m, budget)?;
    let min_need = min_need_for(query, m);
    let depth = m.min(8);
    let agg = (0u64..1 << depth)
        .into_par_iter()
        .map(|prefix| {
            let mut state = ScanState::new(query, m);
            let mut agg = Aggregates::default();
            for bit in 0..depth {
                if prefix >> bit & 1 == 1 {
                    state.insert(bit);
                }
                if state.phi_distinct > state.allow {
                    return agg;
                }
            }
            if state.chosen.len() as u64 + (m - depth) >= min_need {
                scan(&mut state, depth, min_need, false, &mut agg);
            }
            agg
        })
        .reduce(Aggregates::default, Aggregates::merge);
    Ok(agg)
}

fn closed_form_m1(query: &PropertyQuery) -> SearchRow {
    // A = {0} is the only nonempty subset; both images are {0}
    let satisfiable = query.eps > BigRational::from_integer(1.into());
    SearchRow {
        m: 1,
        satisfiable,
        exhaustive: true,
        min_size_bound: 1,
        min_phi_image: satisfiable.then_some(1),
        witness: satisfiable.then(|| vec![0]),
        witness_bits_hex: satisfiable.then(|| "80".into()),
        sizes: if satisfiable { vec![1] } else { Vec::new() },
        largest_witness: satisfiable.then(|| vec![0]),
    }
}

/// Independent check that a reported witness satisfies the property,
/// going through the image engine rather than the scan counters.
fn reverify(query: &PropertyQuery, m: u64, residues: &[u64], budget: &Budget) -> Result<()> {
    let module = FiniteModule::cyclic(m)?;
    for &r in residues {
        if r >= m {
            return Err(Error::IndexOutOfRange {
                index: r as usize,
                len: m as usize,
            });
        }
    }
    let set =
        SubsetOfModule::from_elements(&module, residues.iter().map(|&r| Element(vec![r])), budget)?;
    let covered = is_surjective(&query.upsilon, &set, query.include_zero, budget)?;
    let sparse = count_below(
        &image(&query.phi, &set, budget)?.len(),
        &query.eps,
        &module.cardinality(),
    );
    if covered && sparse {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            msg: format!("scan witness fails re-verification at m = {m}"),
        })
    }
}

/// Annealer for moduli above the exhaustive budget. A returned witness
/// is exact (re-verified); a miss proves nothing.
fn anneal(query: &PropertyQuery, m: u64, budget: &Budget, seed: u64) -> Result<Option<Vec<u64>>> {
    let h = query.phi.arity().max(query.upsilon.arity());
    let per_flip = (h as u128) * ((m as u128) + 1).pow(h.saturating_sub(1) as u32);
    let est = per_flip * (ANNEAL_ITERS * ANNEAL_RESTARTS) as u128;
    if est > budget.work as u128 {
        return Err(Error::BudgetExceeded {
            what: format!("annealing over Z/{m}Z at arity {h}"),
            needed: est.to_string(),
            cap: budget.work.to_string(),
        });
    }
    for restart in 0..ANNEAL_RESTARTS {
        let mut rng =
            ChaCha8Rng::seed_from_u64(ANNEAL_SEED ^ seed ^ (restart.wrapping_mul(0x9e37)));
        let mut state = ScanState::new(query, m);
        for r in 0..m {
            if rng.gen_bool(0.5) {
                state.insert(r);
            }
        }
        let mut energy = state.energy();
        for step in 0..ANNEAL_ITERS {
            if energy == 0 {
                let mut witness = state.chosen.clone();
                witness.sort_unstable();
                reverify(query, m, &witness, budget)?;
                return Ok(Some(witness));
            }
            let temperature = (m as f64) * 0.998f64.powi(step as i32) + 1e-9;
            let r = rng.gen_range(0..m);
            let present = state.chosen.contains(&r);
            if present {
                state.remove(r);
            } else {
                state.insert(r);
            }
            let next = state.energy();
            let worse = next > energy;
            let reject =
                worse && rng.gen::<f64>() >= (-((next - energy) as f64) / temperature).exp();
            if reject {
                if present {
                    state.insert(r);
                } else {
                    state.remove(r);
                }
            } else {
                energy = next;
            }
        }
        if energy == 0 {
            let mut witness = state.chosen.clone();
            witness.sort_unstable();
            reverify(query, m, &witness, budget)?;
            return Ok(Some(witness));
        }
    }
    Ok(None)
}

/// Does Z/mZ have the property? Exhaustive up to the subset budget
/// (first witness in bit-string order), annealing above it with the
/// default seed 0.
pub fn property_holds(query: &PropertyQuery, m: u64, budget: &Budget) -> Result<PropertyOutcome> {
    property_holds_seeded(query, m, budget, 0)
}

/// [`property_holds`] with an explicit annealer seed. The seed only
/// matters past the exhaustive budget; below it the scan is seed-free.
pub fn property_holds_seeded(
    query: &PropertyQuery,
    m: u64,
    budget: &Budget,
    seed: u64,
) -> Result<PropertyOutcome> {
    if m == 0 {
        return Err(Error::ShapeMismatch {
            msg: "the modulus must be positive".into(),
        });
    }
    if m == 1 {
        let row = closed_form_m1(query);
        return Ok(PropertyOutcome {
            satisfiable: row.satisfiable,
            witness: row.witness,
            exhaustive: true,
        });
    }
    if m > budget.subset_ground {
        let witness = anneal(query, m, budget, seed)?;
        return Ok(PropertyOutcome {
            satisfiable: witness.is_some(),
            witness,
            exhaustive: false,
        });
    }
    check_scan_budget(query, m, budget)?;
    let mut state = ScanState::new(query, m);
    let mut agg = Aggregates::default();
    scan(&mut state, 0, min_need_for(query, m), true, &mut agg);
    if let Some(w) = &agg.witness {
        reverify(query, m, w, budget)?;
    }
    Ok(PropertyOutcome {
        satisfiable: agg.witness.is_some(),
        witness: agg.witness,
        exhaustive: true,
    })
}

/// Scans m = 1..=m_max exhaustively and reports every modulus: the
/// smallest satisfiable m, per-m least and largest witnesses, minimal
/// |Φ(A)|, and the achievable witness sizes.
pub fn min_m(query: &PropertyQuery, m_max: u64, budget: &Budget) -> Result<SearchReport> {
    if m_max == 0 {
        return Err(Error::ShapeMismatch {
            msg: "the modulus range must be nonempty".into(),
        });
    }
    if m_max > budget.subset_ground {
        return Err(Error::BudgetExceeded {
            what: "subset search range".into(),
            needed: m_max.to_string(),
            cap: budget.subset_ground.to_string(),
        });
    }
    let mut rows = Vec::with_capacity(m_max as usize);
    for m in 1..=m_max {
        if m == 1 {
            rows.push(closed_form_m1(query));
            continue;
        }
        let agg = scan_all(query, m, budget)?;
        if let Some(w) = &agg.witness {
            reverify(query, m, w, budget)?;
        }
        if let Some(w) = &agg.largest {
            reverify(query, m, w, budget)?;
        }
        rows.push(SearchRow {
            m,
            satisfiable: agg.witness.is_some(),
            exhaustive: true,
            min_size_bound: min_need_for(query, m),
            min_phi_image: agg.min_image,
            witness_bits_hex: agg.witness.as_ref().map(|w| witness_bits_hex(m, w)),
            witness: agg.witness,
            sizes: agg.sizes.into_iter().collect(),
            largest_witness: agg.largest,
        });
    }
    Ok(SearchReport {
        upsilon: query.upsilon.to_string(),
        phi: query.phi.to_string(),
        eps: format_rational(&query.eps),
        include_zero: query.include_zero,
        m_max,
        seed: 0,
        min_m: rows.iter().find(|r| r.satisfiable).map(|r| r.m),
        rows,
    })
}

/// Unpruned oracle: walks every nonempty subset through the image
/// engine. Masks are visited in bit-string order, so the first hit is
/// the lexicographically least witness.
pub fn naive_scan(query: &PropertyQuery, m: u64, budget: &Budget) -> Result<SearchRow> {
    if m == 1 {
        return Ok(closed_form_m1(query));
    }
    if m >= 30 {
        return Err(Error::BudgetExceeded {
            what: "naive subset oracle".into(),
            needed: format!("2^{m}"),
            cap: "2^30".into(),
        });
    }
    let module = FiniteModule::cyclic(m)?;
    let eps_scale = module.cardinality();
    let mut satisfiable = false;
    let mut witness: Option<Vec<u64>> = None;
    let mut min_image: Option<u64> = None;
    let mut sizes = BTreeSet::new();
    let mut largest: Option<Vec<u64>> = None;
    for ordered in 1..(1u64 << m) {
        // bit r of the string is residue r; reverse so that counting
        // order equals string order
        let mask = ordered.reverse_bits() >> (64 - m);
        let residues: Vec<u64> = (0..m).filter(|r| mask >> r & 1 == 1).collect();
        let set = SubsetOfModule::from_elements(
            &module,
            residues.iter().map(|&r| Element(vec![r])),
            budget,
        )?;
        if !is_surjective(&query.upsilon, &set, query.include_zero, budget)? {
            continue;
        }
        let img = image(&query.phi, &set, budget)?.len();
        if !count_below(&img, &query.eps, &eps_scale) {
            continue;
        }
        satisfiable = true;
        if witness.is_none() {
            witness = Some(residues.clone());
        }
        let img = img.to_u64().expect("image count fits");
        min_image = Some(min_image.map_or(img, |v| v.min(img)));
        sizes.insert(residues.len() as u64);
        let bigger = largest.as_ref().map_or(true, |w| residues.len() > w.len());
        if bigger {
            largest = Some(residues);
        }
    }
    Ok(SearchRow {
        m,
        satisfiable,
        exhaustive: true,
        min_size_bound: min_need_for(query, m),
        min_phi_image: min_image,
        witness_bits_hex: witness.as_ref().map(|w| witness_bits_hex(m, w)),
        witness,
        sizes: sizes.into_iter().collect(),
        largest_witness: largest,
    })
}

/// Exact image sizes and the log-ratio table for given (m, A) pairs.
///
/// The band flag tests |Φ(A)|³ ≤ |Υ(A)|⁴ and |Υ(A)|³ ≤ |Φ(A)|⁴ in
/// exact integers; the floating ratio is for reading only. A singleton
/// Φ image has log 0 and gets an undefined ratio instead of an error.
pub fn ratio_report(
    upsilon: &LinearForm,
    phi: &LinearForm,
    instances: &[(u64, Vec<u64>)],
    budget: &Budget,
) -> Result<Vec<RatioRow>> {
    let mut rows = Vec::with_capacity(instances.len());
    for (m, residues) in instances {
        let module = FiniteModule::cyclic(*m)?;
        for &r in residues {
            if r >= *m {
                return Err(Error::IndexOutOfRange {
                    index: r as usize,
                    len: *m as usize,
                });
            }
        }
        if residues.is_empty() {
            return Err(Error::ShapeMismatch {
                msg: "a ratio instance needs a nonempty set".into(),
            });
        }
        let set = SubsetOfModule::from_elements(
            &module,
            residues.iter().map(|&r| Element(vec![r])),
            budget,
        )?;
        let u = image(upsilon, &set, budget)?.len_u64();
        let p = image(phi, &set, budget)?.len_u64();
        let defined = p > 1;
        rows.push(RatioRow {
            m: *m,
            set_size: residues.len() as u64,
            upsilon_image: u,
            phi_image: p,
            ratio: defined.then(|| (u as f64).ln() / (p as f64).ln()),
            within_band: defined.then(|| {
                let (u, p) = (u as u128, p as u128);
                p.pow(3) <= u.pow(4) && u.pow(3) <= p.pow(4)
            }),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_form;
    use crate::rational::parse_rational;
    use num_bigint::BigUint;

    fn query(upsilon: &str, phi: &str, eps: &str, include_zero: bool) -> PropertyQuery {
        PropertyQuery::new(
            parse_form(upsilon).unwrap(),
            parse_form(phi).unwrap(),
            parse_rational(eps).unwrap(),
            include_zero,
        )
        .unwrap()
    }

    #[test]
    fn rejects_a_nonpositive_bound() {
        let err = PropertyQuery::new(
            parse_form("t1 - t2").unwrap(),
            parse_form("t1 + t2").unwrap(),
            parse_rational("0").unwrap(),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn singleton_module_needs_a_bound_above_one() {
        let b = Budget::default();
        for include_zero in [false, true] {
            let tight = query("t1 - t2", "t1 + t2", "1", include_zero);
            assert!(!property_holds(&tight, 1, &b).unwrap().satisfiable);
            let loose = query("t1 - t2", "t1 + t2", "3/2", include_zero);
            let out = property_holds(&loose, 1, &b).unwrap();
            assert!(out.satisfiable && out.exhaustive);
            assert_eq!(out.witness, Some(vec![0]));
        }
    }

    #[test]
    fn one_variable_covering_forces_a_dense_image() {
        let b = Budget::default();
        // covering with t1 pins A near the whole module, and the sums
        // of two then hit everything
        for include_zero in [false, true] {
            let q = query("t1", "t1 + t2", "1/2", include_zero);
            let report = min_m(&q, 8, &b).unwrap();
            assert_eq!(report.min_m, None);
            assert!(report.rows.iter().all(|r| !r.satisfiable));
        }
    }

    #[test]
    fn interval_plus_multiples_witness_is_found_at_twenty_five() {
        let b = Budget {
            subset_ground: 25,
            ..Budget::default()
        };
        // εm = 10 leaves room for the 9-element interval-and-multiples set
        let q = query("t1 + t2", "t1", "2/5", false);
        let out = property_holds(&q, 25, &b).unwrap();
        assert!(out.satisfiable && out.exhaustive);
        let w = out.witness.unwrap();
        assert!(w.len() <= 9);
        reverify(&q, 25, &w, &b).unwrap();
    }

    #[test]
    fn pruned_scan_matches_the_naive_oracle() {
        let b = Budget::default();
        let mut queries = vec![
            query("t1 - t2", "t1 + t2", "1/2", false),
            query("t1 - t2", "t1 + t2", "9/10", true),
            query("t1 - t2", "t1 + t2", "99/100", false),
            query("t1 + t2", "2*t1 - t2", "2/3", false),
            query("t1 - t2", "t1 + t2 + t3", "3/4", false),
        ];
        fn random_form(rng: &mut ChaCha8Rng) -> LinearForm {
            let pool = [-3i64, -2, -1, 1, 2, 3];
            let coeffs = (0..rng.gen_range(2..=3))
                .map(|_| pool[rng.gen_range(0..pool.len())])
                .collect();
            LinearForm::new(coeffs).unwrap()
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x6f72_6163);
        for eps in ["1/3", "1/2", "2/3", "9/10", "5/4"] {
            let upsilon = random_form(&mut rng);
            let phi = random_form(&mut rng);
            let include_zero = rng.gen_bool(0.5);
            queries.push(
                PropertyQuery::new(upsilon, phi, parse_rational(eps).unwrap(), include_zero)
                    .unwrap(),
            );
        }
        for q in &queries {
            for m in 1..=9 {
                let naive = naive_scan(q, m, &b).unwrap();
                let report = min_m(q, m, &b).unwrap();
                let row = report.rows.last().unwrap();
                assert_eq!(row, &naive, "mismatch at m = {m}");
            }
        }
    }

    #[test]
    fn smallest_modulus_shrinks_as_the_bound_relaxes() {
        let b = Budget::default();
        let grid = ["1/3", "1/2", "3/4", "1", "3/2"];
        let mut last = u64::MAX;
        for eps in grid {
            let q = query("t1 - t2", "t1 + t2", eps, false);
            let found = min_m(&q, 8, &b).unwrap().min_m.unwrap_or(u64::MAX);
            assert!(found <= last, "min m grew from {last} at ε = {eps}");
            last = found;
        }
    }

    #[test]
    fn difference_covering_with_sparse_sums_starts_at_six() {
        let b = Budget::default();
        let q = query("t1 - t2", "t1 + t2", "99/100", false);
        let report = min_m(&q, 7, &b).unwrap();
        // {0, 1, 3}: every difference, sums miss 5
        assert_eq!(report.min_m, Some(6));
        let row = &report.rows[5];
        assert_eq!(row.min_phi_image, Some(5));
        assert!(row.sizes.contains(&3));
        // at the prime 7 the minimum needs a perfect difference set
        assert_eq!(report.rows[6].min_phi_image, Some(6));
    }

    #[test]
    fn report_rows_serialize_to_csv_and_json() {
        let b = Budget::default();
        let q = query("t1 - t2", "t1 + t2", "99/100", false);
        let report = min_m(&q, 7, &b).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("m,satisfiable,min_phi_image,witness_bits_hex,sizes")
        );
        assert_eq!(lines.next(), Some("1,false,,,"));
        assert!(csv.lines().nth(6).unwrap().starts_with("6,true,5,"));
        let value: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(value["min_m"], 6);
        assert_eq!(value["rows"][5]["min_phi_image"], 5);
        assert_eq!(
            value["rows"][5]["witness_bits_hex"],
            report.rows[5].witness_bits_hex.clone().unwrap().as_str()
        );
    }

    #[test]
    fn bit_packing_is_most_significant_first() {
        assert_eq!(witness_bits_hex(12, &[0, 4, 11]), "8810");
        assert_eq!(witness_bits_hex(3, &[]), "00");
        assert_eq!(witness_bits_hex(8, &[7]), "01");
    }

    #[test]
    fn annealer_is_labeled_and_min_m_refuses_above_budget() {
        let b = Budget {
            subset_ground: 6,
            ..Budget::default()
        };
        let q = query("t1 - t2", "t1 + t2", "3/2", false);
        let out = property_holds(&q, 8, &b).unwrap();
        assert!(!out.exhaustive);
        assert!(out.satisfiable, "an easy target should be found");
        reverify(&q, 8, &out.witness.unwrap(), &b).unwrap();
        assert!(matches!(
            min_m(&q, 8, &b),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn symmetric_progression_has_ratio_one() {
        let b = Budget::default();
        let upsilon = parse_form("t1 - t2").unwrap();
        let phi = parse_form("t1 + t2").unwrap();
        let rows = ratio_report(&upsilon, &phi, &[(31, (0..10).collect())], &b).unwrap();
        assert_eq!(rows[0].upsilon_image, 19);
        assert_eq!(rows[0].phi_image, 19);
        assert_eq!(rows[0].ratio, Some(1.0));
        assert_eq!(rows[0].within_band, Some(true));
    }

    #[test]
    fn singleton_ratio_is_undefined() {
        let b = Budget::default();
        let upsilon = parse_form("t1 - t2").unwrap();
        let phi = parse_form("t1 + t2").unwrap();
        let rows = ratio_report(&upsilon, &phi, &[(11, vec![4])], &b).unwrap();
        assert_eq!(rows[0].phi_image, 1);
        assert_eq!(rows[0].ratio, None);
        assert_eq!(rows[0].within_band, None);
    }

    #[test]
    fn random_sets_never_leave_the_band() {
        let b = Budget::default();
        let upsilon = parse_form("t1 - t2").unwrap();
        let phi = parse_form("t1 + t2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0x7261_7469);
        let mut instances = Vec::new();
        for _ in 0..200 {
            let k = rng.gen_range(2..=60);
            let set = rand::seq::index::sample(&mut rng, 101, k)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            instances.push((101, set));
        }
        let rows = ratio_report(&upsilon, &phi, &instances, &b).unwrap();
        for row in rows {
            assert_eq!(row.within_band, Some(true), "violation: {row:?}");
        }
    }

    #[test]
    fn incremental_counts_agree_with_the_image_engine() {
        let b = Budget::default();
        let q = query("t1 - t2", "2*t1 + t2", "1", true);
        let m = 10;
        let mut state = ScanState::new(&q, m);
        let module = FiniteModule::cyclic(m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut present = Vec::new();
        for _ in 0..60 {
            let r = rng.gen_range(0..m);
            if let Some(pos) = present.iter().position(|&x| x == r) {
                present.swap_remove(pos);
                state.remove(r);
            } else {
                present.push(r);
                state.insert(r);
            }
            if present.is_empty() {
                assert_eq!(state.phi_distinct, 0);
                continue;
            }
            let set = SubsetOfModule::from_elements(
                &module,
                present.iter().map(|&r| Element(vec![r])),
                &b,
            )
            .unwrap();
            let phi_len = image(&q.phi, &set, &b).unwrap().len();
            assert_eq!(BigUint::from(state.phi_distinct), phi_len);
            let mut with_zero = set.clone();
            with_zero.insert(module.zero()).unwrap();
            let ups_len = image(&q.upsilon, &with_zero, &b).unwrap().len();
            assert_eq!(BigUint::from(state.ups_covered), ups_len);
        }
    }
}
