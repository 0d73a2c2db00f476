//! Admissible pairs of weight functions, the level filtration's bookkeeping.
//!
//! Fix a form Φ with coefficients φ_1, …, φ_h and a module M. A description
//! is a partition of the slots {1, …, h} into blocks placed on distinct
//! points of M, each block split in two; placing block I at y with split
//! I = I_0 ⊔ I_1 contributes α(y) = Σ_{i ∈ I_0} φ_i and β(y) = Σ_{i ∈ I_1} φ_i.
//! The resulting pair of finitely supported functions (α, β) on M is
//! admissible; its level is the size of its support (points whose value
//! pair is not (0, 0)). Every value w = Φ(f(x_1) + λ_1 x_1, …) of level ℓ
//! determines an admissible pair of level ℓ with w = Σ_x α(x)f(x) +
//! β(x)(f(x) + x), which is what makes these pairs the right index set for
//! the inductive step: one new coordinate per pair of level exactly ℓ + 1
//! kills all genuinely new values at that level.
//!
//! A block can contribute (0, 0) only when its coefficients sum to zero, so
//! a pair of level ℓ may arise from a description with more than ℓ blocks,
//! the extras parked on points outside the support. Enumeration accounts
//! for this; under the standing hypothesis 0 ∉ S(Φ) parking never occurs.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::LinearForm;
use crate::modules::{Element, FiniteModule};

/// A pair (α, β) of integer weight functions with common finite support,
/// stored sparsely. Support points are strictly increasing; no value pair
/// is (0, 0).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AdmissiblePair {
    support: Vec<Element>,
    alpha: Vec<i64>,
    beta: Vec<i64>,
}

impl AdmissiblePair {
    pub fn new(support: Vec<Element>, alpha: Vec<i64>, beta: Vec<i64>) -> Result<Self> {
        if support.len() != alpha.len() || support.len() != beta.len() {
            return Err(Error::ShapeMismatch {
                msg: "support, alpha, beta must have equal lengths".into(),
            });
        }
        if !support.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::ShapeMismatch {
                msg: "support points must be strictly increasing".into(),
            });
        }
        if alpha.iter().zip(&beta).any(|(&a, &b)| a == 0 && b == 0) {
            return Err(Error::ShapeMismatch {
                msg: "value pairs (0, 0) do not belong to the support".into(),
            });
        }
        Ok(AdmissiblePair {
            support,
            alpha,
            beta,
        })
    }

    pub fn level(&self) -> usize {
        self.support.len()
    }

    pub fn support(&self) -> &[Element] {
        &self.support
    }

    pub fn alpha(&self) -> &[i64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[i64] {
        &self.beta
    }

    /// (α(x), β(x)), zero off the support.
    pub fn value(&self, x: &Element) -> (i64, i64) {
        match self.support.binary_search(x) {
            Ok(i) => (self.alpha[i], self.beta[i]),
            Err(_) => (0, 0),
        }
    }

    /// w = Σ_x α(x)·f(x) + β(x)·(f(x) + x).
    pub fn evaluate<F>(&self, module: &FiniteModule, mut f: F) -> Element
    where
        F: FnMut(&Element) -> Element,
    {
        let mut w = module.zero();
        for (i, x) in self.support.iter().enumerate() {
            let fx = f(x);
            w = module.add(&w, &module.scalar_mul(self.alpha[i] + self.beta[i], &fx));
            w = module.add(&w, &module.scalar_mul(self.beta[i], x));
        }
        w
    }

    /// Image of the pair under coordinate truncation: fibers over a common
    /// prefix merge by adding weights, and points whose merged value pair
    /// is (0, 0) leave the support. The level can only drop.
    pub fn pushforward(&self, module: &FiniteModule, prefix_len: usize) -> Result<AdmissiblePair> {
        let mut merged: Vec<(Element, i64, i64)> = Vec::new();
        for (i, x) in self.support.iter().enumerate() {
            let y = module.project_prefix(prefix_len, x)?;
            match merged.iter_mut().find(|(p, _, _)| *p == y) {
                Some((_, a, b)) => {
                    *a = a.checked_add(self.alpha[i]).ok_or(Error::Overflow {
                        context: "pushforward weight".into(),
                    })?;
                    *b = b.checked_add(self.beta[i]).ok_or(Error::Overflow {
                        context: "pushforward weight".into(),
                    })?;
                }
                None => merged.push((y, self.alpha[i], self.beta[i])),
            }
        }
        merged.retain(|&(_, a, b)| a != 0 || b != 0);
        merged.sort();
        let (support, rest): (Vec<_>, Vec<_>) =
            merged.into_iter().map(|(p, a, b)| (p, (a, b))).unzip();
        let (alpha, beta) = rest.into_iter().unzip();
        AdmissiblePair::new(support, alpha, beta)
    }
}

// ---- Value tuples realizable at a given level ----

/// Ordered tuples of nonzero (α, β) value pairs realizable on a support of
/// size ℓ by some description with at most `max_blocks` blocks. Extra
/// blocks beyond ℓ must sum to zero and park off the support.
/// A partition of the slots {1, …, h} into nonempty blocks, each split in
/// two sides (either possibly empty). Blocks are ordered by least slot;
/// slots within a block and within each side are ascending.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockSplitPartition {
    splits: Vec<(Vec<usize>, Vec<usize>)>,
}

impl BlockSplitPartition {
    /// Number of blocks ℓ.
    pub fn level(&self) -> usize {
        self.splits.len()
    }

    /// The two sides (I_{j,0}, I_{j,1}) of each block, 1-based slots.
    pub fn splits(&self) -> &[(Vec<usize>, Vec<usize>)] {
        &self.splits
    }

    /// The blocks I_j = I_{j,0} ∪ I_{j,1}, slots ascending.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        self.splits
            .iter()
            .map(|(zero, one)| {
                let mut block: Vec<usize> = zero.iter().chain(one).copied().collect();
                block.sort_unstable();
                block
            })
            .collect()
    }

    /// (s_{I_{j,0}}, s_{I_{j,1}}) per block: the value pair the block
    /// contributes when placed on a point of the module.
    pub fn split_sums(&self, phi: &LinearForm) -> Result<Vec<(i64, i64)>> {
        let coeffs = phi.coefficients();
        let top = self
            .splits
            .iter()
            .flat_map(|(zero, one)| zero.iter().chain(one))
            .copied()
            .max()
            .unwrap_or(0);
        if top > coeffs.len() {
            return Err(Error::ShapeMismatch {
                msg: format!("slot {top} outside a form in {} variables", coeffs.len()),
            });
        }
        Ok(self
            .splits
            .iter()
            .map(|(zero, one)| {
                (
                    zero.iter().map(|&i| coeffs[i - 1]).sum(),
                    one.iter().map(|&i| coeffs[i - 1]).sum(),
                )
            })
            .collect())
    }
}

/// Streams every partition of {1, …, h} into exactly `ell` nonempty blocks,
/// combined with every two-sided split. Partitions advance through their
/// restricted growth strings in lexicographic order, so blocks always appear
/// sorted by least slot; within one partition the splits follow a binary
/// counter with slot i's side on bit i-1.
pub fn enumerate_partitions(h: usize, ell: usize) -> Result<BlockSplitIter> {
    if h == 0 || ell == 0 || ell > h {
        return Err(Error::ShapeMismatch {
            msg: format!("cannot split {h} slots into {ell} nonempty blocks"),
        });
    }
    if h > 60 {
        return Err(Error::ShapeMismatch {
            msg: format!("{h} slots overflow the split counter"),
        });
    }
    // lexicographically least growth string with exactly ell classes:
    // zeros, then the ramp 1, …, ell-1 at the tail
    let mut rgs = vec![0usize; h];
    for j in 1..ell {
        rgs[h - ell + j] = j;
    }
    Ok(BlockSplitIter {
        ell,
        rgs,
        mask: 0,
        done: false,
    })
}

pub struct BlockSplitIter {
    ell: usize,
    rgs: Vec<usize>,
    mask: u64,
    done: bool,
}

impl BlockSplitIter {
    fn item(&self) -> BlockSplitPartition {
        let mut splits = vec![(Vec::new(), Vec::new()); self.ell];
        for (i, &b) in self.rgs.iter().enumerate() {
            let (zero, one) = &mut splits[b];
            if self.mask >> i & 1 == 0 {
                zero.push(i + 1);
            } else {
                one.push(i + 1);
            }
        }
        BlockSplitPartition { splits }
    }

    /// Lexicographic successor among growth strings with exactly ell
    /// classes: bump the rightmost slot that still has a valid completion,
    /// then append zeros and the ramp of any missing classes.
    fn advance_partition(&mut self) -> bool {
        let h = self.rgs.len();
        let ell = self.ell;
        let mut i = h;
        while i > 1 {
            i -= 1;
            let prefix_max = *self.rgs[..i].iter().max().expect("nonempty prefix");
            let bumped = self.rgs[i] + 1;
            if bumped > prefix_max + 1 || bumped > ell - 1 {
                continue;
            }
            let classes = prefix_max.max(bumped) + 1;
            let suffix = h - 1 - i;
            if ell - classes > suffix {
                continue;
            }
            self.rgs[i] = bumped;
            for slot in &mut self.rgs[i + 1..] {
                *slot = 0;
            }
            for (k, class) in (classes..ell).enumerate() {
                self.rgs[h - (ell - classes) + k] = class;
            }
            return true;
        }
        false
    }
}

impl Iterator for BlockSplitIter {
    type Item = BlockSplitPartition;

    fn next(&mut self) -> Option<BlockSplitPartition> {
        if self.done {
            return None;
        }
        let item = self.item();
        self.mask += 1;
        if self.mask == 1 << self.rgs.len() {
            self.mask = 0;
            self.done = !self.advance_partition();
        }
        Some(item)
    }
}

fn level_value_tuples(
    phi: &LinearForm,
    ell: usize,
    max_blocks: usize,
    budget: &Budget,
) -> Result<Vec<Vec<(i64, i64)>>> {
    let h = phi.arity();
    budget.check_arity(h)?;
    // Bell(h)·2^h descriptions, each expanded into at most ℓ! orderings;
    // h^h overestimates Bell(h)
    let mut bound = 1u64;
    for _ in 0..h {
        bound = bound.saturating_mul((h as u64).max(2));
    }
    let perms: u64 = (1..=ell as u64).product();
    budget.check_work(
        bound.saturating_mul(1 << h).saturating_mul(perms),
        "enumerating value tuples",
    )?;
    let coeffs = phi.coefficients();
    let mut out: BTreeSet<Vec<(i64, i64)>> = BTreeSet::new();
    let mut rgs = vec![0usize; h];
    visit_partitions(&mut rgs, 1, 1, &mut |blocks: &[usize], nblocks: usize| {
        if nblocks < ell || nblocks > max_blocks {
            return;
        }
        for lambda in 0..1u64 << h {
            let mut pairs = vec![(0i64, 0i64); nblocks];
            for i in 0..h {
                let p = &mut pairs[blocks[i]];
                if lambda >> i & 1 == 0 {
                    p.0 += coeffs[i];
                } else {
                    p.1 += coeffs[i];
                }
            }
            let mut nz: Vec<(i64, i64)> = pairs.iter().copied().filter(|&p| p != (0, 0)).collect();
            if nz.len() != ell {
                continue;
            }
            nz.sort();
            loop {
                out.insert(nz.clone());
                if !next_permutation(&mut nz) {
                    break;
                }
            }
        }
    });
    Ok(out.into_iter().collect())
}

/// Visits every partition of {0, …, h-1} as a restricted growth string:
/// slot i's block index, with block indices first appearing in order.
fn visit_partitions<V>(rgs: &mut Vec<usize>, at: usize, nblocks: usize, visit: &mut V)
where
    V: FnMut(&[usize], usize),
{
    if at == rgs.len() {
        visit(rgs, nblocks);
        return;
    }
    for b in 0..=nblocks {
        rgs[at] = b;
        visit_partitions(rgs, at + 1, nblocks.max(b + 1), visit);
    }
}

fn next_permutation<T: Ord>(v: &mut [T]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

// ---- Big binomials and colex (un)ranking ----

pub(crate) fn binomial_big(n: &BigUint, k: u64) -> BigUint {
    if BigUint::from(k) > *n {
        return BigUint::zero();
    }
    let mut num = BigUint::one();
    let mut den = BigUint::one();
    for i in 0..k {
        num *= n - BigUint::from(i);
        den *= BigUint::from(i + 1);
    }
    num / den
}

fn falling_factorial_big(n: &BigUint, k: u64) -> BigUint {
    if BigUint::from(k) > *n {
        return BigUint::zero();
    }
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - BigUint::from(i);
    }
    acc
}

fn stirling2(h: usize, k: usize) -> BigUint {
    // S(h, k) by the triangle recurrence
    let mut row = vec![BigUint::zero(); k + 1];
    row[0] = BigUint::one();
    for _ in 0..h {
        for j in (1..=k).rev() {
            row[j] = &row[j] * BigUint::from(j) + &row[j - 1];
        }
        row[0] = BigUint::zero();
    }
    row[k].clone()
}

/// Colex rank of a strictly increasing index set: Σ_j C(i_j, j+1).
fn colex_rank(indices: &[BigUint]) -> BigUint {
    let mut r = BigUint::zero();
    for (j, i) in indices.iter().enumerate() {
        r += binomial_big(i, j as u64 + 1);
    }
    r
}

/// Inverse of `colex_rank` for subsets of {0, …, n-1} of size k.
fn colex_unrank(rank: &BigUint, n: &BigUint, k: usize) -> Vec<BigUint> {
    let mut r = rank.clone();
    let mut hi = n.clone();
    let mut out = vec![BigUint::zero(); k];
    for j in (1..=k).rev() {
        // largest c with C(c, j) <= r, searched in [j-1, hi)
        let mut lo = BigUint::from(j - 1);
        let mut high = hi.clone();
        while &lo + BigUint::one() < high {
            let mid = (&lo + &high) >> 1;
            if binomial_big(&mid, j as u64) <= r {
                lo = mid;
            } else {
                high = mid;
            }
        }
        r -= binomial_big(&lo, j as u64);
        hi = lo.clone();
        out[j - 1] = lo;
    }
    out
}

// ---- Enumeration ----

/// All admissible pairs for Φ on M of level exactly ℓ. The count factors as
/// C(|M|, ℓ) · t where t is the number of realizable ordered value tuples:
/// pairs are ordered by (support in colex position order, tuple index).
#[derive(Debug, Clone)]
pub struct AdmissibleEnumeration {
    module: FiniteModule,
    ell: usize,
    tuples: Vec<Vec<(i64, i64)>>,
    count: BigUint,
}

impl AdmissibleEnumeration {
    pub fn new(
        phi: &LinearForm,
        module: &FiniteModule,
        ell: usize,
        budget: &Budget,
    ) -> Result<Self> {
        if ell == 0 || ell > phi.arity() {
            return Err(Error::ShapeMismatch {
                msg: format!("level {ell} outside 1..={}", phi.arity()),
            });
        }
        let card = module.cardinality();
        let max_blocks = card
            .to_u64()
            .map_or(phi.arity(), |c| (c as usize).min(phi.arity()));
        let tuples = level_value_tuples(phi, ell, max_blocks, budget)?;
        let count = binomial_big(&card, ell as u64) * BigUint::from(tuples.len());
        Ok(AdmissibleEnumeration {
            module: module.clone(),
            ell,
            tuples,
            count,
        })
    }

    /// Number of pairs of level exactly ℓ.
    pub fn count(&self) -> &BigUint {
        &self.count
    }

    pub fn level(&self) -> usize {
        self.ell
    }

    pub fn tuple_count(&self) -> usize {
        self.tuples.len()
    }

    /// The realizable ordered value tuples, sorted.
    pub fn tuples(&self) -> &[Vec<(i64, i64)>] {
        &self.tuples
    }

    pub fn module(&self) -> &FiniteModule {
        &self.module
    }

    /// The pair at position `rank` in enumeration order.
    pub fn pair_at(&self, rank: &BigUint) -> Result<AdmissiblePair> {
        if rank >= &self.count {
            return Err(Error::IndexOutOfRange {
                index: rank.to_usize().unwrap_or(usize::MAX),
                len: self.count.to_usize().unwrap_or(usize::MAX),
            });
        }
        let t = BigUint::from(self.tuples.len());
        let support_rank = rank / &t;
        let tuple_idx = (rank % &t).to_usize().unwrap();
        let indices = colex_unrank(&support_rank, &self.module.cardinality(), self.ell);
        let support: Vec<Element> = indices
            .iter()
            .map(|i| self.module.element_at_lex(i))
            .collect();
        let tuple = &self.tuples[tuple_idx];
        AdmissiblePair::new(
            support,
            tuple.iter().map(|p| p.0).collect(),
            tuple.iter().map(|p| p.1).collect(),
        )
    }

    /// Position of `pair` in enumeration order.
    pub fn rank(&self, pair: &AdmissiblePair) -> Result<BigUint> {
        if pair.level() != self.ell {
            return Err(Error::ShapeMismatch {
                msg: format!(
                    "pair has level {}, enumeration holds {}",
                    pair.level(),
                    self.ell
                ),
            });
        }
        let tuple: Vec<(i64, i64)> = pair
            .alpha
            .iter()
            .zip(&pair.beta)
            .map(|(&a, &b)| (a, b))
            .collect();
        let tuple_idx = self
            .tuples
            .binary_search(&tuple)
            .map_err(|_| Error::ShapeMismatch {
                msg: "value tuple is not realizable at this level".into(),
            })?;
        let indices: Vec<BigUint> = pair
            .support
            .iter()
            .map(|x| self.module.lex_index(x))
            .collect();
        Ok(colex_rank(&indices) * BigUint::from(self.tuples.len()) + BigUint::from(tuple_idx))
    }

    /// Streams pairs in enumeration order. Requires |M| to fit in u64.
    pub fn iter(&self) -> Result<AdmissiblePairIter<'_>> {
        let card = self.module.cardinality_u64().ok_or(Error::BudgetExceeded {
            what: "streaming admissible pairs".into(),
            needed: self.module.cardinality().to_string(),
            cap: u64::MAX.to_string(),
        })?;
        Ok(AdmissiblePairIter {
            enumeration: self,
            card,
            combo: (0..self.ell as u64).collect(),
            tuple_idx: 0,
            done: card < self.ell as u64 || self.tuples.is_empty(),
        })
    }

    /// Uniform sample among all pairs of this level.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<AdmissiblePair> {
        if self.count.is_zero() {
            return Err(Error::Undefined {
                msg: "no pairs at this level".into(),
            });
        }
        let tuple_idx = rng.gen_range(0..self.tuples.len());
        let mut picked: BTreeSet<Element> = BTreeSet::new();
        while picked.len() < self.ell {
            picked.insert(self.module.random_element(rng));
        }
        let support: Vec<Element> = picked.into_iter().collect();
        let tuple = &self.tuples[tuple_idx];
        AdmissiblePair::new(
            support,
            tuple.iter().map(|p| p.0).collect(),
            tuple.iter().map(|p| p.1).collect(),
        )
    }
}

/// Supports advance in colex order, the value tuple cycling fastest, so the
/// stream position always equals `rank` of the yielded pair.
pub struct AdmissiblePairIter<'a> {
    enumeration: &'a AdmissibleEnumeration,
    card: u64,
    combo: Vec<u64>,
    tuple_idx: usize,
    done: bool,
}

impl Iterator for AdmissiblePairIter<'_> {
    type Item = AdmissiblePair;

    fn next(&mut self) -> Option<AdmissiblePair> {
        if self.done {
            return None;
        }
        let e = self.enumeration;
        let support: Vec<Element> = self
            .combo
            .iter()
            .map(|&i| e.module.element_at_lex(&BigUint::from(i)))
            .collect();
        let tuple = &e.tuples[self.tuple_idx];
        let pair = AdmissiblePair::new(
            support,
            tuple.iter().map(|p| p.0).collect(),
            tuple.iter().map(|p| p.1).collect(),
        )
        .expect("streamed pairs are well formed");
        self.tuple_idx += 1;
        if self.tuple_idx == e.tuples.len() {
            self.tuple_idx = 0;
            // colex successor: bump the lowest slot that stays below its
            // right neighbor, resetting everything beneath it
            let k = self.combo.len();
            let mut j = 0;
            loop {
                if j == k {
                    self.done = true;
                    break;
                }
                let cap = if j + 1 < k {
                    self.combo[j + 1]
                } else {
                    self.card
                };
                if self.combo[j] + 1 < cap {
                    self.combo[j] += 1;
                    for (i, slot) in self.combo[..j].iter_mut().enumerate() {
                        *slot = i as u64;
                    }
                    break;
                }
                j += 1;
            }
        }
        Some(pair)
    }
}

/// Size of the raw description space with exactly ℓ blocks: orderings of ℓ
/// distinct points times partitions of the slots into ℓ blocks times 2^h
/// splits. Many descriptions collapse to one pair; enumeration counts pairs.
pub fn description_count(phi: &LinearForm, module: &FiniteModule, ell: usize) -> BigUint {
    falling_factorial_big(&module.cardinality(), ell as u64)
        * stirling2(phi.arity(), ell)
        * (BigUint::one() << phi.arity())
}

/// Independent oracle: realize every description on actual module points
/// and deduplicate by the resulting weight functions.
pub fn brute_force_pairs(
    phi: &LinearForm,
    module: &FiniteModule,
    ell: usize,
    budget: &Budget,
) -> Result<BTreeSet<AdmissiblePair>> {
    let h = phi.arity();
    let card = module.cardinality().to_u64().ok_or(Error::BudgetExceeded {
        what: "brute force admissible enumeration".into(),
        needed: module.cardinality().to_string(),
        cap: budget.work.to_string(),
    })?;
    budget.check_work(
        card.saturating_pow(h as u32)
            .saturating_mul(1 << h)
            .saturating_mul((1..=h as u64).product::<u64>()),
        "brute force admissible enumeration",
    )?;
    let elems: Vec<Element> = module.elements().collect();
    let coeffs = phi.coefficients();
    let mut out = BTreeSet::new();
    let mut rgs = vec![0usize; h];
    visit_partitions(&mut rgs, 1, 1, &mut |blocks: &[usize], nblocks: usize| {
        if nblocks as u64 > card {
            return;
        }
        // injective placements of blocks onto points, by odometer with a
        // distinctness filter
        let mut place = vec![0usize; nblocks];
        'place: loop {
            let distinct = {
                let mut seen = vec![false; elems.len()];
                place
                    .iter()
                    .all(|&p| !std::mem::replace(&mut seen[p], true))
            };
            if distinct {
                for lambda in 0..1u64 << h {
                    let mut triples: Vec<(Element, i64, i64)> = Vec::new();
                    for i in 0..h {
                        let y = &elems[place[blocks[i]]];
                        match triples.iter_mut().find(|(p, _, _)| p == y) {
                            Some((_, a, b)) => {
                                if lambda >> i & 1 == 0 {
                                    *a += coeffs[i];
                                } else {
                                    *b += coeffs[i];
                                }
                            }
                            None => {
                                let (mut a, mut b) = (0i64, 0i64);
                                if lambda >> i & 1 == 0 {
                                    a = coeffs[i];
                                } else {
                                    b = coeffs[i];
                                }
                                triples.push((y.clone(), a, b));
                            }
                        }
                    }
                    triples.retain(|&(_, a, b)| a != 0 || b != 0);
                    if triples.len() != ell {
                        continue;
                    }
                    triples.sort();
                    let support = triples.iter().map(|t| t.0.clone()).collect();
                    let alpha = triples.iter().map(|t| t.1).collect();
                    let beta = triples.iter().map(|t| t.2).collect();
                    out.insert(AdmissiblePair::new(support, alpha, beta).unwrap());
                }
            }
            let mut pos = nblocks;
            loop {
                if pos == 0 {
                    break 'place;
                }
                pos -= 1;
                place[pos] += 1;
                if place[pos] < elems.len() {
                    break;
                }
                place[pos] = 0;
            }
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_form;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn form(s: &str) -> LinearForm {
        parse_form(s).unwrap()
    }

    fn module(factors: &[u64]) -> FiniteModule {
        FiniteModule::new(factors.to_vec()).unwrap()
    }

    #[test]
    fn level_one_pairs_on_five_points() {
        let b = Budget::default();
        let e = AdmissibleEnumeration::new(&form("t1+t2"), &module(&[5]), 1, &b).unwrap();
        assert_eq!(e.count(), &BigUint::from(15u32));
        let tuples: BTreeSet<Vec<(i64, i64)>> = e
            .iter()
            .unwrap()
            .map(|p| vec![(p.alpha()[0], p.beta()[0])])
            .collect();
        let expected: BTreeSet<Vec<(i64, i64)>> = [vec![(2, 0)], vec![(1, 1)], vec![(0, 2)]]
            .into_iter()
            .collect();
        assert_eq!(tuples, expected);
        assert_eq!(e.iter().unwrap().count(), 15);
    }

    #[test]
    fn level_two_pairs_on_two_points() {
        let b = Budget::default();
        let e = AdmissibleEnumeration::new(&form("t1+t2"), &module(&[2]), 2, &b).unwrap();
        assert_eq!(e.count(), &BigUint::from(4u32));
        let streamed: BTreeSet<AdmissiblePair> = e.iter().unwrap().collect();
        let oracle = brute_force_pairs(&form("t1+t2"), &module(&[2]), 2, &b).unwrap();
        assert_eq!(streamed, oracle);
    }

    #[test]
    fn description_space_sizes() {
        assert_eq!(
            description_count(&form("t1+t2"), &module(&[5]), 1),
            BigUint::from(20u32)
        );
        assert_eq!(
            description_count(&form("t1+t2"), &module(&[2]), 2),
            BigUint::from(8u32)
        );
    }

    #[test]
    fn toy_level_two_count() {
        let b = Budget::default();
        let e = AdmissibleEnumeration::new(&form("t1+t2"), &module(&[5, 7]), 2, &b).unwrap();
        // C(35, 2) · 4 value tuples
        assert_eq!(e.count(), &BigUint::from(2380u32));
    }

    #[test]
    fn streaming_matches_brute_force_with_parking() {
        // t1 - t2 + t3 has the zero-sum block {1, 2}, so level-1 pairs can
        // come from two-block descriptions with one block parked
        let b = Budget::default();
        for (phi, m, ell) in [
            ("t1-t2+t3", 5u64, 1usize),
            ("t1-t2+t3", 5, 2),
            ("t1-t2", 7, 1),
            ("t1-t2", 7, 2),
            ("2t1-t2", 6, 2),
            ("t1+t2-2t3", 4, 3),
        ] {
            let phi = form(phi);
            let md = module(&[m]);
            let e = AdmissibleEnumeration::new(&phi, &md, ell, &b).unwrap();
            let streamed: BTreeSet<AdmissiblePair> = e.iter().unwrap().collect();
            let oracle = brute_force_pairs(&phi, &md, ell, &b).unwrap();
            assert_eq!(streamed, oracle, "{phi} on Z/{m} at level {ell}");
            assert_eq!(e.count(), &BigUint::from(streamed.len()), "{phi} count");
        }
    }

    #[test]
    fn parked_blocks_add_level_one_pairs() {
        // for t1 - t2 + t3, the value (1, 0) at a single point needs the
        // two-block description {1,2} parked, {3} split onto the support
        let b = Budget::default();
        let md = module(&[5]);
        let e = AdmissibleEnumeration::new(&form("t1-t2+t3"), &md, 1, &b).unwrap();
        let pair = AdmissiblePair::new(vec![Element(vec![2])], vec![1], vec![0]).unwrap();
        let rank = e.rank(&pair).unwrap();
        assert_eq!(e.pair_at(&rank).unwrap(), pair);
    }

    #[test]
    fn rank_and_pair_at_are_inverse_along_the_stream() {
        let b = Budget::default();
        let e = AdmissibleEnumeration::new(&form("t1+t2"), &module(&[3, 4]), 2, &b).unwrap();
        for (i, pair) in e.iter().unwrap().enumerate() {
            let r = BigUint::from(i);
            assert_eq!(e.pair_at(&r).unwrap(), pair);
            assert_eq!(e.rank(&pair).unwrap(), r);
        }
    }

    #[test]
    fn sampling_stays_in_range() {
        let b = Budget::default();
        let e = AdmissibleEnumeration::new(&form("t1+t2"), &module(&[5, 7]), 2, &b).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = e.sample(&mut rng).unwrap();
            assert_eq!(p.level(), 2);
            let r = e.rank(&p).unwrap();
            assert!(&r < e.count());
            assert_eq!(e.pair_at(&r).unwrap(), p);
        }
    }

    #[test]
    fn evaluate_matches_weight_sum() {
        let md = module(&[5, 7]);
        let pair = AdmissiblePair::new(
            vec![Element(vec![1, 2]), Element(vec![3, 4])],
            vec![1, 0],
            vec![1, 2],
        )
        .unwrap();
        // f doubles each element
        let f = |x: &Element| md.scalar_mul(2, x);
        let w = pair.evaluate(&md, f);
        let expect = {
            let t1 = md.scalar_mul(4, &Element(vec![1, 2])); // (α+β)·f = 2·2x at x1
            let t2 = md.scalar_mul(1, &Element(vec![1, 2])); // β·x at x1
            let t3 = md.scalar_mul(4, &Element(vec![3, 4])); // (α+β)·f at x2
            let t4 = md.scalar_mul(2, &Element(vec![3, 4])); // β·x at x2
            md.add(&md.add(&t1, &t2), &md.add(&t3, &t4))
        };
        assert_eq!(w, expect);
    }

    #[test]
    fn pushforward_merges_fibers() {
        let md = module(&[5, 7]);
        let pair = AdmissiblePair::new(
            vec![Element(vec![2, 3]), Element(vec![2, 5])],
            vec![1, 1],
            vec![0, 0],
        )
        .unwrap();
        let pushed = pair.pushforward(&md, 1).unwrap();
        assert_eq!(pushed.support(), &[Element(vec![2])]);
        assert_eq!(pushed.alpha(), &[2]);
        assert_eq!(pushed.beta(), &[0]);
        assert_eq!(pushed.level(), 1);
        // cancelling weights drop the point entirely
        let cancel = AdmissiblePair::new(
            vec![Element(vec![2, 3]), Element(vec![2, 5])],
            vec![1, -1],
            vec![0, 0],
        )
        .unwrap();
        assert_eq!(cancel.pushforward(&md, 1).unwrap().level(), 0);
    }

    #[test]
    fn partition_streams_match_their_closed_counts() {
        // Stirling numbers of the second kind times 2^h splits.
        for (h, ell, want) in [(2, 2, 4), (2, 1, 4), (1, 1, 2), (4, 2, 7 * 16), (4, 4, 16)] {
            let got = enumerate_partitions(h, ell).unwrap().count();
            assert_eq!(got, want, "h={h}, ell={ell}");
        }
        assert!(enumerate_partitions(2, 3).is_err());
        assert!(enumerate_partitions(2, 0).is_err());
    }

    #[test]
    fn partitions_are_canonical_distinct_and_cover_the_slots() {
        let items: Vec<BlockSplitPartition> = enumerate_partitions(4, 2).unwrap().collect();
        let distinct: BTreeSet<&BlockSplitPartition> = items.iter().collect();
        assert_eq!(distinct.len(), items.len());
        for item in &items {
            assert_eq!(item.level(), 2);
            let blocks = item.blocks();
            let mut all: Vec<usize> = blocks.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, vec![1, 2, 3, 4], "blocks must cover the slots once");
            assert!(blocks.iter().all(|b| !b.is_empty()));
            // canonical order: blocks sorted by least slot
            let leads: Vec<usize> = blocks.iter().map(|b| b[0]).collect();
            assert!(leads.windows(2).all(|w| w[0] < w[1]));
        }
        // splits run through a binary counter before the partition advances
        let first = &items[0];
        assert_eq!(
            first.splits(),
            &[(vec![1, 2, 3], vec![]), (vec![4], vec![])]
        );
        let second = &items[1];
        assert_eq!(second.splits(), &[(vec![2, 3], vec![1]), (vec![4], vec![])]);
    }

    #[test]
    fn split_sums_feed_the_value_tuple_oracle() {
        let b = Budget::default();
        let md = module(&[5]);
        // Up to block order, the deduplicated split sums are exactly the
        // value tuples the pair enumeration is built on.
        for (coeffs, ell) in [
            (vec![1, 1], 1),
            (vec![2, -1], 1),
            (vec![1, 1], 2),
            (vec![1, 1, -3], 2),
        ] {
            let phi = LinearForm::new(coeffs).unwrap();
            let h = phi.arity();
            let mut from_partitions: BTreeSet<Vec<(i64, i64)>> = BTreeSet::new();
            for part in enumerate_partitions(h, ell).unwrap() {
                let mut sums = part.split_sums(&phi).unwrap();
                if sums.contains(&(0, 0)) {
                    continue; // a vanishing block lowers the level
                }
                sums.sort_unstable();
                from_partitions.insert(sums);
            }
            let enumeration = AdmissibleEnumeration::new(&phi, &md, ell, &b).unwrap();
            let from_tuples: BTreeSet<Vec<(i64, i64)>> = enumeration
                .tuples()
                .iter()
                .map(|t| {
                    let mut t = t.clone();
                    t.sort_unstable();
                    t
                })
                .collect();
            assert_eq!(from_partitions, from_tuples, "Φ={phi}, ell={ell}");
        }
        // The two-variable sum at level 1 degenerates to three value pairs.
        let phi = LinearForm::new(vec![1, 1]).unwrap();
        let pairs: BTreeSet<Vec<(i64, i64)>> = enumerate_partitions(2, 1)
            .unwrap()
            .map(|p| p.split_sums(&phi).unwrap())
            .collect();
        assert_eq!(
            pairs,
            BTreeSet::from([vec![(2, 0)], vec![(1, 1)], vec![(0, 2)]])
        );
    }
}
