//! Exact images of linear forms and the level filtration.
//!
//! Φ(A) = {Φ(a_1, …, a_h) : a_i ∈ A} is computed as the iterated sumset of
//! dilates φ_1·A + … + φ_h·A. For sets A = A(M, f) = {f(x)} ∪ {f(x) + x},
//! elements of the image carry representations w = Φ(f(x_1) + λ_1 x_1, …)
//! whose level is the number of distinct base points x_i; Φ^{(ℓ)}(A) is the
//! subset of the image reachable at level ≤ ℓ. A naive h-fold tuple
//! enumeration lives alongside the sumset engine as an independent oracle.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::LinearForm;
use crate::modules::{mod_inverse_u64, Element, FiniteModule};
use crate::primes::mul_mod;

// ---- Dense bit sets over a flattened cyclic group ----

/// Fixed-width bit set over Z/mZ. Bits at positions ≥ m stay zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BitSet {
    m: usize,
    words: Vec<u64>,
}

impl BitSet {
    pub fn new(m: usize) -> Self {
        BitSet {
            m,
            words: vec![0; m.div_ceil(64)],
        }
    }

    pub fn set(&mut self, i: usize) {
        debug_assert!(i < self.m);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn get(&self, i: usize) -> bool {
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn count(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn words(&self) -> usize {
        self.words.len()
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let b = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(wi * 64 + b)
            })
        })
    }

    pub fn or_assign(&mut self, other: &BitSet) {
        for (d, s) in self.words.iter_mut().zip(&other.words) {
            *d |= *s;
        }
    }

    /// self |= other rotated by `shift` positions (mod m).
    pub fn or_rotated(&mut self, other: &BitSet, shift: usize) {
        debug_assert_eq!(self.m, other.m);
        let s = shift % self.m;
        if s == 0 {
            self.or_assign(other);
            return;
        }
        or_bit_range(&mut self.words, &other.words, 0, s, self.m - s);
        or_bit_range(&mut self.words, &other.words, self.m - s, 0, s);
    }
}

/// Reads up to 64 bits of `src` starting at bit `start`. Bits past the end
/// of the slice read as zero.
fn read_bits(src: &[u64], start: usize, count: usize) -> u64 {
    let w = start / 64;
    let b = start % 64;
    let lo = src[w] >> b;
    let hi = if b != 0 && w + 1 < src.len() {
        src[w + 1] << (64 - b)
    } else {
        0
    };
    let v = lo | hi;
    if count == 64 {
        v
    } else {
        v & ((1u64 << count) - 1)
    }
}

/// ORs `len` bits of `src` starting at `s` into `dst` starting at `d`.
fn or_bit_range(dst: &mut [u64], src: &[u64], mut s: usize, mut d: usize, mut len: usize) {
    while len > 0 {
        let d_word = d / 64;
        let d_bit = d % 64;
        let take = (64 - d_bit).min(len);
        let bits = read_bits(src, s, take);
        dst[d_word] |= bits << d_bit;
        len -= take;
        s += take;
        d += take;
    }
}

// ---- Flattening index for the dense representation ----

/// u64 CRT basis: flatten(x) = Σ basis_i·x_i mod m for pairwise-coprime
/// factors whose product fits u64.
#[derive(Debug, Clone)]
struct DenseIndex {
    modulus: u64,
    factors: Vec<u64>,
    basis: Vec<u64>,
}

impl DenseIndex {
    fn build(module: &FiniteModule) -> Option<DenseIndex> {
        if !module.pairwise_coprime() {
            return None;
        }
        let modulus = module.cardinality().to_u64()?;
        let factors = module.factors().to_vec();
        let mut basis = Vec::with_capacity(factors.len());
        for &mi in &factors {
            let others = modulus / mi;
            let inv = mod_inverse_u64(others % mi, mi).ok()?;
            basis.push(mul_mod(others % modulus, inv, modulus));
        }
        Some(DenseIndex {
            modulus,
            factors,
            basis,
        })
    }

    fn flatten(&self, x: &Element) -> u64 {
        let mut acc = 0u64;
        for (&c, &b) in x.coords().iter().zip(&self.basis) {
            acc = (acc as u128 + mul_mod(b, c, self.modulus) as u128) as u64 % self.modulus;
        }
        acc
    }

    fn unflatten(&self, v: u64) -> Element {
        Element(self.factors.iter().map(|&m| v % m).collect())
    }
}

// ---- Subsets of a module ----

#[derive(Debug, Clone)]
enum Repr {
    Dense { index: DenseIndex, bits: BitSet },
    Hashed { set: BTreeSet<Element> },
}

/// A finite subset of a module. Uses a bit vector over the CRT-flattened
/// cyclic group when the factors are coprime and the cardinality fits the
/// budget; otherwise an ordered hashed set. Purely a performance split.
#[derive(Debug, Clone)]
pub struct SubsetOfModule {
    module: FiniteModule,
    repr: Repr,
}

impl SubsetOfModule {
    pub fn empty(module: &FiniteModule, budget: &Budget) -> Self {
        let dense = DenseIndex::build(module)
            .filter(|ix| ix.modulus <= budget.set_bits)
            .map(|index| Repr::Dense {
                bits: BitSet::new(index.modulus as usize),
                index,
            });
        SubsetOfModule {
            module: module.clone(),
            repr: dense.unwrap_or(Repr::Hashed {
                set: BTreeSet::new(),
            }),
        }
    }

    pub fn from_elements<I>(module: &FiniteModule, elems: I, budget: &Budget) -> Result<Self>
    where
        I: IntoIterator<Item = Element>,
    {
        let mut s = SubsetOfModule::empty(module, budget);
        for e in elems {
            s.insert(e)?;
        }
        Ok(s)
    }

    pub fn module(&self) -> &FiniteModule {
        &self.module
    }

    pub fn insert(&mut self, e: Element) -> Result<()> {
        if !self.module.contains(&e) {
            return Err(Error::ShapeMismatch {
                msg: format!("element {e} does not belong to {}", self.module),
            });
        }
        match &mut self.repr {
            Repr::Dense { index, bits } => bits.set(index.flatten(&e) as usize),
            Repr::Hashed { set } => {
                set.insert(e);
            }
        }
        Ok(())
    }

    pub fn contains(&self, e: &Element) -> bool {
        match &self.repr {
            Repr::Dense { index, bits } => bits.get(index.flatten(e) as usize),
            Repr::Hashed { set } => set.contains(e),
        }
    }

    pub fn len(&self) -> BigUint {
        match &self.repr {
            Repr::Dense { bits, .. } => BigUint::from(bits.count()),
            Repr::Hashed { set } => BigUint::from(set.len()),
        }
    }

    pub fn len_u64(&self) -> u64 {
        match &self.repr {
            Repr::Dense { bits, .. } => bits.count(),
            Repr::Hashed { set } => set.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len_u64() == 0
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.module.cardinality()
    }

    /// Elements in lexicographic coordinate order.
    pub fn sorted_elements(&self) -> Vec<Element> {
        match &self.repr {
            Repr::Dense { index, bits } => {
                let mut v: Vec<Element> = bits
                    .iter_ones()
                    .map(|i| index.unflatten(i as u64))
                    .collect();
                v.sort();
                v
            }
            Repr::Hashed { set } => set.iter().cloned().collect(),
        }
    }

    pub fn element_set(&self) -> BTreeSet<Element> {
        self.sorted_elements().into_iter().collect()
    }

    pub fn set_eq(&self, other: &SubsetOfModule) -> bool {
        self.module == other.module && self.element_set() == other.element_set()
    }

    pub fn is_subset(&self, other: &SubsetOfModule) -> bool {
        if self.module != other.module {
            return false;
        }
        match (&self.repr, &other.repr) {
            (Repr::Dense { bits: a, .. }, Repr::Dense { bits: b, .. }) => {
                a.words.iter().zip(&b.words).all(|(x, y)| x & !y == 0)
            }
            _ => self.sorted_elements().iter().all(|e| other.contains(e)),
        }
    }
}

// ---- Image computation ----

fn normalize_coeff(c: i64, m: u64) -> u64 {
    (c as i128).rem_euclid(m as i128) as u64
}

/// Exact Φ(A) as the iterated sumset of dilates φ_1·A + … + φ_h·A.
pub fn image(phi: &LinearForm, a: &SubsetOfModule, budget: &Budget) -> Result<SubsetOfModule> {
    let module = a.module();
    if a.is_empty() {
        return Ok(SubsetOfModule::empty(module, budget));
    }
    match &a.repr {
        Repr::Dense { index, bits } => {
            let m = index.modulus;
            let dilate = |c: i64| -> BitSet {
                let k = normalize_coeff(c, m);
                let mut d = BitSet::new(m as usize);
                for v in bits.iter_ones() {
                    d.set(mul_mod(k, v as u64, m) as usize);
                }
                d
            };
            let mut acc = dilate(phi.coefficients()[0]);
            for &c in &phi.coefficients()[1..] {
                let d = dilate(c);
                budget.check_work(
                    d.count().saturating_mul(acc.words() as u64),
                    "sumset of dilates",
                )?;
                let mut next = BitSet::new(m as usize);
                for shift in d.iter_ones() {
                    next.or_rotated(&acc, shift);
                }
                acc = next;
            }
            Ok(SubsetOfModule {
                module: module.clone(),
                repr: Repr::Dense {
                    index: index.clone(),
                    bits: acc,
                },
            })
        }
        Repr::Hashed { set } => {
            let mut acc: BTreeSet<Element> = set
                .iter()
                .map(|e| module.scalar_mul(phi.coefficients()[0], e))
                .collect();
            for &c in &phi.coefficients()[1..] {
                budget.check_work(
                    (acc.len() as u64).saturating_mul(set.len() as u64),
                    "pointwise sumset",
                )?;
                let mut next = BTreeSet::new();
                for r in &acc {
                    for e in set {
                        next.insert(module.add(r, &module.scalar_mul(c, e)));
                    }
                }
                acc = next;
            }
            Ok(SubsetOfModule {
                module: module.clone(),
                repr: Repr::Hashed { set: acc },
            })
        }
    }
}

/// Independent oracle: enumerate all |A|^h tuples.
pub fn naive_image(
    phi: &LinearForm,
    module: &FiniteModule,
    a: &[Element],
    budget: &Budget,
) -> Result<BTreeSet<Element>> {
    let h = phi.arity();
    if a.is_empty() {
        return Ok(BTreeSet::new());
    }
    let tuples = (a.len() as u64)
        .checked_pow(h as u32)
        .ok_or(Error::Overflow {
            context: "counting tuples".into(),
        })?;
    budget.check_work(tuples, "naive tuple enumeration")?;
    let mut out = BTreeSet::new();
    let mut idx = vec![0usize; h];
    loop {
        let mut w = module.zero();
        for (i, &c) in phi.coefficients().iter().enumerate() {
            w = module.add(&w, &module.scalar_mul(c, &a[idx[i]]));
        }
        out.insert(w);
        // odometer
        let mut pos = h;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < a.len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Υ(A) = M, optionally adjoining 0 to A first.
pub fn is_surjective(
    upsilon: &LinearForm,
    a: &SubsetOfModule,
    include_zero: bool,
    budget: &Budget,
) -> Result<bool> {
    if a.is_empty() && !include_zero {
        return Ok(a.module().cardinality() == BigUint::one());
    }
    let mut base = a.clone();
    if include_zero {
        base.insert(a.module().zero())?;
    }
    Ok(image(upsilon, &base, budget)?.is_full())
}

// ---- Representations over A(M, f) ----

/// A representation w = Φ(f(x_1) + λ_1 x_1, …, f(x_h) + λ_h x_h).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Representation {
    pub points: Vec<Element>,
    pub flags: Vec<bool>,
}

impl Representation {
    /// Number of distinct base points.
    pub fn level(&self) -> usize {
        let distinct: BTreeSet<&Element> = self.points.iter().collect();
        distinct.len()
    }

    /// The multiset of base points, sorted.
    pub fn point_multiset(&self) -> Vec<Element> {
        let mut v = self.points.clone();
        v.sort();
        v
    }

    /// Sorts (point, flag) pairs within every run of equal coefficients;
    /// permuting such slots never changes the value of the representation.
    pub fn canonicalize(&mut self, phi: &LinearForm) {
        let coeffs = phi.coefficients();
        let mut i = 0;
        while i < coeffs.len() {
            let mut j = i + 1;
            while j < coeffs.len() && coeffs[j] == coeffs[i] {
                j += 1;
            }
            let mut grp: Vec<(Element, bool)> = (i..j)
                .map(|k| (self.points[k].clone(), self.flags[k]))
                .collect();
            grp.sort();
            for (off, (p, l)) in grp.into_iter().enumerate() {
                self.points[i + off] = p;
                self.flags[i + off] = l;
            }
            i = j;
        }
    }

    pub fn evaluate<F>(&self, phi: &LinearForm, module: &FiniteModule, f: F) -> Element
    where
        F: Fn(&Element) -> Element,
    {
        let mut w = module.zero();
        for (i, &c) in phi.coefficients().iter().enumerate() {
            let x = &self.points[i];
            let mut a = f(x);
            if self.flags[i] {
                a = module.add(&a, x);
            }
            w = module.add(&w, &module.scalar_mul(c, &a));
        }
        w
    }
}

/// Walks every representation of level ≤ max_level: support subsets of
/// distinct base points, surjective slot assignments, and λ masks.
pub(crate) fn for_each_representation<F, V>(
    phi: &LinearForm,
    module: &FiniteModule,
    f: &F,
    max_level: usize,
    budget: &Budget,
    mut visit: V,
) -> Result<()>
where
    F: Fn(&Element) -> Element,
    V: FnMut(&Element, &[usize], &[usize], u32, &[Element]),
{
    let h = phi.arity();
    budget.check_arity(h)?;
    let card = module.cardinality();
    let work = card.to_u64().filter(|&c| c <= budget.work);
    if work.is_none() {
        return Err(Error::BudgetExceeded {
            what: "enumerating the module for representations".into(),
            needed: card.to_string(),
            cap: budget.work.to_string(),
        });
    }
    let elems: Vec<Element> = module.elements().collect();
    let coeffs = phi.coefficients();
    for level in 1..=max_level.min(h) {
        let combos = binomial_u64(elems.len() as u64, level as u64);
        let per_combo = (level as u64)
            .saturating_pow(h as u32)
            .saturating_mul(1 << h);
        budget.check_work(
            combos.saturating_mul(per_combo),
            "enumerating leveled representations",
        )?;
        let mut combo: Vec<usize> = (0..level).collect();
        if level > elems.len() {
            continue;
        }
        loop {
            // value of f(y) and f(y) + y per support point
            let vals: Vec<[Element; 2]> = combo
                .iter()
                .map(|&i| {
                    let y = &elems[i];
                    let fy = f(y);
                    let fyy = module.add(&fy, y);
                    [fy, fyy]
                })
                .collect();
            // assignments of slots onto the support, surjective
            let mut assign = vec![0usize; h];
            'assign: loop {
                let mut hit = vec![false; level];
                for &a in &assign {
                    hit[a] = true;
                }
                if hit.iter().all(|&b| b) {
                    for lambda in 0..1u32 << h {
                        let mut w = module.zero();
                        for i in 0..h {
                            let side = (lambda >> i & 1) as usize;
                            w = module
                                .add(&w, &module.scalar_mul(coeffs[i], &vals[assign[i]][side]));
                        }
                        visit(&w, &combo, &assign, lambda, &elems);
                    }
                }
                // odometer over assignments
                let mut pos = h;
                loop {
                    if pos == 0 {
                        break 'assign;
                    }
                    pos -= 1;
                    assign[pos] += 1;
                    if assign[pos] < level {
                        break;
                    }
                    assign[pos] = 0;
                }
            }
            if !next_combination(&mut combo, elems.len()) {
                break;
            }
        }
    }
    Ok(())
}

fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - (k - i) {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn binomial_u64(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Φ^{(ell)}(A(M, f)): every w with a representation of level ≤ ell.
pub fn level_image<F>(
    phi: &LinearForm,
    module: &FiniteModule,
    f: F,
    ell: usize,
    budget: &Budget,
) -> Result<SubsetOfModule>
where
    F: Fn(&Element) -> Element,
{
    if ell == 0 || ell > phi.arity() {
        return Err(Error::ShapeMismatch {
            msg: format!("level {ell} outside 1..={}", phi.arity()),
        });
    }
    let mut out = SubsetOfModule::empty(module, budget);
    for_each_representation(phi, module, &f, ell, budget, |w, _, _, _, _| {
        let _ = out.insert(w.clone());
    })?;
    Ok(out)
}

/// All representations of `w` of level ≤ max_level, canonicalized and
/// deduplicated.
pub fn decompose<F>(
    phi: &LinearForm,
    module: &FiniteModule,
    f: F,
    w: &Element,
    max_level: usize,
    budget: &Budget,
) -> Result<Vec<Representation>>
where
    F: Fn(&Element) -> Element,
{
    if max_level > phi.arity() {
        return Err(Error::ShapeMismatch {
            msg: format!("max_level {max_level} exceeds arity {}", phi.arity()),
        });
    }
    let h = phi.arity();
    let mut seen: BTreeSet<Representation> = BTreeSet::new();
    for_each_representation(
        phi,
        module,
        &f,
        max_level,
        budget,
        |v, combo, assign, lambda, elems| {
            if v == w {
                let mut rep = Representation {
                    points: (0..h).map(|i| elems[combo[assign[i]]].clone()).collect(),
                    flags: (0..h).map(|i| lambda >> i & 1 == 1).collect(),
                };
                rep.canonicalize(phi);
                seen.insert(rep);
            }
        },
    )?;
    Ok(seen.into_iter().collect())
}

/// The set A(M, f) = {f(x) : x ∈ M} ∪ {f(x) + x : x ∈ M}.
pub fn witness_set<F>(module: &FiniteModule, f: F, budget: &Budget) -> Result<SubsetOfModule>
where
    F: Fn(&Element) -> Element,
{
    let card = module.cardinality();
    if card.to_u64().map_or(true, |c| c > budget.work) {
        return Err(Error::BudgetExceeded {
            what: "enumerating M to build A(M, f)".into(),
            needed: card.to_string(),
            cap: budget.work.to_string(),
        });
    }
    let mut a = SubsetOfModule::empty(module, budget);
    for x in module.elements() {
        let fx = f(&x);
        a.insert(module.add(&fx, &x))?;
        a.insert(fx)?;
    }
    Ok(a)
}
