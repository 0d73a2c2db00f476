//! Finite Z-modules presented as direct sums of cyclic groups.
//!
//! M = Z/m_0Z ⊕ … ⊕ Z/m_{k-1}Z with every factor ≥ 2. Elements are dense
//! residue vectors, one coordinate per factor; nothing is ever reduced
//! through floating point and cardinalities are exact big integers. When the
//! factors are pairwise coprime the Chinese remainder theorem flattens M to
//! a single cyclic group, which is what the dense set engine and the
//! canonical element order use.

use std::fmt;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primes::mul_mod;

/// An element of a [`FiniteModule`]: one residue per factor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Element(pub Vec<u64>);

impl Element {
    pub fn coords(&self) -> &[u64] {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }
}

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteModule {
    factors: Vec<u64>,
}

impl FiniteModule {
    pub fn new(factors: Vec<u64>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::ShapeMismatch {
                msg: "a module needs at least one cyclic factor".into(),
            });
        }
        if let Some(&bad) = factors.iter().find(|&&m| m < 2) {
            return Err(Error::ShapeMismatch {
                msg: format!("cyclic factor {bad} < 2"),
            });
        }
        Ok(FiniteModule { factors })
    }

    /// Z/mZ as a one-factor module.
    pub fn cyclic(m: u64) -> Result<Self> {
        FiniteModule::new(vec![m])
    }

    pub fn factors(&self) -> &[u64] {
        &self.factors
    }

    pub fn rank(&self) -> usize {
        self.factors.len()
    }

    /// |M| = Π m_i, exactly.
    pub fn cardinality(&self) -> BigUint {
        self.factors
            .iter()
            .fold(BigUint::one(), |acc, &m| acc * BigUint::from(m))
    }

    pub fn cardinality_u64(&self) -> Option<u64> {
        self.cardinality().to_u64()
    }

    pub fn zero(&self) -> Element {
        Element(vec![0; self.factors.len()])
    }

    /// Validates coordinate count and ranges.
    pub fn element(&self, coords: Vec<u64>) -> Result<Element> {
        if coords.len() != self.factors.len() {
            return Err(Error::ShapeMismatch {
                msg: format!(
                    "element has {} coordinates, module has {} factors",
                    coords.len(),
                    self.factors.len()
                ),
            });
        }
        for (i, (&c, &m)) in coords.iter().zip(&self.factors).enumerate() {
            if c >= m {
                return Err(Error::ShapeMismatch {
                    msg: format!("coordinate {i} is {c}, factor is {m}"),
                });
            }
        }
        Ok(Element(coords))
    }

    pub fn contains(&self, x: &Element) -> bool {
        x.0.len() == self.factors.len() && x.0.iter().zip(&self.factors).all(|(&c, &m)| c < m)
    }

    pub fn add(&self, a: &Element, b: &Element) -> Element {
        debug_assert!(self.contains(a) && self.contains(b));
        Element(
            a.0.iter()
                .zip(&b.0)
                .zip(&self.factors)
                .map(|((&x, &y), &m)| {
                    let s = (x as u128 + y as u128) % m as u128;
                    s as u64
                })
                .collect(),
        )
    }

    pub fn neg(&self, a: &Element) -> Element {
        Element(
            a.0.iter()
                .zip(&self.factors)
                .map(|(&x, &m)| if x == 0 { 0 } else { m - x })
                .collect(),
        )
    }

    pub fn sub(&self, a: &Element, b: &Element) -> Element {
        self.add(a, &self.neg(b))
    }

    /// k·x for a signed integer scalar.
    pub fn scalar_mul(&self, k: i64, a: &Element) -> Element {
        Element(
            a.0.iter()
                .zip(&self.factors)
                .map(|(&x, &m)| {
                    let k = (k as i128).rem_euclid(m as i128) as u64;
                    mul_mod(k, x, m)
                })
                .collect(),
        )
    }

    /// Projection onto the i-th cyclic factor.
    pub fn project(&self, i: usize, a: &Element) -> Result<u64> {
        a.0.get(i).copied().ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.factors.len(),
        })
    }

    /// The submodule formed by the first `len` factors.
    pub fn prefix_module(&self, len: usize) -> Result<FiniteModule> {
        if len == 0 || len > self.factors.len() {
            return Err(Error::IndexOutOfRange {
                index: len,
                len: self.factors.len(),
            });
        }
        FiniteModule::new(self.factors[..len].to_vec())
    }

    /// Projection onto the first `len` coordinates.
    pub fn project_prefix(&self, len: usize, a: &Element) -> Result<Element> {
        if len == 0 || len > a.0.len() {
            return Err(Error::IndexOutOfRange {
                index: len,
                len: a.0.len(),
            });
        }
        Ok(Element(a.0[..len].to_vec()))
    }

    pub fn direct_sum(&self, other: &FiniteModule) -> FiniteModule {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        FiniteModule { factors }
    }

    /// All elements in lexicographic coordinate order (first coordinate most
    /// significant). Callers are responsible for budgeting the walk.
    pub fn elements(&self) -> ElementIter<'_> {
        ElementIter {
            module: self,
            current: Some(self.zero()),
        }
    }

    /// Lexicographic index of an element (big-endian mixed radix).
    pub fn lex_index(&self, a: &Element) -> BigUint {
        let mut acc = BigUint::zero();
        for (&c, &m) in a.0.iter().zip(&self.factors) {
            acc = acc * BigUint::from(m) + BigUint::from(c);
        }
        acc
    }

    /// Inverse of [`lex_index`](Self::lex_index).
    pub fn element_at_lex(&self, index: &BigUint) -> Element {
        let mut coords = vec![0u64; self.factors.len()];
        let mut rest = index.clone();
        for (slot, &m) in coords.iter_mut().zip(&self.factors).rev() {
            let m_big = BigUint::from(m);
            let (q, r) = rest.div_rem(&m_big);
            *slot = r.to_u64().unwrap();
            rest = q;
        }
        debug_assert!(rest.is_zero(), "lex index out of range");
        Element(coords)
    }

    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> Element {
        Element(self.factors.iter().map(|&m| rng.gen_range(0..m)).collect())
    }

    /// Whether the factors are pairwise coprime (gcd of every pair is 1).
    pub fn pairwise_coprime(&self) -> bool {
        // gcd each factor against the running product of its predecessors
        let mut prod = BigUint::one();
        for &m in &self.factors {
            let r = (&prod % BigUint::from(m)).to_u64().unwrap();
            if r.gcd(&m) != 1 && !prod.is_one() {
                return false;
            }
            prod *= BigUint::from(m);
        }
        true
    }

    /// CRT isomorphism M ≅ Z/mZ, m = Π m_i. Fails unless the factors are
    /// pairwise coprime.
    pub fn crt_flatten(&self) -> Result<CrtIso> {
        let mut prod = BigUint::one();
        for &m in &self.factors {
            let m_big = BigUint::from(m);
            let r = (&prod % &m_big).to_u64().unwrap();
            if !prod.is_one() && r.gcd(&m) != 1 {
                let offender = self
                    .factors
                    .iter()
                    .copied()
                    .find(|&p| p != m && p.gcd(&m) != 1 || (p == m && self.count_of(m) > 1))
                    .unwrap_or(m);
                return Err(Error::NotCoprime { a: offender, b: m });
            }
            prod *= m_big;
        }
        let m = prod;
        let mut basis = Vec::with_capacity(self.factors.len());
        for &mi in &self.factors {
            let mi_big = BigUint::from(mi);
            let others = &m / &mi_big;
            let rem = (&others % &mi_big).to_u64().unwrap();
            let inv = mod_inverse_u64(rem, mi)?;
            basis.push(others * BigUint::from(inv) % &m);
        }
        Ok(CrtIso {
            module: self.clone(),
            modulus: m,
            basis,
        })
    }

    fn count_of(&self, m: u64) -> usize {
        self.factors.iter().filter(|&&f| f == m).count()
    }
}

impl fmt::Display for FiniteModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Z/")?;
        for (i, m) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, " + Z/")?;
            }
            write!(f, "{m}")?;
        }
        Ok(())
    }
}

pub struct ElementIter<'a> {
    module: &'a FiniteModule,
    current: Option<Element>,
}

impl Iterator for ElementIter<'_> {
    type Item = Element;

    fn next(&mut self) -> Option<Element> {
        let out = self.current.clone()?;
        // increment the mixed-radix counter, last coordinate fastest
        let mut next = out.clone();
        let mut done = true;
        for (c, &m) in next.0.iter_mut().zip(self.module.factors.iter()).rev() {
            *c += 1;
            if *c < m {
                done = false;
                break;
            }
            *c = 0;
        }
        self.current = if done { None } else { Some(next) };
        Some(out)
    }
}

/// The flattening isomorphism produced by [`FiniteModule::crt_flatten`].
#[derive(Debug, Clone)]
pub struct CrtIso {
    module: FiniteModule,
    modulus: BigUint,
    basis: Vec<BigUint>, // basis[i] ≡ 1 mod m_i, ≡ 0 mod m_j for j ≠ i
}

impl CrtIso {
    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn modulus_u64(&self) -> Option<u64> {
        self.modulus.to_u64()
    }

    pub fn module(&self) -> &FiniteModule {
        &self.module
    }

    pub fn flatten(&self, x: &Element) -> BigUint {
        let mut acc = BigUint::zero();
        for (&c, b) in x.0.iter().zip(&self.basis) {
            acc += b * BigUint::from(c);
        }
        acc % &self.modulus
    }

    pub fn flatten_u64(&self, x: &Element) -> Option<u64> {
        self.flatten(x).to_u64()
    }

    pub fn unflatten(&self, v: &BigUint) -> Element {
        Element(
            self.module
                .factors
                .iter()
                .map(|&m| (v % BigUint::from(m)).to_u64().unwrap())
                .collect(),
        )
    }

    pub fn unflatten_u64(&self, v: u64) -> Element {
        Element(self.module.factors.iter().map(|&m| v % m).collect())
    }
}

/// Extended-Euclid modular inverse of `a` mod `m` for unsigned input.
pub fn mod_inverse_u64(a: u64, m: u64) -> Result<u64> {
    let (mut r0, mut r1) = (m as i128, (a % m) as i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 != 1 {
        return Err(Error::NotCoprime { a: a % m, b: m });
    }
    Ok(t0.rem_euclid(m as i128) as u64)
}

/// Modular inverse of a signed integer mod `m`.
pub fn mod_inverse(a: i64, m: u64) -> Result<u64> {
    let red = (a as i128).rem_euclid(m as i128) as u64;
    mod_inverse_u64(red, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn module(factors: &[u64]) -> FiniteModule {
        FiniteModule::new(factors.to_vec()).unwrap()
    }

    #[test]
    fn rejects_degenerate_factors() {
        assert!(FiniteModule::new(vec![]).is_err());
        assert!(FiniteModule::new(vec![5, 1]).is_err());
        assert!(FiniteModule::new(vec![0]).is_err());
    }

    #[test]
    fn arithmetic_on_coordinates() {
        let m = module(&[5, 7]);
        let a = m.element(vec![3, 6]).unwrap();
        let b = m.element(vec![4, 2]).unwrap();
        assert_eq!(m.add(&a, &b), m.element(vec![2, 1]).unwrap());
        assert_eq!(m.sub(&a, &a), m.zero());
        assert_eq!(m.scalar_mul(-1, &a), m.element(vec![2, 1]).unwrap());
        assert_eq!(m.scalar_mul(10, &a), m.element(vec![0, 4]).unwrap());
        assert_eq!(m.project(1, &a).unwrap(), 6);
        assert!(m.project(2, &a).is_err());
    }

    #[test]
    fn crt_example_and_exhaustive_round_trip() {
        let m = module(&[5, 7]);
        let iso = m.crt_flatten().unwrap();
        assert_eq!(iso.modulus(), &BigUint::from(35u32));
        // x ≡ 3 (mod 5), x ≡ 0 (mod 7) has the unique solution 28
        let x = m.element(vec![3, 0]).unwrap();
        assert_eq!(iso.flatten_u64(&x), Some(28));
        assert_eq!(iso.unflatten_u64(28), x);
        // brute-force scan: flatten is the unique CRT solution for all 35
        for e in m.elements() {
            let v = iso.flatten_u64(&e).unwrap();
            assert_eq!(v % 5, e.coords()[0]);
            assert_eq!(v % 7, e.coords()[1]);
        }
        // flatten is additive
        let a = m.element(vec![2, 5]).unwrap();
        let b = m.element(vec![4, 4]).unwrap();
        let lhs = iso.flatten_u64(&m.add(&a, &b)).unwrap();
        let rhs = (iso.flatten_u64(&a).unwrap() + iso.flatten_u64(&b).unwrap()) % 35;
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn crt_rejects_common_factors() {
        assert!(module(&[4, 6]).crt_flatten().is_err());
        assert!(module(&[5, 5]).crt_flatten().is_err());
        assert!(!module(&[4, 6]).pairwise_coprime());
        assert!(module(&[4, 9, 25]).pairwise_coprime());
    }

    #[test]
    fn element_iteration_is_lexicographic_and_complete() {
        let m = module(&[2, 3]);
        let got: Vec<Vec<u64>> = m.elements().map(|e| e.0).collect();
        assert_eq!(
            got,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 0],
                vec![1, 1],
                vec![1, 2]
            ]
        );
        for (i, e) in m.elements().enumerate() {
            assert_eq!(m.lex_index(&e), BigUint::from(i));
            assert_eq!(m.element_at_lex(&BigUint::from(i)), e);
        }
    }

    #[test]
    fn inverse_by_extended_euclid() {
        assert_eq!(mod_inverse(2, 7).unwrap(), 4);
        assert_eq!(mod_inverse(-4, 7).unwrap(), 5); // (-4)·5 = -20 ≡ 1 (mod 7)
        assert!(mod_inverse(6, 9).is_err());
        for a in 1..11u64 {
            let inv = mod_inverse_u64(a, 11).unwrap();
            assert_eq!(a * inv % 11, 1);
        }
    }

    proptest! {
        #[test]
        fn scalar_mul_distributes(
            k in -100i64..100,
            l in -100i64..100,
            coords in proptest::collection::vec(0u64..1000, 3)
        ) {
            let m = module(&[1009, 1013, 1019]);
            let x = m.element(coords).unwrap();
            let lhs = m.scalar_mul(k + l, &x);
            let rhs = m.add(&m.scalar_mul(k, &x), &m.scalar_mul(l, &x));
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn flatten_is_an_isomorphism(av in 0u64..1105, bv in 0u64..1105) {
            // 1105 = 5 · 13 · 17
            let m = module(&[5, 13, 17]);
            let iso = m.crt_flatten().unwrap();
            let a = iso.unflatten_u64(av);
            let b = iso.unflatten_u64(bv);
            let sum = m.add(&a, &b);
            prop_assert_eq!(iso.flatten_u64(&sum).unwrap(), (av + bv) % 1105);
            prop_assert_eq!(iso.unflatten_u64(av), a);
        }
    }
}
