//! Linear forms with nonzero integer coefficients and their subset sums.
//!
//! A form Φ(t_1, …, t_h) = φ_1 t_1 + … + φ_h t_h is the basic input object.
//! For a nonempty index set I ⊆ {1, …, h} the subset sum is
//! s_I = Σ_{i ∈ I} φ_i, and S(Φ) denotes the set of all such sums. Two
//! properties of a pair (Υ, Φ) drive everything downstream: 0 ∈ S(Υ) and
//! 0 ∉ S(Φ). The first makes difference-like forms surjective on the sets we
//! build; the second is what leaves room to squeeze the image of Φ.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::primes::Primes;

/// A linear form in h ≥ 1 variables, all coefficients nonzero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinearForm {
    coeffs: Vec<i64>,
}

impl LinearForm {
    pub fn new(coeffs: Vec<i64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::ShapeMismatch {
                msg: "a form needs at least one variable".into(),
            });
        }
        if let Some(i) = coeffs.iter().position(|&c| c == 0) {
            return Err(Error::ZeroCoefficient { index: i + 1 });
        }
        Ok(LinearForm { coeffs })
    }

    /// Number of variables h.
    pub fn arity(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coefficients(&self) -> &[i64] {
        &self.coeffs
    }

    /// φ* = φ_1 + … + φ_h, the sum over the full index set.
    pub fn coefficient_total(&self) -> Result<i64> {
        self.coeffs
            .iter()
            .try_fold(0i64, |acc, &c| acc.checked_add(c))
            .ok_or_else(|| Error::Overflow {
                context: "summing coefficients".into(),
            })
    }

    /// Concatenates variable lists: (Φ_1 + … + Φ_k)(t_1, …, t_{h_1 + … + h_k}).
    pub fn concat(parts: &[LinearForm]) -> Result<LinearForm> {
        let mut coeffs = Vec::new();
        for p in parts {
            coeffs.extend_from_slice(&p.coeffs);
        }
        LinearForm::new(coeffs)
    }
}

impl fmt::Display for LinearForm {
    /// Canonical rendering: ascending variable index, `k*t<i>` with the
    /// factor omitted when |k| = 1, the sign folded into the separator.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, &c) in self.coeffs.iter().enumerate() {
            if i == 0 {
                if c < 0 {
                    write!(f, "-")?;
                }
            } else if c < 0 {
                write!(f, " - ")?;
            } else {
                write!(f, " + ")?;
            }
            let mag = c.unsigned_abs();
            if mag != 1 {
                write!(f, "{mag}*")?;
            }
            write!(f, "t{}", i + 1)?;
        }
        Ok(())
    }
}

impl FromStr for LinearForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_form(s)
    }
}

// ---- Parser ----

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            position: self.pos,
            msg: msg.into(),
        }
    }

    fn number(&mut self) -> Result<u64> {
        let start = self.pos;
        while matches!(self.peek(), Some(b) if b.is_ascii_digit()) {
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<u64>()
            .map_err(|_| self.err(format!("number out of range: {text:?}")))
    }
}

/// Parses the form grammar
///
/// ```text
/// form := term (('+' | '-') term)*
/// term := [integer '*'?] 't' index
/// ```
///
/// A `-` may prefix the first term. Repeated variables aggregate; the result
/// must have every coefficient nonzero and indices covering 1..=h densely.
pub fn parse_form(input: &str) -> Result<LinearForm> {
    let mut cur = Cursor {
        bytes: input.as_bytes(),
        pos: 0,
    };
    // (index, signed coefficient) pairs before aggregation
    let mut terms: Vec<(usize, i64)> = Vec::new();
    let mut sign: i64 = 1;
    cur.skip_ws();
    if cur.peek() == Some(b'-') {
        sign = -1;
        cur.pos += 1;
        cur.skip_ws();
    }
    loop {
        let mut mag: u64 = 1;
        if matches!(cur.peek(), Some(b) if b.is_ascii_digit()) {
            mag = cur.number()?;
            cur.skip_ws();
            if cur.peek() == Some(b'*') {
                cur.pos += 1;
                cur.skip_ws();
            }
        }
        if cur.peek() != Some(b't') {
            return Err(cur.err("expected variable 't<index>'"));
        }
        cur.pos += 1;
        if !matches!(cur.peek(), Some(b) if b.is_ascii_digit()) {
            return Err(cur.err("expected variable index after 't'"));
        }
        let index = cur.number()? as usize;
        if index == 0 {
            return Err(cur.err("variable indices start at t1"));
        }
        let mag = i64::try_from(mag).map_err(|_| cur.err("coefficient out of range"))?;
        terms.push((index, sign * mag));
        cur.skip_ws();
        match cur.peek() {
            None => break,
            Some(b'+') => sign = 1,
            Some(b'-') => sign = -1,
            Some(c) => return Err(cur.err(format!("unexpected character {:?}", c as char))),
        }
        cur.pos += 1;
        cur.skip_ws();
    }

    let h = terms.iter().map(|&(i, _)| i).max().unwrap();
    let mut coeffs = vec![0i64; h];
    let mut seen = vec![false; h];
    for (index, c) in terms {
        seen[index - 1] = true;
        coeffs[index - 1] = coeffs[index - 1].checked_add(c).ok_or(Error::Overflow {
            context: format!("aggregating coefficient of t{index}"),
        })?;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::IndexGap {
            missing: missing + 1,
            max: h,
        });
    }
    if let Some(zero) = coeffs.iter().position(|&c| c == 0) {
        return Err(Error::ZeroCoefficient { index: zero + 1 });
    }
    LinearForm::new(coeffs)
}

// ---- Subset sums ----

/// The nonempty-subset sums of a form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetSumProfile {
    /// S(Φ), sorted ascending.
    pub sums: BTreeSet<i64>,
    /// Whether 0 ∈ S(Φ).
    pub contains_zero: bool,
    /// s_{{1..h}} = φ*.
    pub total: i64,
}

impl SubsetSumProfile {
    /// Absolute values of the nonzero sums; these are what moduli must avoid.
    pub fn nonzero_magnitudes(&self) -> BTreeSet<u64> {
        self.sums
            .iter()
            .filter(|&&s| s != 0)
            .map(|&s| s.unsigned_abs())
            .collect()
    }
}

/// Enumerates all 2^h − 1 nonempty subset sums. Gray-code order keeps the
/// running sum to one add per subset; memory is bounded by the number of
/// distinct sums, not by 2^h.
pub fn subset_sums(form: &LinearForm, budget: &Budget) -> Result<SubsetSumProfile> {
    let h = form.arity();
    budget.check_arity(h)?;
    let coeffs = form.coefficients();
    let mut sums = BTreeSet::new();
    let mut running: i64 = 0;
    let mut mask: u64 = 0;
    for k in 1u64..1u64 << h {
        let flip = (k.trailing_zeros()) as usize;
        let joined = mask & (1 << flip) == 0;
        mask ^= 1 << flip;
        let c = coeffs[flip];
        running = if joined {
            running.checked_add(c)
        } else {
            running.checked_sub(c)
        }
        .ok_or(Error::Overflow {
            context: "accumulating subset sums".into(),
        })?;
        sums.insert(running);
    }
    Ok(SubsetSumProfile {
        contains_zero: sums.contains(&0),
        total: form.coefficient_total()?,
        sums,
    })
}

// ---- Pair hypotheses ----

/// The two hypotheses a pair (Υ, Φ) must satisfy for the construction,
/// plus the witness subset for the first one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormPairHypotheses {
    /// 0 ∈ S(Υ).
    pub zero_sum_in_upsilon: bool,
    /// 0 ∉ S(Φ).
    pub zero_sum_avoided_by_phi: bool,
    /// Lexicographically least I ⊆ {1..g} with s_I = 0 (1-based, sorted),
    /// comparing sorted index sequences.
    pub upsilon_zero_witness: Option<Vec<usize>>,
}

impl FormPairHypotheses {
    pub fn both_hold(&self) -> bool {
        self.zero_sum_in_upsilon && self.zero_sum_avoided_by_phi
    }
}

/// Compares two index-set bitmasks as sorted index sequences.
fn mask_lex_less(a: u64, b: u64) -> bool {
    let (mut a, mut b) = (a, b);
    while a != 0 && b != 0 {
        let la = a.trailing_zeros();
        let lb = b.trailing_zeros();
        if la != lb {
            return la < lb;
        }
        a &= a - 1;
        b &= b - 1;
    }
    // equal prefix: the shorter set comes first
    a == 0 && b != 0
}

/// Lexicographically least nonempty I (1-based, sorted) with Σ_{i∈I} c_i = 0,
/// comparing sorted index sequences; None when no subset sums to zero.
pub fn lex_least_zero_subset(form: &LinearForm, budget: &Budget) -> Result<Option<Vec<usize>>> {
    let g = form.arity();
    budget.check_arity(g)?;
    let coeffs = form.coefficients();
    let mut best: Option<u64> = None;
    let mut running: i64 = 0;
    let mut mask: u64 = 0;
    for k in 1u64..1u64 << g {
        let flip = (k.trailing_zeros()) as usize;
        let joined = mask & (1 << flip) == 0;
        mask ^= 1 << flip;
        let c = coeffs[flip];
        running = if joined {
            running.checked_add(c)
        } else {
            running.checked_sub(c)
        }
        .ok_or(Error::Overflow {
            context: "accumulating subset sums".into(),
        })?;
        if running == 0 && best.map_or(true, |b| mask_lex_less(mask, b)) {
            best = Some(mask);
        }
    }
    Ok(best.map(|m| {
        (0..g)
            .filter(|i| m & (1 << i) != 0)
            .map(|i| i + 1)
            .collect()
    }))
}

pub fn check_hypotheses(
    upsilon: &LinearForm,
    phi: &LinearForm,
    budget: &Budget,
) -> Result<FormPairHypotheses> {
    let phi_profile = subset_sums(phi, budget)?;
    let witness = lex_least_zero_subset(upsilon, budget)?;
    Ok(FormPairHypotheses {
        zero_sum_in_upsilon: witness.is_some(),
        zero_sum_avoided_by_phi: !phi_profile.contains_zero,
        upsilon_zero_witness: witness,
    })
}

// ---- Modulus selection ----

/// Ascending primes p > `lower_bound` with p coprime to every listed value
/// and distinct from every prime in `exclude`. Deterministic.
pub(crate) fn select_coprime_primes(
    avoid_divisors_of: &BTreeSet<u64>,
    exclude: &[u64],
    lower_bound: u64,
    count: usize,
) -> Vec<u64> {
    Primes::new()
        .filter(|&p| p > lower_bound)
        .filter(|&p| avoid_divisors_of.iter().all(|&v| v % p != 0))
        .filter(|p| !exclude.contains(p))
        .take(count)
        .collect()
}

/// The first `count` ascending primes exceeding `lower_bound` that are
/// coprime to every nonzero subset sum of Υ and every subset sum of Φ.
/// Distinct primes are automatically pairwise coprime. These are the moduli
/// on which the downstream surjectivity and projection arguments are valid.
pub fn admissible_moduli(
    upsilon: &LinearForm,
    phi: &LinearForm,
    lower_bound: u64,
    count: usize,
    budget: &Budget,
) -> Result<Vec<u64>> {
    let phi_profile = subset_sums(phi, budget)?;
    if phi_profile.contains_zero {
        return Err(Error::HypothesisViolated {
            msg: format!("0 is a subset sum of {phi}; no modulus is coprime to 0"),
        });
    }
    let ups_profile = subset_sums(upsilon, budget)?;
    let mut avoid = ups_profile.nonzero_magnitudes();
    avoid.extend(phi_profile.nonzero_magnitudes());
    Ok(select_coprime_primes(&avoid, &[], lower_bound, count))
}
