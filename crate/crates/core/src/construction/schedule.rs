//! Per-level bounds 0 < ε_1 < … < ε_h < ε.
//!
//! Level ℓ's bound caps |Φ^{(ℓ)}(A_ℓ)| / |M_ℓ|; the gaps ε_{ℓ+1} − ε_ℓ feed
//! the factor bounds of the inductive step. All values are exact rationals.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Signed;

use crate::error::{Error, Result};
use crate::rational::format_rational;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsilonSchedule {
    eps: BigRational,
    levels: Vec<BigRational>,
}

impl EpsilonSchedule {
    /// Spreads the slack evenly: ε_ℓ = ε·ℓ/(h+1).
    pub fn even(eps: BigRational, h: usize) -> Result<Self> {
        let levels = (1..=h)
            .map(|l| &eps * BigRational::new(BigInt::from(l), BigInt::from(h + 1)))
            .collect();
        Self::custom(eps, levels)
    }

    pub fn custom(eps: BigRational, levels: Vec<BigRational>) -> Result<Self> {
        if !eps.is_positive() {
            return Err(Error::ShapeMismatch {
                msg: "the target bound must be positive".into(),
            });
        }
        if levels.is_empty() {
            return Err(Error::ShapeMismatch {
                msg: "a schedule needs at least one level".into(),
            });
        }
        let increasing = levels.windows(2).all(|w| w[0] < w[1]);
        if !increasing || !levels[0].is_positive() || levels.last().unwrap() >= &eps {
            return Err(Error::ShapeMismatch {
                msg: "level bounds must satisfy 0 < e_1 < ... < e_h < eps".into(),
            });
        }
        Ok(EpsilonSchedule { eps, levels })
    }

    pub fn eps(&self) -> &BigRational {
        &self.eps
    }

    /// Number of levels h.
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// ε_ℓ, 1-based.
    pub fn level(&self, l: usize) -> Result<&BigRational> {
        self.levels
            .get(l.wrapping_sub(1))
            .ok_or(Error::IndexOutOfRange {
                index: l,
                len: self.levels.len(),
            })
    }

    pub fn render_levels(&self) -> Vec<String> {
        self.levels.iter().map(format_rational).collect()
    }
}
