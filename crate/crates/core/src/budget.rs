//! Work caps for the exhaustive engines.
//!
//! Every routine that enumerates a module, a power set, or a family of
//! admissible pairs takes a [`Budget`] and fails with
//! [`Error::BudgetExceeded`](crate::Error::BudgetExceeded) instead of
//! silently grinding. Counting is always allowed (counts are closed-form);
//! only materialization is capped.

use crate::error::{Error, Result};

/// Environment variable overriding [`Budget::set_bits`].
pub const ENV_BUDGET_BITS: &str = "HRLAB_BUDGET_BITS";
/// Environment variable supplying a default RNG seed.
pub const ENV_SEED: &str = "HRLAB_SEED";

#[derive(Debug, Clone)]
pub struct Budget {
    /// Largest module cardinality representable as a dense bit vector.
    pub set_bits: u64,
    /// Cap on elements enumerated or tuples visited by a single scan.
    pub work: u64,
    /// Cap on form arity for power-set enumerations (subset sums, witnesses).
    pub arity: usize,
    /// Cap on the exponent in a full subset search over Z/mZ (2^m subsets).
    pub subset_ground: u64,
    /// Largest admissible-pair family that may be materialized as module
    /// factors in one inductive step.
    pub pair_factors: u64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            set_bits: 1 << 26,
            work: 1 << 32,
            arity: 24,
            subset_ground: 24,
            pair_factors: 1 << 20,
        }
    }
}

impl Budget {
    /// Default budget with environment overrides applied.
    pub fn from_env() -> Self {
        let mut b = Budget::default();
        if let Ok(v) = std::env::var(ENV_BUDGET_BITS) {
            if let Ok(bits) = v.trim().parse::<u64>() {
                b.set_bits = bits;
            }
        }
        b
    }

    pub fn check_set_bits(&self, needed: u64, what: &str) -> Result<()> {
        if needed > self.set_bits {
            return Err(Error::BudgetExceeded {
                what: what.to_string(),
                needed: needed.to_string(),
                cap: self.set_bits.to_string(),
            });
        }
        Ok(())
    }

    pub fn check_work(&self, needed: u64, what: &str) -> Result<()> {
        if needed > self.work {
            return Err(Error::BudgetExceeded {
                what: what.to_string(),
                needed: needed.to_string(),
                cap: self.work.to_string(),
            });
        }
        Ok(())
    }

    pub fn check_arity(&self, arity: usize) -> Result<()> {
        if arity > self.arity {
            return Err(Error::ArityTooLarge {
                arity,
                cap: self.arity,
            });
        }
        Ok(())
    }
}

/// Seed resolution order: explicit flag, then `HRLAB_SEED`, then a fixed
/// default so unseeded runs are still reproducible.
pub fn resolve_seed(explicit: Option<u64>) -> u64 {
    if let Some(s) = explicit {
        return s;
    }
    if let Ok(v) = std::env::var(ENV_SEED) {
        if let Ok(s) = v.trim().parse::<u64>() {
            return s;
        }
    }
    0x4852_4c41_4221
}
