//! Maps f: M → M evaluable at a point without enumerating M.
//!
//! The construction never stores f as a table at real scale. The initial
//! map scales each coordinate; the inductive map extends the previous one
//! by new coordinates g_i(x) = −β_i(y)·(α_i(y) + β_i(y))^{-1}·x_i with y
//! the projection of x onto the previous module (and g_i(x) = 0 when the
//! weight sum vanishes). Each coordinate rule derives from the admissible
//! pair with the same index, so the whole map is reconstructible from the
//! form, the factor list, and the pair level alone.

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::admissible::{AdmissibleEnumeration, AdmissiblePair};
use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::LinearForm;
use crate::modules::{mod_inverse, Element, FiniteModule};
use crate::primes::mul_mod;

/// Pairs are materialized when a level has at most this many; beyond it,
/// coordinate rules are unranked on demand.
const MATERIALIZE_CAP: usize = 1 << 16;

#[derive(Debug, Clone)]
pub enum StructuredMap {
    /// f ≡ 0.
    Zero,
    /// f tabulated by lexicographic element index (test-scale only).
    Table { values: Vec<Element> },
    /// f(x)_k = multipliers[k]·x_k on each cyclic factor.
    CoordinateScale { multipliers: Vec<u64> },
    /// The inductive extension.
    Inductive(Box<InductiveMap>),
}

#[derive(Debug, Clone)]
pub struct InductiveMap {
    /// f_ℓ on the prefix module.
    pub base: StructuredMap,
    /// M_ℓ, the prefix of the extended module's factors.
    pub prefix: FiniteModule,
    /// Level-(ℓ+1) pairs on the prefix; pair i drives coordinate
    /// prefix.rank() + i.
    pub enumeration: AdmissibleEnumeration,
    cached: Option<Vec<AdmissiblePair>>,
}

impl InductiveMap {
    pub fn new(
        base: StructuredMap,
        prefix: FiniteModule,
        enumeration: AdmissibleEnumeration,
    ) -> Result<Self> {
        let cached = match enumeration.count().to_usize() {
            Some(n) if n <= MATERIALIZE_CAP => Some(enumeration.iter()?.collect()),
            _ => None,
        };
        Ok(InductiveMap {
            base,
            prefix,
            enumeration,
            cached,
        })
    }

    pub fn pair(&self, i: usize) -> Result<AdmissiblePair> {
        match &self.cached {
            Some(v) => v.get(i).cloned().ok_or(Error::IndexOutOfRange {
                index: i,
                len: v.len(),
            }),
            None => self.enumeration.pair_at(&BigUint::from(i)),
        }
    }
}

impl StructuredMap {
    pub fn eval(&self, module: &FiniteModule, x: &Element) -> Result<Element> {
        if !module.contains(x) {
            return Err(Error::ShapeMismatch {
                msg: format!("element {x} does not belong to {module}"),
            });
        }
        match self {
            StructuredMap::Zero => Ok(module.zero()),
            StructuredMap::Table { values } => {
                let idx = module.lex_index(x).to_usize().ok_or(Error::Overflow {
                    context: "table index".into(),
                })?;
                values.get(idx).cloned().ok_or(Error::ShapeMismatch {
                    msg: "table does not cover the module".into(),
                })
            }
            StructuredMap::CoordinateScale { multipliers } => {
                if multipliers.len() != module.rank() {
                    return Err(Error::ShapeMismatch {
                        msg: "one multiplier per factor required".into(),
                    });
                }
                let coords = multipliers
                    .iter()
                    .zip(x.coords())
                    .zip(module.factors())
                    .map(|((&k, &c), &m)| mul_mod(k % m, c, m))
                    .collect();
                Ok(Element(coords))
            }
            StructuredMap::Inductive(ind) => {
                let prefix_rank = ind.prefix.rank();
                let y = module.project_prefix(prefix_rank, x)?;
                let base_val = ind.base.eval(&ind.prefix, &y)?;
                let mut coords = base_val.0;
                for (i, &m) in module.factors()[prefix_rank..].iter().enumerate() {
                    let pair = ind.pair(i)?;
                    let (a, b) = pair.value(&y);
                    let c = if a + b == 0 {
                        0
                    } else {
                        // −β·(α+β)^{-1}·x_i; the inverse exists because the
                        // factor was chosen coprime to every subset sum
                        let inv = mod_inverse(a + b, m)?;
                        let neg_b = (-b).rem_euclid(m as i64) as u64;
                        mul_mod(mul_mod(neg_b, inv, m), x.coords()[prefix_rank + i], m)
                    };
                    coords.push(c);
                }
                Ok(Element(coords))
            }
        }
    }

    pub fn describe(&self) -> MapDescription {
        match self {
            StructuredMap::Zero => MapDescription::Zero,
            StructuredMap::Table { values } => MapDescription::Table {
                values: values
                    .iter()
                    .map(|e| e.coords().iter().map(|c| c.to_string()).collect())
                    .collect(),
            },
            StructuredMap::CoordinateScale { multipliers } => MapDescription::CoordinateScale {
                multipliers: multipliers.iter().map(|m| m.to_string()).collect(),
            },
            StructuredMap::Inductive(ind) => MapDescription::Inductive {
                base: Box::new(ind.base.describe()),
                prefix_rank: ind.prefix.rank(),
                level: ind.enumeration.level(),
                tuples: ind
                    .enumeration
                    .tuples()
                    .iter()
                    .map(|t| {
                        t.iter()
                            .map(|&(a, b)| (a.to_string(), b.to_string()))
                            .collect()
                    })
                    .collect(),
            },
        }
    }

    /// Rebuilds the evaluator on `module` and cross-checks every recorded
    /// derived quantity (pair tuples, coordinate counts) against a fresh
    /// enumeration.
    pub fn from_description(
        desc: &MapDescription,
        phi: &LinearForm,
        module: &FiniteModule,
        budget: &Budget,
    ) -> Result<StructuredMap> {
        match desc {
            MapDescription::Zero => Ok(StructuredMap::Zero),
            MapDescription::Table { values } => {
                if BigUint::from(values.len()) != module.cardinality() {
                    return Err(Error::CertificateInvalid {
                        msg: "tabulated map does not cover the module".into(),
                    });
                }
                let elems = values
                    .iter()
                    .map(|coords| {
                        let parsed = coords
                            .iter()
                            .map(|c| c.parse::<u64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| Error::CertificateInvalid {
                                msg: "bad coordinate in tabulated map".into(),
                            })?;
                        module
                            .element(parsed)
                            .map_err(|_| Error::CertificateInvalid {
                                msg: "tabulated value outside the module".into(),
                            })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(StructuredMap::Table { values: elems })
            }
            MapDescription::CoordinateScale { multipliers } => {
                if multipliers.len() != module.rank() {
                    return Err(Error::CertificateInvalid {
                        msg: "multiplier count differs from factor count".into(),
                    });
                }
                let parsed = multipliers
                    .iter()
                    .map(|m| m.parse::<u64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::CertificateInvalid {
                        msg: "bad multiplier".into(),
                    })?;
                Ok(StructuredMap::CoordinateScale {
                    multipliers: parsed,
                })
            }
            MapDescription::Inductive {
                base,
                prefix_rank,
                level,
                tuples,
            } => {
                let prefix =
                    module
                        .prefix_module(*prefix_rank)
                        .map_err(|_| Error::CertificateInvalid {
                            msg: "prefix rank exceeds the factor count".into(),
                        })?;
                let enumeration = AdmissibleEnumeration::new(phi, &prefix, *level, budget)?;
                let fresh: Vec<Vec<(String, String)>> = enumeration
                    .tuples()
                    .iter()
                    .map(|t| {
                        t.iter()
                            .map(|&(a, b)| (a.to_string(), b.to_string()))
                            .collect()
                    })
                    .collect();
                if &fresh != tuples {
                    return Err(Error::CertificateInvalid {
                        msg: "recorded value tuples differ from the enumeration".into(),
                    });
                }
                let new_coords = BigUint::from(module.rank() - prefix_rank);
                if &new_coords != enumeration.count() {
                    return Err(Error::CertificateInvalid {
                        msg: "coordinate count differs from the pair count".into(),
                    });
                }
                let base_map = StructuredMap::from_description(base, phi, &prefix, budget)?;
                Ok(StructuredMap::Inductive(Box::new(InductiveMap::new(
                    base_map,
                    prefix,
                    enumeration,
                )?)))
            }
        }
    }
}

/// Serializable shape of a StructuredMap; big values as decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapDescription {
    Zero,
    Table {
        values: Vec<Vec<String>>,
    },
    CoordinateScale {
        multipliers: Vec<String>,
    },
    Inductive {
        base: Box<MapDescription>,
        prefix_rank: usize,
        level: usize,
        tuples: Vec<Vec<(String, String)>>,
    },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_form;

    #[test]
    fn coordinate_scale_evaluates_per_factor() {
        let md = FiniteModule::new(vec![5, 7]).unwrap();
        let f = StructuredMap::CoordinateScale {
            multipliers: vec![0, 3],
        };
        let v = f.eval(&md, &Element(vec![4, 5])).unwrap();
        assert_eq!(v, Element(vec![0, 1])); // 3·5 = 15 ≡ 1 mod 7
    }

    #[test]
    fn description_round_trip() {
        let b = Budget::default();
        let phi = parse_form("t1+t2").unwrap();
        let md = FiniteModule::new(vec![5, 7]).unwrap();
        let f = StructuredMap::CoordinateScale {
            multipliers: vec![0, 3],
        };
        let desc = f.describe();
        let back = StructuredMap::from_description(&desc, &phi, &md, &b).unwrap();
        for x in md.elements() {
            assert_eq!(f.eval(&md, &x).unwrap(), back.eval(&md, &x).unwrap());
        }
    }
}
