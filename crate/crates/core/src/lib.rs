//! Constructions for pairs of linear forms over finite Z-modules.
//!
//! Given forms Υ and Φ in h variables with nonzero integer coefficients,
//! write S(Φ) for the set of subset sums of coefficients. When 0 ∈ S(Υ) and
//! 0 ∉ S(Φ), one can build, for every ε > 0 and every bound c, a finite
//! module M with |M| > c and a subset A ⊆ M such that Υ(A) = M while
//! |Φ(A)| < ε|M|. This crate implements that construction exactly (no
//! floating point in any verified quantity), together with brute-force
//! oracles for every step and exhaustive search over small cyclic modules
//! for the regimes the construction does not reach.
//!
//! Modules:
//! - [`forms`]: linear forms, subset-sum profiles, hypothesis checks,
//!   admissible modulus selection.
//! - [`modules`]: finite modules ⊕ Z/m_iZ, elements, CRT flattening.
//! - [`images`]: exact images Φ(A), leveled images over A(M, f),
//!   representation decomposition, naive oracles.
//! - [`admissible`]: level-ℓ pair enumeration driving the inductive step.
//! - [`construction`]: the initial and inductive steps, certificates.
//! - [`search`]: exhaustive and heuristic search over subsets of Z/mZ.

pub mod admissible;
pub mod budget;
pub mod construction;
pub mod error;
pub mod forms;
pub mod images;
pub mod modules;
pub mod primes;
pub mod rational;
pub mod search;

pub use budget::Budget;
pub use construction::{
    build_set, compose, from_json, inductive_step, initial_step, run_construction,
    surjectivity_witness, to_json, verify_certificate, Certificate, CertifiedWitness,
    EpsilonSchedule, ManyForms, Mode, RunConfig, StepState, StructuredMap,
};
pub use error::{Error, Result};
pub use forms::{parse_form, FormPairHypotheses, LinearForm, SubsetSumProfile};
pub use images::{
    decompose, image, is_surjective, level_image, naive_image, witness_set, Representation,
    SubsetOfModule,
};
pub use modules::{Element, FiniteModule};
pub use search::{
    min_m, naive_scan, property_holds, ratio_report, PropertyOutcome, PropertyQuery, RatioRow,
    SearchReport, SearchRow,
};
