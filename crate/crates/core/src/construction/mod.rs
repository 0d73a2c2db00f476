//! Building pairs (M, A) with every Υ_j(A) = M while Φ(A) stays sparse.
//!
//! The module M grows level by level. Level 1 allocates one cyclic factor
//! per subset sum of Φ and scales coordinates so that level-1 values of
//! Φ over A(M, f) = {f(x)} ∪ {f(x) + x} all hit a coordinate hyperplane.
//! Each later level adjoins one factor per admissible pair of the next
//! representation level and extends f so the new values vanish on their
//! own factors. Representations of Υ stay available throughout because
//! every factor is chosen coprime to every nonzero subset sum of every
//! given form, so Υ(A) = M with an explicit witness per target.
//!
//! A run is recorded as a [`Certificate`]: factors, maps, per-check
//! outcomes with seeds, and (in exhaustive mode) the exact image size of
//! the finished set. [`verify_certificate`] re-derives all of it.

mod certificate;
mod map;
mod schedule;
mod steps;

pub use certificate::{
    certificate_digest, from_json, to_json, verify_certificate, Certificate, CheckRecord,
    Conclusion, LevelRecord, SCHEMA,
};
pub use map::{InductiveMap, MapDescription, StructuredMap};
pub use schedule::EpsilonSchedule;
pub use steps::{build_set, inductive_step, initial_step, surjectivity_witness, Mode, StepState};

use num_bigint::BigUint;
use num_rational::BigRational;

use crate::budget::Budget;
use crate::error::{Error, Result};
use crate::forms::LinearForm;
use crate::images::{image, is_surjective, SubsetOfModule};
use crate::modules::{Element, FiniteModule};
use crate::rational::{count_below, format_rational};

/// Recorded with every certificate: the factor selection reads the whole
/// list of surjective forms, not just Φ.
pub const MODULI_NOTE: &str = "factor selection avoids divisors of the nonzero subset sums of \
every given form, so the module depends on the surjective forms as well as the image form";

/// Everything a construction run needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub upsilons: Vec<LinearForm>,
    pub phi: LinearForm,
    /// When Φ was concatenated from parts, the parts (recorded only).
    pub chi_parts: Option<Vec<LinearForm>>,
    pub eps: BigRational,
    /// The final module must exceed this.
    pub floor_c: u64,
    pub mode: Mode,
    /// Factors for level 1 in toy mode.
    pub toy_factors: Vec<u64>,
    /// Sample count for the randomized covering check.
    pub sample_size: u64,
    /// Explicit per-level bounds; even spacing when absent.
    pub schedule: Option<Vec<BigRational>>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(upsilons: Vec<LinearForm>, phi: LinearForm, eps: BigRational) -> Self {
        RunConfig {
            upsilons,
            phi,
            chi_parts: None,
            eps,
            floor_c: 1,
            mode: Mode::Sampled,
            toy_factors: vec![5, 7],
            sample_size: 200,
            schedule: None,
            seed: 0,
        }
    }
}

/// Runs the full construction and returns its certificate.
pub fn run_construction(cfg: &RunConfig, budget: &Budget) -> Result<Certificate> {
    let h = cfg.phi.arity();
    let schedule = match &cfg.schedule {
        Some(levels) => EpsilonSchedule::custom(cfg.eps.clone(), levels.clone())?,
        None => EpsilonSchedule::even(cfg.eps.clone(), h)?,
    };
    let toy = (cfg.mode == Mode::Toy).then_some(cfg.toy_factors.as_slice());
    let (mut state, first) =
        initial_step(&cfg.upsilons, &cfg.phi, &schedule, cfg.floor_c, toy, budget)?;
    let mut levels = vec![first];
    for _ in 1..h {
        let (next, record) = inductive_step(
            &state,
            &cfg.upsilons,
            &cfg.phi,
            &schedule,
            cfg.mode,
            cfg.sample_size,
            cfg.seed,
            budget,
        )?;
        state = next;
        levels.push(record);
    }
    let card = state.module.cardinality();
    let conclusion = match cfg.mode {
        Mode::Toy => None,
        Mode::Sampled => Some(Conclusion {
            cardinality: card.to_string(),
            exceeds_floor: card > BigUint::from(cfg.floor_c),
            set_size: None,
            image_size: None,
            image_bound_holds: None,
            surjectivity_verified: None,
        }),
        Mode::Exhaustive => {
            let a = build_set(&state.module, &state.map, budget)?;
            let img = image(&cfg.phi, &a, budget)?;
            let mut surjective = true;
            for u in &cfg.upsilons {
                surjective &= is_surjective(u, &a, false, budget)?;
            }
            Some(Conclusion {
                cardinality: card.to_string(),
                exceeds_floor: card > BigUint::from(cfg.floor_c),
                set_size: Some(a.len().to_string()),
                image_size: Some(img.len().to_string()),
                image_bound_holds: Some(count_below(&img.len(), &cfg.eps, &card)),
                surjectivity_verified: Some(surjective),
            })
        }
    };
    let mut cert = Certificate {
        schema: SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        mode: cfg.mode.as_str().into(),
        seed: cfg.seed.to_string(),
        upsilons: cfg.upsilons.iter().map(|u| u.to_string()).collect(),
        phi: cfg.phi.to_string(),
        chi_parts: cfg
            .chi_parts
            .as_ref()
            .map(|ps| ps.iter().map(|p| p.to_string()).collect()),
        eps: format_rational(&cfg.eps),
        floor_c: cfg.floor_c.to_string(),
        schedule: schedule.render_levels(),
        moduli_note: MODULI_NOTE.into(),
        levels,
        conclusion,
        digest: String::new(),
    };
    cert.digest = certificate_digest(&cert);
    Ok(cert)
}

/// χ = Φ_1 + … + Φ_K on disjoint variable blocks. Each part's image
/// embeds in χ's by translation, so sparsity of χ(A) caps every part.
#[derive(Debug, Clone)]
pub struct ManyForms {
    chi: LinearForm,
    parts: Vec<LinearForm>,
}

impl ManyForms {
    pub fn new(parts: Vec<LinearForm>) -> Result<Self> {
        let chi = LinearForm::concat(&parts)?;
        Ok(ManyForms { chi, parts })
    }

    pub fn chi(&self) -> &LinearForm {
        &self.chi
    }

    pub fn parts(&self) -> &[LinearForm] {
        &self.parts
    }

    /// The translation Σ_{j≠k} φ*_j·a taking Φ_k(A) into χ(A) when the
    /// other blocks are pinned to a ∈ A.
    pub fn embedding_shift(&self, module: &FiniteModule, k: usize, a: &Element) -> Result<Element> {
        if k >= self.parts.len() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.parts.len(),
            });
        }
        let mut shift = module.zero();
        for (j, part) in self.parts.iter().enumerate() {
            if j != k {
                shift = module.add(&shift, &module.scalar_mul(part.coefficient_total()?, a));
            }
        }
        Ok(shift)
    }

    /// Checks Φ_k(A) + shift ⊆ χ(A) with both images computed exactly.
    pub fn embedding_holds(
        &self,
        a: &SubsetOfModule,
        k: usize,
        pin: &Element,
        budget: &Budget,
    ) -> Result<bool> {
        if !a.contains(pin) {
            return Err(Error::ShapeMismatch {
                msg: format!("the pinned element {pin} is not in the set"),
            });
        }
        let module = a.module();
        let shift = self.embedding_shift(module, k, pin)?;
        let part_image = image(&self.parts[k], a, budget)?;
        let chi_image = image(&self.chi, a, budget)?;
        for w in part_image.sorted_elements() {
            if !chi_image.contains(&module.add(&w, &shift)) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// A pair (M, A) whose properties have been checked for some bound.
#[derive(Debug, Clone)]
pub struct CertifiedWitness {
    pub module: FiniteModule,
    pub elements: Vec<Element>,
    pub eps: BigRational,
}

impl CertifiedWitness {
    fn as_set(&self, budget: &Budget) -> Result<SubsetOfModule> {
        SubsetOfModule::from_elements(&self.module, self.elements.iter().cloned(), budget)
    }
}

/// Composes two witnesses into one on the product module.
///
/// Both inputs are re-verified (Υ(A_i) = M_i and |Φ(A_i)| < ε_i|M_i|);
/// the product set A_1 × A_2 then satisfies Φ(A) = Φ(A_1) × Φ(A_2) and
/// Υ(A) = M, giving the bound ε_1·ε_2. The factorization is checked
/// exactly, not assumed.
pub fn compose(
    first: &CertifiedWitness,
    second: &CertifiedWitness,
    upsilon: &LinearForm,
    phi: &LinearForm,
    budget: &Budget,
) -> Result<CertifiedWitness> {
    let mut part_images = Vec::with_capacity(2);
    for (which, w) in [("first", first), ("second", second)] {
        let a = w.as_set(budget)?;
        if !is_surjective(upsilon, &a, false, budget)? {
            return Err(Error::NotCertified {
                msg: format!("{which} witness: {upsilon} does not cover its module"),
            });
        }
        let img = image(phi, &a, budget)?;
        if !count_below(&img.len(), &w.eps, &w.module.cardinality()) {
            return Err(Error::NotCertified {
                msg: format!("{which} witness: the image of {phi} misses its bound"),
            });
        }
        part_images.push(img);
    }
    let module = first.module.direct_sum(&second.module);
    let mut elements = Vec::with_capacity(first.elements.len() * second.elements.len());
    for a in &first.elements {
        for b in &second.elements {
            let mut coords = a.coords().to_vec();
            coords.extend_from_slice(b.coords());
            elements.push(Element(coords));
        }
    }
    let set = SubsetOfModule::from_elements(&module, elements.iter().cloned(), budget)?;
    if !is_surjective(upsilon, &set, false, budget)? {
        return Err(Error::NotCertified {
            msg: format!("{upsilon} does not cover the product module"),
        });
    }
    let img = image(phi, &set, budget)?;
    let mut expected = SubsetOfModule::empty(&module, budget);
    for a in part_images[0].sorted_elements() {
        for b in part_images[1].sorted_elements() {
            let mut coords = a.coords().to_vec();
            coords.extend_from_slice(b.coords());
            expected.insert(Element(coords))?;
        }
    }
    if !img.set_eq(&expected) {
        return Err(Error::NotCertified {
            msg: "the image of the product set does not factor".into(),
        });
    }
    let eps = &first.eps * &second.eps;
    if !count_below(&img.len(), &eps, &module.cardinality()) {
        return Err(Error::NotCertified {
            msg: "the product image misses the product bound".into(),
        });
    }
    Ok(CertifiedWitness {
        module,
        elements,
        eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::parse_form;
    use crate::rational::parse_rational;

    fn config(phi: &str, eps: &str, mode: Mode) -> RunConfig {
        let mut cfg = RunConfig::new(
            vec![parse_form("t1 - t2").unwrap()],
            parse_form(phi).unwrap(),
            parse_rational(eps).unwrap(),
        );
        cfg.mode = mode;
        cfg.seed = 0x5eed;
        cfg
    }

    #[test]
    fn one_variable_run_concludes_exhaustively() {
        let b = Budget::default();
        let cert = run_construction(&config("t1", "9/10", Mode::Exhaustive), &b).unwrap();
        assert_eq!(cert.levels.len(), 1);
        // factors 5 and 7 for the sums 0 and 1; A is the union of the axes
        assert_eq!(cert.levels[0].factors, ["5", "7"]);
        let conc = cert.conclusion.as_ref().unwrap();
        assert_eq!(conc.cardinality, "35");
        assert_eq!(conc.set_size.as_deref(), Some("11"));
        assert_eq!(conc.image_size.as_deref(), Some("11"));
        assert_eq!(conc.image_bound_holds, Some(true));
        assert_eq!(conc.surjectivity_verified, Some(true));
        assert!(cert.all_checks_passed());
        verify_certificate(&cert, &b).unwrap();
    }

    #[test]
    fn toy_run_round_trips_through_json_and_verifies() {
        let b = Budget::default();
        let cert = run_construction(&config("t1 + t2", "9/10", Mode::Toy), &b).unwrap();
        assert_eq!(cert.levels.len(), 2);
        assert!(cert.conclusion.is_none());
        assert!(cert.all_checks_passed());
        let text = to_json(&cert);
        let back = from_json(&text).unwrap();
        assert_eq!(back, cert);
        verify_certificate(&back, &b).unwrap();
    }

    #[test]
    fn tampered_factor_is_rejected_by_name() {
        let b = Budget::default();
        let mut cert = run_construction(&config("t1", "9/10", Mode::Exhaustive), &b).unwrap();
        cert.levels[0].factors[0] = "11".into();
        let err = verify_certificate(&cert, &b).unwrap_err();
        match err {
            Error::CertificateInvalid { msg } => assert!(msg.contains("factor"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn tampered_free_text_is_rejected_by_the_digest() {
        let b = Budget::default();
        let mut cert = run_construction(&config("t1", "9/10", Mode::Exhaustive), &b).unwrap();
        cert.moduli_note.push('!');
        let err = verify_certificate(&cert, &b).unwrap_err();
        match err {
            Error::CertificateInvalid { msg } => assert!(msg.contains("digest"), "{msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_is_a_format_error() {
        let b = Budget::default();
        let cert = run_construction(&config("t1", "9/10", Mode::Exhaustive), &b).unwrap();
        let text = to_json(&cert).replace("hrlab-cert/1", "hrlab-cert/9");
        match from_json(&text).unwrap_err() {
            Error::Format { .. } => {}
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn embedding_translates_each_part_into_the_joint_image() {
        let b = Budget::default();
        let module = FiniteModule::new(vec![30]).unwrap();
        let parts = vec![
            parse_form("t1 + t2").unwrap(),
            parse_form("t1 - t2").unwrap(),
        ];
        let joint = ManyForms::new(parts).unwrap();
        assert_eq!(joint.chi().coefficients(), &[1, 1, 1, -1]);
        let a = SubsetOfModule::from_elements(
            &module,
            [0u64, 1, 5, 11, 28].map(|k| Element(vec![k])),
            &b,
        )
        .unwrap();
        let pin = Element(vec![5]);
        for k in 0..2 {
            assert!(joint.embedding_holds(&a, k, &pin, &b).unwrap());
        }
    }

    #[test]
    fn compose_multiplies_bounds_and_checks_the_factorization() {
        let b = Budget::default();
        let upsilon = parse_form("t1 - t2").unwrap();
        let phi = parse_form("t1 + t2").unwrap();
        // planar difference sets: differences cover while sums miss 0
        // in Z/7 and miss 7, 8, 11 in Z/13
        let w1 = CertifiedWitness {
            module: FiniteModule::new(vec![7]).unwrap(),
            elements: vec![Element(vec![1]), Element(vec![2]), Element(vec![4])],
            eps: parse_rational("9/10").unwrap(),
        };
        let w2 = CertifiedWitness {
            module: FiniteModule::new(vec![13]).unwrap(),
            elements: [0u64, 1, 3, 9].map(|k| Element(vec![k])).to_vec(),
            eps: parse_rational("9/10").unwrap(),
        };
        let joined = compose(&w1, &w2, &upsilon, &phi, &b).unwrap();
        assert_eq!(joined.module.factors(), &[7, 13]);
        assert_eq!(joined.elements.len(), 12);
        assert_eq!(joined.eps, parse_rational("81/100").unwrap());
    }

    #[test]
    fn compose_rejects_an_uncovered_input() {
        let b = Budget::default();
        let upsilon = parse_form("t1 - t2").unwrap();
        let phi = parse_form("t1 + t2").unwrap();
        let thin = CertifiedWitness {
            module: FiniteModule::new(vec![7]).unwrap(),
            elements: vec![Element(vec![0])],
            eps: parse_rational("9/10").unwrap(),
        };
        let err = compose(&thin, &thin, &upsilon, &phi, &b).unwrap_err();
        assert!(matches!(err, Error::NotCertified { .. }));
    }
}
