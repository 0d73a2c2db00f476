//! Cross-module flows through the public API: certificate round trips,
//! honest budget refusals at real scale, and scheduler-independent search
//! reports.

use hrlab_core::rational::parse_rational;
use hrlab_core::{
    from_json, min_m, parse_form, run_construction, to_json, verify_certificate, Budget, Error,
    Mode, PropertyQuery, RunConfig,
};

fn toy_config() -> RunConfig {
    let mut cfg = RunConfig::new(
        vec![parse_form("t1 - t2").unwrap()],
        parse_form("t1 + t2").unwrap(),
        parse_rational("9/10").unwrap(),
    );
    cfg.mode = Mode::Toy;
    cfg.toy_factors = vec![3, 5];
    cfg.seed = 99;
    cfg
}

#[test]
fn toy_certificate_round_trips_and_detects_a_mode_swap() {
    let b = Budget::default();
    let cert = run_construction(&toy_config(), &b).unwrap();
    let text = to_json(&cert);
    let back = from_json(&text).unwrap();
    assert_eq!(to_json(&back), text, "serialization is stable");
    verify_certificate(&back, &b).unwrap();

    // Claiming a stronger mode than the one that ran must be caught.
    let mut relabeled = cert.clone();
    relabeled.mode = "sampled".into();
    let err = verify_certificate(&relabeled, &b).unwrap_err();
    assert!(matches!(err, Error::CertificateInvalid { .. }), "got {err}");
}

#[test]
fn identical_runs_share_a_digest_and_different_seeds_do_not() {
    let b = Budget::default();
    let one = run_construction(&toy_config(), &b).unwrap();
    let two = run_construction(&toy_config(), &b).unwrap();
    assert_eq!(one.digest, two.digest);

    let mut other_cfg = toy_config();
    other_cfg.seed = 100;
    let three = run_construction(&other_cfg, &b).unwrap();
    assert_ne!(
        one.digest, three.digest,
        "the seed is part of the sealed record"
    );
}

#[test]
fn real_scale_two_variable_runs_are_refused_not_faked() {
    // At real scale the second level wants one factor per admissible pair,
    // which overflows the default pair budget. The run must say so instead
    // of silently truncating.
    let b = Budget::default();
    let cfg = RunConfig::new(
        vec![parse_form("t1 - t2").unwrap()],
        parse_form("t1 + t2").unwrap(),
        parse_rational("9/10").unwrap(),
    );
    let err = run_construction(&cfg, &b).unwrap_err();
    match err {
        Error::BudgetExceeded { what, .. } => {
            assert!(what.contains("pair"), "unexpected refusal: {what}")
        }
        other => panic!("expected a budget refusal, got {other}"),
    }
}

#[test]
fn search_reports_do_not_depend_on_the_thread_count() {
    let b = Budget::default();
    let query = PropertyQuery::new(
        parse_form("t1 - t2").unwrap(),
        parse_form("t1 + t2").unwrap(),
        parse_rational("9/10").unwrap(),
        false,
    )
    .unwrap();

    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| min_m(&query, 10, &b))
        .unwrap();
    let wide = rayon::ThreadPoolBuilder::new()
        .num_threads(7)
        .build()
        .unwrap()
        .install(|| min_m(&query, 10, &b))
        .unwrap();

    assert_eq!(serial.min_m, wide.min_m);
    assert_eq!(serial.rows, wide.rows);
    assert_eq!(serial.to_json(), wide.to_json());
}
