//! End-to-end tests of the `hrlab` binary: flag parsing, the documented
//! exit codes, and byte-for-byte determinism of the generated artifacts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hrlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrlab"))
        .args(args)
        .env_remove("HRLAB_SEED")
        .env_remove("HRLAB_BUDGET_BITS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn tmp(name: &str) -> PathBuf {
    Path::new(env!("CARGO_TARGET_TMPDIR")).join(name)
}

#[test]
fn analyze_prints_the_subset_sum_profile() {
    let out = hrlab(&["analyze", "--form", "t1 - t2"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("subset sums: {-1, 0, 1}"));
    assert!(text.contains("zero in sums: true"));
    assert!(text.contains("usable as covering form: true"));
    assert!(text.contains("usable as sparse form: false"));

    let out = hrlab(&["analyze", "--form", "2*t1 - t2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("subset sums: {-1, 1, 2}"));
    assert!(text.contains("usable as sparse form: true"));
}

#[test]
fn analyze_rejects_a_degenerate_form_with_exit_two() {
    // t1 cancels, leaving a zero coefficient.
    let out = hrlab(&["analyze", "--form", "t1 + t2 - t1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn construct_and_verify_round_trip() {
    let cert = tmp("cli_roundtrip.json");
    let out = hrlab(&[
        "construct",
        "--upsilon",
        "t1 - t2",
        "--phi",
        "t1 + t2",
        "--eps",
        "9/10",
        "--mode",
        "toy",
        "--toy-factor",
        "5",
        "--toy-factor",
        "7",
        "--seed",
        "3",
        "--out",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = hrlab(&["verify", "--cert", cert.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("certificate verified"));
    assert!(stdout(&out).contains("toy"));
}

#[test]
fn verify_distinguishes_tampering_from_malformed_input() {
    let cert = tmp("cli_tamper.json");
    let out = hrlab(&[
        "construct",
        "--upsilon",
        "t1 - t2",
        "--phi",
        "t1 + t2",
        "--eps",
        "9/10",
        "--mode",
        "toy",
        "--toy-factor",
        "3",
        "--toy-factor",
        "5",
        "--out",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&cert).unwrap();

    // A flipped digest character is a broken certificate: exit 1.
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut flipped: Vec<char> = doc["digest"].as_str().unwrap().chars().collect();
    flipped[0] = if flipped[0] == '0' { '1' } else { '0' };
    doc["digest"] = serde_json::Value::String(flipped.into_iter().collect());
    let bad = tmp("cli_tamper_bad.json");
    std::fs::write(&bad, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = hrlab(&["verify", "--cert", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("digest"), "stderr: {}", stderr(&out));

    // An unknown schema is a format problem: exit 3.
    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["schema"] = serde_json::Value::String("not-ours".into());
    let alien = tmp("cli_tamper_alien.json");
    std::fs::write(&alien, serde_json::to_string(&doc).unwrap()).unwrap();
    let out = hrlab(&["verify", "--cert", alien.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    // A missing file is also a format problem: exit 3.
    let out = hrlab(&[
        "verify",
        "--cert",
        tmp("cli_no_such_file.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn search_reports_the_least_modulus_and_exit_codes() {
    // A bound above one is satisfied by {0} in the trivial module.
    let out = hrlab(&[
        "search",
        "--upsilon",
        "t1 - t2",
        "--phi",
        "t1 + t2",
        "--eps",
        "2",
        "--max-m",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("smallest m: 1 with witness [0]"));

    // Nothing up to 8 satisfies a 1/2 bound for this pair: exit 1.
    let out = hrlab(&[
        "search",
        "--upsilon",
        "t1 - t2",
        "--phi",
        "t1 + t2",
        "--eps",
        "1/2",
        "--max-m",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("no modulus up to 8"));

    // Strict exhaustive scans refuse moduli past the subset budget: exit 4.
    let out = hrlab(&[
        "search",
        "--upsilon",
        "t1 - t2",
        "--phi",
        "t1 + t2",
        "--eps",
        "9/10",
        "--max-m",
        "80",
        "--exhaustive",
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn search_artifacts_are_deterministic() {
    let args = [
        "search",
        "--upsilon",
        "t1 - t2",
        "--phi",
        "t1 + t2",
        "--eps",
        "9/10",
        "--max-m",
        "9",
    ];
    let first = hrlab(&args);
    let second = hrlab(&args);
    assert_eq!(first.status.code(), Some(0));
    assert_eq!(
        first.stdout, second.stdout,
        "stdout must not depend on thread timing"
    );

    let json_a = tmp("cli_search_a.json");
    let json_b = tmp("cli_search_b.json");
    let csv_a = tmp("cli_search_a.csv");
    let csv_b = tmp("cli_search_b.csv");
    for (json, csv) in [(&json_a, &csv_a), (&json_b, &csv_b)] {
        let mut full: Vec<&str> = args.to_vec();
        full.extend_from_slice(&[
            "--out",
            json.to_str().unwrap(),
            "--csv",
            csv.to_str().unwrap(),
        ]);
        let out = hrlab(&full);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    assert_eq!(
        std::fs::read(&json_a).unwrap(),
        std::fs::read(&json_b).unwrap()
    );
    let csv = std::fs::read_to_string(&csv_a).unwrap();
    assert_eq!(csv, std::fs::read_to_string(&csv_b).unwrap());
    assert!(csv.starts_with("m,satisfiable,min_phi_image,witness_bits_hex,sizes"));
    assert!(csv.lines().any(|l| l.starts_with("6,true,5,")));
}

#[test]
fn construct_certificates_are_reproducible_bytes() {
    let a = tmp("cli_repro_a.json");
    let b = tmp("cli_repro_b.json");
    for path in [&a, &b] {
        let out = hrlab(&[
            "construct",
            "--upsilon",
            "t1 - t2",
            "--phi",
            "t1 + t2",
            "--eps",
            "9/10",
            "--mode",
            "toy",
            "--toy-factor",
            "3",
            "--toy-factor",
            "5",
            "--seed",
            "42",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn seed_flag_and_environment_agree() {
    let flag = tmp("cli_seed_flag.json");
    let env = tmp("cli_seed_env.json");
    let base = [
        "ratio",
        "--upsilon",
        "t1 + t2",
        "--phi",
        "t1 - t2",
        "--random",
        "3",
        "--m",
        "41",
    ];

    let mut args: Vec<&str> = base.to_vec();
    args.extend_from_slice(&["--seed", "5", "--out", flag.to_str().unwrap()]);
    let out = hrlab(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let mut args: Vec<&str> = base.to_vec();
    args.extend_from_slice(&["--out", env.to_str().unwrap()]);
    let out = Command::new(env!("CARGO_BIN_EXE_hrlab"))
        .args(&args)
        .env("HRLAB_SEED", "5")
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    assert_eq!(
        std::fs::read(&flag).unwrap(),
        std::fs::read(&env).unwrap(),
        "--seed and HRLAB_SEED must select the same instances"
    );
}

#[test]
fn ratio_prints_a_band_table_for_explicit_instances() {
    let out = hrlab(&[
        "ratio",
        "--upsilon",
        "t1 + t2",
        "--phi",
        "t1 - t2",
        "--instance",
        "31:0,1,2,3,4,5,6,7,8,9",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("m"), "missing header: {text}");
    // 10-term arithmetic progression: both images have 19 elements.
    assert!(text.contains("19"), "unexpected table: {text}");
    assert!(
        text.contains("1.000"),
        "ratio column should show 1.000: {text}"
    );
}
