//! hrlab: build modules where given linear forms cover everything while
//! another keeps a sparse image, certify the runs, and search small
//! cyclic moduli exhaustively.
//!
//! Exit codes are a stable contract: 0 success, 1 the asked-for
//! property is false or nothing was found (not an error), 2 bad input,
//! 3 malformed file, 4 over budget.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hrlab_core::budget::ENV_SEED;
use hrlab_core::construction::{from_json, to_json, verify_certificate, Mode, RunConfig};
use hrlab_core::forms::{check_hypotheses, subset_sums};
use hrlab_core::rational::parse_rational;
use hrlab_core::search::{
    min_m, property_holds_seeded, ratio_report, witness_bits_hex, PropertyQuery, SearchRow,
};
use hrlab_core::{parse_form, run_construction, Budget, Error};

#[derive(Parser)]
#[command(
    name = "hrlab",
    version,
    about = "covering forms with sparse images over finite modules"
)]
struct Cli {
    /// Cap worker threads for parallel scans.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a form's subset sums and hypothesis flags.
    Analyze {
        /// Expression such as "t1 - t2" or "2*t1 - t2".
        #[arg(long)]
        form: String,
    },
    /// Run the construction and write a certificate.
    Construct {
        /// Covering form; repeat for a family.
        #[arg(long = "upsilon", required = true)]
        upsilons: Vec<String>,
        /// Form whose image must stay sparse.
        #[arg(long)]
        phi: String,
        /// Density bound, "P/Q" or decimal.
        #[arg(long)]
        eps: String,
        /// The final module must have more than this many elements.
        #[arg(long, default_value_t = 1)]
        c: u64,
        /// exhaustive, sampled, or toy.
        #[arg(long, default_value = "sampled")]
        mode: String,
        /// Level-1 factors for toy mode.
        #[arg(long = "toy-factor")]
        toy_factors: Vec<u64>,
        /// Sample count for randomized checks.
        #[arg(long, default_value_t = 200)]
        samples: u64,
        /// Check seed; HRLAB_SEED, then 0, when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// Certificate path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check every claim in a certificate file.
    Verify {
        /// Certificate produced by `construct`.
        #[arg(long)]
        cert: PathBuf,
    },
    /// Scan m = 1..=max-m for the property (Υ, Φ, ε).
    Search {
        /// Covering form.
        #[arg(long)]
        upsilon: String,
        /// Form whose image must stay sparse.
        #[arg(long)]
        phi: String,
        /// Density bound, "P/Q" or decimal.
        #[arg(long)]
        eps: String,
        /// Largest modulus to scan.
        #[arg(long = "max-m")]
        max_m: u64,
        /// Apply Υ to A ∪ {0} instead of A.
        #[arg(long)]
        include_zero: bool,
        /// Refuse moduli beyond the exhaustive budget instead of
        /// annealing them.
        #[arg(long)]
        exhaustive: bool,
        /// JSON report path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// CSV report path.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Annealer seed; HRLAB_SEED, then 0, when absent.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Exact |Υ(A)|, |Φ(A)| and their log ratio for given or random sets.
    Ratio {
        /// Covering form.
        #[arg(long)]
        upsilon: String,
        /// Form whose image is compared against the covering image.
        #[arg(long)]
        phi: String,
        /// Instance "m:r1,r2,...", repeatable.
        #[arg(long = "instance")]
        instances: Vec<String>,
        /// Add this many random sets.
        #[arg(long, default_value_t = 0)]
        random: u64,
        /// Modulus for random sets.
        #[arg(long, default_value_t = 101)]
        m: u64,
        /// Sampling seed; HRLAB_SEED, then 0, when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// JSON table path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let budget = Budget::from_env();
    let code = match cli.command {
        Command::Analyze { form } => cmd_analyze(&form, &budget),
        Command::Construct {
            upsilons,
            phi,
            eps,
            c,
            mode,
            toy_factors,
            samples,
            seed,
            out,
        } => cmd_construct(
            &upsilons,
            &phi,
            &eps,
            c,
            &mode,
            &toy_factors,
            samples,
            seed,
            out.as_deref(),
            &budget,
        ),
        Command::Verify { cert } => cmd_verify(&cert, &budget),
        Command::Search {
            upsilon,
            phi,
            eps,
            max_m,
            include_zero,
            exhaustive,
            out,
            csv,
            seed,
        } => cmd_search(
            &upsilon,
            &phi,
            &eps,
            max_m,
            include_zero,
            exhaustive,
            out.as_deref(),
            csv.as_deref(),
            seed,
            &budget,
        ),
        Command::Ratio {
            upsilon,
            phi,
            instances,
            random,
            m,
            seed,
            out,
        } => cmd_ratio(
            &upsilon,
            &phi,
            &instances,
            random,
            m,
            seed,
            out.as_deref(),
            &budget,
        ),
    };
    match code {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Format { .. } => 3,
        Error::BudgetExceeded { .. } => 4,
        Error::CertificateInvalid { .. } | Error::NotCertified { .. } => 1,
        _ => 2,
    }
}

fn seed_from(flag: Option<u64>) -> u64 {
    flag.or_else(|| {
        std::env::var(ENV_SEED)
            .ok()
            .and_then(|v| v.trim().parse().ok())
    })
    .unwrap_or(0)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Format {
            msg: format!("cannot write {}: {e}", path.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_analyze(form: &str, budget: &Budget) -> Result<u8, Error> {
    let form = parse_form(form)?;
    let profile = subset_sums(&form, budget)?;
    let sums: Vec<String> = profile.sums.iter().map(|s| s.to_string()).collect();
    println!("form: {form}");
    println!("arity: {}", form.arity());
    println!("subset sums: {{{}}}", sums.join(", "));
    println!("zero in sums: {}", profile.contains_zero);
    println!("coefficient total: {}", profile.total);
    let self_pair = check_hypotheses(&form, &form, budget)?;
    println!("usable as covering form: {}", self_pair.zero_sum_in_upsilon);
    println!(
        "usable as sparse form: {}",
        self_pair.zero_sum_avoided_by_phi
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_construct(
    upsilons: &[String],
    phi: &str,
    eps: &str,
    c: u64,
    mode: &str,
    toy_factors: &[u64],
    samples: u64,
    seed: Option<u64>,
    out: Option<&Path>,
    budget: &Budget,
) -> Result<u8, Error> {
    let upsilons = upsilons
        .iter()
        .map(|u| parse_form(u))
        .collect::<Result<Vec<_>, _>>()?;
    let mut cfg = RunConfig::new(upsilons, parse_form(phi)?, parse_rational(eps)?);
    cfg.floor_c = c;
    cfg.mode = Mode::from_str(mode)?;
    cfg.sample_size = samples;
    cfg.seed = seed_from(seed);
    if !toy_factors.is_empty() {
        cfg.toy_factors = toy_factors.to_vec();
    }
    let cert = run_construction(&cfg, budget)?;
    write_or_print(out, &to_json(&cert))?;
    if !cert.all_checks_passed() {
        eprintln!("a recorded check failed; see the certificate");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_verify(cert: &Path, budget: &Budget) -> Result<u8, Error> {
    let text = fs::read_to_string(cert).map_err(|e| Error::Format {
        msg: format!("cannot read {}: {e}", cert.display()),
    })?;
    let cert = from_json(&text)?;
    verify_certificate(&cert, budget)?;
    println!(
        "certificate verified: {} levels, mode {}",
        cert.levels.len(),
        cert.mode
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_search(
    upsilon: &str,
    phi: &str,
    eps: &str,
    max_m: u64,
    include_zero: bool,
    strict: bool,
    out: Option<&Path>,
    csv: Option<&Path>,
    seed: Option<u64>,
    budget: &Budget,
) -> Result<u8, Error> {
    let query = PropertyQuery::new(
        parse_form(upsilon)?,
        parse_form(phi)?,
        parse_rational(eps)?,
        include_zero,
    )?;
    let seed = seed_from(seed);
    let scan_max = if strict {
        max_m
    } else {
        max_m.min(budget.subset_ground)
    };
    let mut report = min_m(&query, scan_max, budget)?;
    report.seed = seed;
    // moduli past the exhaustive budget get annealed, clearly labeled,
    // and never move the smallest-m claim
    for m in scan_max + 1..=max_m {
        let outcome = property_holds_seeded(&query, m, budget, seed)?;
        report.rows.push(SearchRow {
            m,
            satisfiable: outcome.satisfiable,
            exhaustive: false,
            min_size_bound: 0,
            min_phi_image: None,
            witness_bits_hex: outcome.witness.as_ref().map(|w| witness_bits_hex(m, w)),
            witness: outcome.witness,
            sizes: Vec::new(),
            largest_witness: None,
        });
    }
    report.m_max = max_m;
    if let Some(path) = out {
        write_or_print(Some(path), &report.to_json())?;
    }
    if let Some(path) = csv {
        write_or_print(Some(path), &report.to_csv())?;
    }
    match report.min_m {
        Some(m) => {
            let row = &report.rows[(m - 1) as usize];
            let witness = row
                .witness
                .as_ref()
                .map(|w| format!("{w:?}"))
                .unwrap_or_default();
            println!("smallest m: {m} with witness {witness}");
            Ok(0)
        }
        None => {
            let found: Vec<u64> = report
                .rows
                .iter()
                .filter(|r| !r.exhaustive && r.satisfiable)
                .map(|r| r.m)
                .collect();
            if found.is_empty() {
                println!("no modulus up to {max_m} has the property");
            } else {
                println!(
                    "none up to {scan_max} exhaustively; annealer hits (not least): {found:?}"
                );
            }
            Ok(1)
        }
    }
}

fn parse_instance(text: &str) -> Result<(u64, Vec<u64>), Error> {
    let bad = |msg: &str| Error::Parse {
        position: 0,
        msg: format!("instance \"{text}\": {msg}"),
    };
    let (m, rest) = text
        .split_once(':')
        .ok_or_else(|| bad("expected m:r1,r2,..."))?;
    let m = m.trim().parse::<u64>().map_err(|_| bad("bad modulus"))?;
    let residues = rest
        .split(',')
        .map(|r| r.trim().parse::<u64>().map_err(|_| bad("bad residue")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((m, residues))
}

#[allow(clippy::too_many_arguments)]
fn cmd_ratio(
    upsilon: &str,
    phi: &str,
    instances: &[String],
    random: u64,
    m: u64,
    seed: Option<u64>,
    out: Option<&Path>,
    budget: &Budget,
) -> Result<u8, Error> {
    let upsilon = parse_form(upsilon)?;
    let phi = parse_form(phi)?;
    let seed = seed_from(seed);
    let mut parsed = instances
        .iter()
        .map(|t| parse_instance(t))
        .collect::<Result<Vec<_>, _>>()?;
    if random > 0 {
        if m < 2 {
            return Err(Error::ShapeMismatch {
                msg: "random instances need a modulus of at least 2".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..random {
            let k = rng.gen_range(2..=m.min(64));
            let set = rand::seq::index::sample(&mut rng, m as usize, k as usize)
                .into_iter()
                .map(|i| i as u64)
                .collect();
            parsed.push((m, set));
        }
    }
    if parsed.is_empty() {
        return Err(Error::ShapeMismatch {
            msg: "nothing to do: give --instance or --random".into(),
        });
    }
    let rows = ratio_report(&upsilon, &phi, &parsed, budget)?;
    println!("m,set_size,upsilon_image,phi_image,ratio,within_band");
    let mut violation = false;
    for row in &rows {
        let ratio = row.ratio.map(|r| format!("{r:.6}")).unwrap_or_default();
        let band = row
            .within_band
            .map(|b| b.to_string())
            .unwrap_or_else(|| "undefined".into());
        violation |= row.within_band == Some(false);
        println!(
            "{},{},{},{},{},{}",
            row.m, row.set_size, row.upsilon_image, row.phi_image, ratio, band
        );
    }
    if let Some(path) = out {
        let table = serde_json::json!({ "seed": seed, "rows": rows });
        let mut text = serde_json::to_string_pretty(&table).expect("table serialization");
        text.push('\n');
        write_or_print(Some(path), &text)?;
    }
    Ok(u8::from(violation))
}
