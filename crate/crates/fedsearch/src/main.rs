use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use he_core::{BfvEngine, CkksEngine, HeParams, ParamsProfile};

use fedsearch::codec::CrimeVocabulary;
use fedsearch::config::Config;
use fedsearch::federator::Federator;
use fedsearch::fixture;
use fedsearch::keystore::KeyStore;
use fedsearch::node::{self, NodeConfig, SearchNode};
use fedsearch::store::AgencyStore;

const EXIT_USAGE: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_CRYPTO: u8 = 3;

#[derive(Parser)]
#[command(
    name = "fedsearch",
    about = "Privacy-preserving federated search over encrypted crime-report stores"
)]
struct Cli {
    /// Path to the federation config file.
    #[arg(long, global = true, default_value = "fedsearch.toml")]
    config: PathBuf,

    /// Allow reduced-size ring parameters that are NOT cryptographically
    /// secure (test/demo only).
    #[arg(long, global = true)]
    insecure_params: bool,

    /// Seed for all randomness (key generation, encryption, fixtures).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Ckks,
    Bfv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate keys: the federation-wide CKKS bundle or an agency BFV pair.
    Keygen {
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Agency id (required for BFV; ignored for CKKS).
        #[arg(long)]
        agency: Option<String>,
        /// Overwrite existing key material for the same owner.
        #[arg(long)]
        force: bool,
    },
    /// Hybrid-encrypt plaintext records (JSON lines) into an agency store.
    Ingest {
        #[arg(long)]
        agency: String,
        #[arg(long)]
        input: PathBuf,
    },
    /// Serve an agency's encrypted store over TCP.
    Serve {
        #[arg(long)]
        agency: String,
        #[arg(long)]
        listen: String,
    },
    /// Run an encrypted federated search for a crime type.
    Query {
        term: String,
        /// Post-filter, e.g. --filter location=Portland (repeatable).
        #[arg(long = "filter", value_name = "FIELD=VALUE")]
        filters: Vec<String>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Emit JSON lines instead of text blocks.
        #[arg(long)]
        json: bool,
    },
    /// Benchmark encrypted search against the plaintext baseline.
    Bench {
        #[arg(long, default_value_t = 100)]
        records: usize,
        #[arg(long, default_value_t = 3)]
        agencies: usize,
        #[arg(long, default_value = "Identity Theft")]
        term: String,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        /// Ring parameter profile for the CKKS side.
        #[arg(long, default_value = "ckks_default")]
        profile: String,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        json: bool,
        /// Append one CSV row (with header if the file is new).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Generate a deterministic synthetic fixture as JSON-lines files.
    GenFixture {
        #[arg(long, default_value_t = 100)]
        records: usize,
        #[arg(long, default_value_t = 3)]
        agencies: usize,
        #[arg(long, default_value = "fixture")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(EXIT_CRYPTO)
        }
    }
}

fn check_profile(profile: ParamsProfile, insecure_ok: bool) -> anyhow::Result<()> {
    let params = HeParams::generate(profile);
    if !params.is_secure() && !insecure_ok {
        anyhow::bail!(
            "profile {} is not cryptographically secure; pass --insecure-params to use it anyway",
            profile.name()
        );
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Keygen { scheme, agency, force } => {
            let cfg = Config::load(&cli.config)?;
            let mut rng = ChaCha20Rng::seed_from_u64(cli.seed);
            let ks = KeyStore::open(&cfg.keystore, &cfg.credential, "operator")?;
            let key_id = match scheme {
                SchemeArg::Ckks => {
                    check_profile(cfg.ckks_profile, cli.insecure_params)?;
                    let engine = CkksEngine::new(HeParams::generate(cfg.ckks_profile))?;
                    ks.create_federation_ckks_keys(&engine, cfg.ckks_profile.name(), &mut rng, force)?
                }
                SchemeArg::Bfv => {
                    let agency = match agency {
                        Some(a) => a,
                        None => {
                            eprintln!("error: --agency is required for BFV keygen");
                            return Ok(ExitCode::from(EXIT_USAGE));
                        }
                    };
                    check_profile(cfg.bfv_profile, cli.insecure_params)?;
                    let engine = BfvEngine::new(HeParams::generate(cfg.bfv_profile))?;
                    ks.register_agency_bfv_keys(&agency, &engine, cfg.bfv_profile.name(), &mut rng, force)?
                }
            };
            println!("key_id: {}", key_id);
            Ok(ExitCode::SUCCESS)
        }

        Command::Ingest { agency, input } => {
            let cfg = Config::load(&cli.config)?;
            check_profile(cfg.ckks_profile, cli.insecure_params)?;
            let agency_cfg = cfg
                .agency(&agency)
                .ok_or_else(|| anyhow::anyhow!("agency {:?} not in config", agency))?;
            let vocab = CrimeVocabulary::load()?;
            let ckks = CkksEngine::new(HeParams::generate(cfg.ckks_profile))?;
            let bfv = BfvEngine::new(HeParams::generate(cfg.bfv_profile))?;
            let ks = KeyStore::open(&cfg.keystore, &cfg.credential, "operator")?;
            let fed_public = ks.fetch_public(cfg.federation_key_id)?;
            let material =
                fedsearch::keystore::parse_ckks_public(&fed_public, &ckks.params, &ckks.ring)?;
            let bfv_public = ks.fetch_public(agency_cfg.bfv_key_id)?;
            let bfv_pk = he_core::frame::read_public_key(&bfv_public, &bfv.params, &bfv.ring)?;

            let mut store = if agency_cfg.store.exists() {
                AgencyStore::open(&agency_cfg.store)?
            } else {
                AgencyStore::create(
                    &agency_cfg.store,
                    &agency,
                    agency_cfg.bfv_key_id,
                    cfg.federation_key_id,
                )?
            };

            let text = std::fs::read_to_string(&input)?;
            let mut rng = ChaCha20Rng::seed_from_u64(cli.seed);
            let mut count = 0usize;
            for (lineno, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let rec: fedsearch::codec::PlainRecord = serde_json::from_str(line)
                    .map_err(|e| anyhow::anyhow!("{}:{}: {}", input.display(), lineno + 1, e))?;
                store.ingest_record(&rec, &vocab, &bfv, &bfv_pk, &ckks, &material.public, &mut rng)?;
                count += 1;
            }
            println!("ingested {} records into {}", count, agency_cfg.store.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Serve { agency, listen } => {
            let cfg = Config::load(&cli.config)?;
            check_profile(cfg.ckks_profile, cli.insecure_params)?;
            let agency_cfg = cfg
                .agency(&agency)
                .ok_or_else(|| anyhow::anyhow!("agency {:?} not in config", agency))?;
            let search_node = SearchNode::load(&NodeConfig {
                agency_id: agency.clone(),
                store_path: agency_cfg.store.clone(),
                keystore_root: cfg.keystore.clone(),
                federation_key_id: cfg.federation_key_id,
                profile: cfg.ckks_profile,
                parallelism: cfg.parallelism,
            })?;
            node::serve_forever(search_node, &listen)?;
            Ok(ExitCode::SUCCESS)
        }

        Command::Query {
            term,
            filters,
            threshold,
            json,
        } => {
            let cfg = Config::load(&cli.config)?;
            check_profile(cfg.ckks_profile, cli.insecure_params)?;
            let mut filter_map = BTreeMap::new();
            for f in &filters {
                let Some((field, value)) = f.split_once('=') else {
                    eprintln!("error: --filter expects FIELD=VALUE, got {:?}", f);
                    return Ok(ExitCode::from(EXIT_USAGE));
                };
                filter_map.insert(field.to_string(), value.to_string());
            }
            let federator = Federator::open(
                &cfg.keystore,
                &cfg.credential,
                &cfg.credential,
                cfg.registry(),
                cfg.ckks_profile,
                cfg.bfv_profile,
                threshold.unwrap_or(cfg.threshold),
                cfg.timeout,
            )?;
            let mut rng = ChaCha20Rng::from_entropy();
            let outcome = match federator.search(&term, &filter_map, &mut rng) {
                Ok(o) => o,
                Err(fedsearch::federator::FederatorError::UnknownFilterField(f)) => {
                    eprintln!(
                        "error: unknown filter field {:?} (expected location, date, or criminal_name)",
                        f
                    );
                    return Ok(ExitCode::from(EXIT_USAGE));
                }
                Err(e) => return Err(e.into()),
            };

            if outcome.out_of_vocabulary {
                eprintln!("warning: {:?} is not in the crime-type vocabulary; no record can match", term);
            }
            for (agency, err) in &outcome.agency_errors {
                eprintln!("agency {} failed: {}", agency, err);
            }

            if json {
                for r in &outcome.results {
                    println!("{}", serde_json::to_string(r)?);
                }
            } else {
                for m in &outcome.matches {
                    eprintln!("Dot Product: {} ({}:{})", m.score, m.agency_id, m.record_id);
                }
                for r in &outcome.results {
                    println!("=====");
                    println!("Location: {}", r.location);
                    println!("Description: {}", r.description);
                    println!("Date: {}", r.date);
                    println!("Time: {}", r.time);
                    println!("Criminal Name: {}", r.criminal_name);
                }
                println!(
                    "Total rows: {} Query complete {:.3}s",
                    outcome.results.len(),
                    outcome.elapsed.as_secs_f64()
                );
            }

            if outcome.agency_errors.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(EXIT_PARTIAL))
            }
        }

        Command::Bench {
            records,
            agencies,
            term,
            reps,
            profile,
            parallelism,
            json,
            csv,
        } => {
            let profile = ParamsProfile::parse(&profile)
                .ok_or_else(|| anyhow::anyhow!("unknown params profile {:?}", profile))?;
            check_profile(profile, cli.insecure_params)?;
            let dir = tempfile::tempdir()?;
            let report = fedsearch::bench::run_bench(
                dir.path(),
                records,
                agencies,
                &term,
                cli.seed,
                profile,
                parallelism,
                reps,
            )?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
            }
            if let Some(path) = csv {
                let mut text = if path.exists() {
                    std::fs::read_to_string(&path)?
                } else {
                    fedsearch::bench::BenchReport::CSV_HEADER.to_string()
                };
                text.push_str(&report.to_csv_row());
                std::fs::write(&path, text)?;
            }
            if report.failed() {
                eprintln!("benchmark FAILED: encrypted and plaintext match sets differ");
                return Ok(ExitCode::from(EXIT_CRYPTO));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::GenFixture {
            records,
            agencies,
            out,
        } => {
            let vocab = CrimeVocabulary::load()?;
            std::fs::create_dir_all(&out)?;
            for (agency_id, recs) in fixture::generate(cli.seed, records, agencies, &vocab) {
                let path = out.join(format!("{}.jsonl", agency_id));
                std::fs::write(&path, fixture::to_jsonl(&recs))?;
                println!("wrote {} records to {}", recs.len(), path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
