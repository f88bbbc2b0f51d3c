//! Latency benchmark: runs the plaintext reference search and the full
//! encrypted pipeline over identical data and reports per-phase timings.
//! Also hosts the in-process deployment helper the benchmark, tests, and
//! CLI demo paths all share.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use he_core::{BfvEngine, CkksEngine, HeParams, ParamsProfile};

use crate::codec::{self, CrimeVocabulary, PlainRecord};
use crate::federator::{AgencyEndpoint, Federator, Registry, DEFAULT_THRESHOLD};
use crate::fixture;
use crate::keystore::KeyStore;
use crate::node::{self, NodeConfig, RunningNode, SearchNode};
use crate::store::AgencyStore;

#[derive(Debug, Clone)]
pub struct DeploySpec {
    pub root: PathBuf,
    pub seed: u64,
    pub records_per_agency: usize,
    pub n_agencies: usize,
    pub ckks_profile: ParamsProfile,
    pub bfv_profile: ParamsProfile,
    pub credential: String,
    pub parallelism: usize,
}

impl DeploySpec {
    pub fn new(root: impl Into<PathBuf>, records_per_agency: usize, n_agencies: usize) -> Self {
        DeploySpec {
            root: root.into(),
            seed: 42,
            records_per_agency,
            n_agencies,
            ckks_profile: ParamsProfile::CkksDefault,
            bfv_profile: ParamsProfile::BfvDefault,
            credential: "authority-credential".to_string(),
            parallelism: 1,
        }
    }
}

/// A full federation running in-process: keystore, per-agency stores, and
/// one listening node per agency.
pub struct Deployment {
    pub spec: DeploySpec,
    pub fixture: Vec<(String, Vec<PlainRecord>)>,
    pub federation_key_id: u64,
    pub bfv_key_ids: Vec<u64>,
    pub store_paths: Vec<PathBuf>,
    pub keystore_root: PathBuf,
    /// Wall-clock seconds spent hybrid-encrypting and storing all records.
    pub ingest_s: f64,
    nodes: Vec<Option<RunningNode>>,
}

impl Deployment {
    pub fn start(spec: DeploySpec) -> anyhow::Result<Deployment> {
        let vocab = CrimeVocabulary::load()?;
        let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
        let ckks = CkksEngine::new(HeParams::generate(spec.ckks_profile))?;
        let bfv = BfvEngine::new(HeParams::generate(spec.bfv_profile))?;

        let keystore_root = spec.root.join("keystore");
        std::fs::create_dir_all(&keystore_root)?;
        let ks = KeyStore::open(&keystore_root, &spec.credential, "provisioner")?;
        let federation_key_id =
            ks.create_federation_ckks_keys(&ckks, spec.ckks_profile.name(), &mut rng, false)?;
        let federation_public = ks.fetch_public(federation_key_id)?;
        let material =
            crate::keystore::parse_ckks_public(&federation_public, &ckks.params, &ckks.ring)?;

        let fixture = fixture::generate(spec.seed, spec.records_per_agency, spec.n_agencies, &vocab);
        let stores_dir = spec.root.join("stores");
        std::fs::create_dir_all(&stores_dir)?;

        let mut bfv_key_ids = Vec::new();
        let mut store_paths = Vec::new();
        let ingest_started = Instant::now();
        for (agency_id, records) in &fixture {
            let bfv_key_id =
                ks.register_agency_bfv_keys(agency_id, &bfv, spec.bfv_profile.name(), &mut rng, false)?;
            let bfv_public = ks.fetch_public(bfv_key_id)?;
            let bfv_pk = he_core::frame::read_public_key(&bfv_public, &bfv.params, &bfv.ring)?;
            let store_path = stores_dir.join(format!("{}.hstr", agency_id));
            let mut store =
                AgencyStore::create(&store_path, agency_id, bfv_key_id, federation_key_id)?;
            for rec in records {
                store.ingest_record(rec, &vocab, &bfv, &bfv_pk, &ckks, &material.public, &mut rng)?;
            }
            bfv_key_ids.push(bfv_key_id);
            store_paths.push(store_path);
        }
        let ingest_s = ingest_started.elapsed().as_secs_f64();

        let mut nodes = Vec::new();
        for (i, (agency_id, _)) in fixture.iter().enumerate() {
            let node = SearchNode::load(&NodeConfig {
                agency_id: agency_id.clone(),
                store_path: store_paths[i].clone(),
                keystore_root: keystore_root.clone(),
                federation_key_id,
                profile: spec.ckks_profile,
                parallelism: spec.parallelism,
            })?;
            nodes.push(Some(node::spawn(node, "127.0.0.1:0")?));
        }

        Ok(Deployment {
            spec,
            fixture,
            federation_key_id,
            bfv_key_ids,
            store_paths,
            keystore_root,
            ingest_s,
            nodes,
        })
    }

    pub fn registry(&self) -> Registry {
        Registry {
            agencies: self
                .fixture
                .iter()
                .enumerate()
                .map(|(i, (agency_id, _))| AgencyEndpoint {
                    agency_id: agency_id.clone(),
                    endpoint: match &self.nodes[i] {
                        Some(n) => n.addr.to_string(),
                        // A stopped node keeps its (now dead) endpoint.
                        None => "127.0.0.1:1".to_string(),
                    },
                    bfv_key_id: self.bfv_key_ids[i],
                })
                .collect(),
            federation_ckks_key_id: self.federation_key_id,
        }
    }

    pub fn federator(&self, timeout: Duration) -> anyhow::Result<Federator> {
        Ok(Federator::open(
            &self.keystore_root,
            &self.spec.credential,
            &self.spec.credential,
            self.registry(),
            self.spec.ckks_profile,
            self.spec.bfv_profile,
            DEFAULT_THRESHOLD,
            timeout,
        )?)
    }

    /// Take agency `i` offline; its endpoint stays in the registry so
    /// queries exercise the failure path.
    pub fn stop_node(&mut self, i: usize) {
        if let Some(n) = self.nodes[i].take() {
            n.stop();
        }
    }

    /// Plaintext reference search over the in-memory fixture rows. Record
    /// ids follow ingest order: row j of an agency is id j+1.
    pub fn reference_search(&self, term: &str, vocab: &CrimeVocabulary) -> Vec<(String, u64)> {
        let mut out = Vec::new();
        for (agency_id, records) in &self.fixture {
            for (j, rec) in records.iter().enumerate() {
                if codec::reference_match(term, &rec.crime_type, vocab) {
                    out.push((agency_id.clone(), j as u64 + 1));
                }
            }
        }
        out
    }
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub records_per_agency: usize,
    pub n_agencies: usize,
    pub params_profile: String,
    pub parallelism: usize,
    pub reps: usize,
    pub term: String,
    pub plaintext_query_s: f64,
    pub encrypted_query_s: f64,
    pub ingest_s: f64,
    pub decrypt_s: f64,
    pub overhead_ratio: f64,
    pub matches_plain: usize,
    pub matches_encrypted: usize,
    pub match_sets_equal: bool,
    /// (agency, id) pairs present on one side only; empty unless FAILED.
    pub symmetric_difference: Vec<String>,
}

impl BenchReport {
    pub fn failed(&self) -> bool {
        !self.match_sets_equal
    }

    pub fn to_table(&self) -> String {
        let status = if self.match_sets_equal { "OK" } else { "FAILED" };
        let mut out = format!(
            "benchmark: {} records x {} agencies, profile {}, {} reps, term {:?}\n\
             -----------------------------------------------------------------\n\
             ingest            {:>12.4} s\n\
             plaintext query   {:>12.4} s\n\
             encrypted query   {:>12.4} s\n\
             record decryption {:>12.4} s\n\
             overhead ratio    {:>12.1} x\n\
             matches           plain {} / encrypted {}   [{}]\n",
            self.records_per_agency,
            self.n_agencies,
            self.params_profile,
            self.reps,
            self.term,
            self.ingest_s,
            self.plaintext_query_s,
            self.encrypted_query_s,
            self.decrypt_s,
            self.overhead_ratio,
            self.matches_plain,
            self.matches_encrypted,
            status,
        );
        if !self.symmetric_difference.is_empty() {
            out.push_str("mismatched pairs:\n");
            for p in &self.symmetric_difference {
                out.push_str(&format!("  {}\n", p));
            }
        }
        out
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.3},{},{},{}\n",
            self.records_per_agency,
            self.n_agencies,
            self.params_profile,
            self.parallelism,
            self.reps,
            self.plaintext_query_s,
            self.encrypted_query_s,
            self.ingest_s,
            self.decrypt_s,
            self.overhead_ratio,
            self.matches_plain,
            self.matches_encrypted,
            self.match_sets_equal,
        )
    }

    pub const CSV_HEADER: &'static str = "records_per_agency,n_agencies,params_profile,parallelism,reps,plaintext_query_s,encrypted_query_s,ingest_s,decrypt_s,overhead_ratio,matches_plain,matches_encrypted,match_sets_equal\n";
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    match xs.len() {
        0 => 0.0,
        n if n % 2 == 1 => xs[n / 2],
        n => (xs[n / 2 - 1] + xs[n / 2]) / 2.0,
    }
}

/// Run both pipelines on identical data under `root`. Timings are medians
/// of `reps` repetitions on a monotonic clock; a match-set mismatch marks
/// the report FAILED with the symmetric difference listed.
pub fn run_bench(
    root: &Path,
    records_per_agency: usize,
    n_agencies: usize,
    term: &str,
    seed: u64,
    profile: ParamsProfile,
    parallelism: usize,
    reps: usize,
) -> anyhow::Result<BenchReport> {
    let reps = reps.max(3);
    let mut spec = DeploySpec::new(root, records_per_agency, n_agencies);
    spec.seed = seed;
    spec.ckks_profile = profile;
    spec.parallelism = parallelism;
    let deployment = Deployment::start(spec)?;
    let vocab = CrimeVocabulary::load()?;
    let federator = deployment.federator(Duration::from_secs(600))?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x42454e4348); // "BENCH"

    let mut plain_times = Vec::with_capacity(reps);
    let mut plain_set: Vec<(String, u64)> = Vec::new();
    for _ in 0..reps {
        let t = Instant::now();
        plain_set = deployment.reference_search(term, &vocab);
        plain_times.push(t.elapsed().as_secs_f64());
    }
    plain_set.sort();

    let mut enc_times = Vec::with_capacity(reps);
    let mut dec_times = Vec::with_capacity(reps);
    let mut enc_set: Vec<(String, u64)> = Vec::new();
    for _ in 0..reps {
        let t = Instant::now();
        let query = federator.build_query(term, &mut rng)?;
        let responses = federator.dispatch(&query);
        let matches = federator.resolve_matches(&responses);
        enc_times.push(t.elapsed().as_secs_f64());
        for (agency, r) in &responses {
            if let Err(e) = r {
                anyhow::bail!("agency {} failed during bench: {}", agency, e);
            }
        }
        let t = Instant::now();
        let mut errors = Vec::new();
        let results = federator.fetch_and_decrypt(&matches, &mut errors);
        dec_times.push(t.elapsed().as_secs_f64());
        if let Some((agency, e)) = errors.first() {
            anyhow::bail!("decryption failed for {}: {}", agency, e);
        }
        debug_assert_eq!(results.len(), matches.len());
        enc_set = matches
            .iter()
            .map(|m| (m.agency_id.clone(), m.record_id))
            .collect();
    }
    enc_set.sort();

    let symmetric_difference: Vec<String> = plain_set
        .iter()
        .filter(|p| !enc_set.contains(p))
        .map(|(a, id)| format!("plain-only {}:{}", a, id))
        .chain(
            enc_set
                .iter()
                .filter(|p| !plain_set.contains(p))
                .map(|(a, id)| format!("encrypted-only {}:{}", a, id)),
        )
        .collect();

    let plaintext_query_s = median(plain_times);
    let encrypted_query_s = median(enc_times);
    Ok(BenchReport {
        records_per_agency,
        n_agencies,
        params_profile: profile.name().to_string(),
        parallelism,
        reps,
        term: term.to_string(),
        plaintext_query_s,
        encrypted_query_s,
        ingest_s: deployment.ingest_s,
        decrypt_s: median(dec_times),
        overhead_ratio: if plaintext_query_s > 0.0 {
            encrypted_query_s / plaintext_query_s
        } else {
            f64::INFINITY
        },
        matches_plain: plain_set.len(),
        matches_encrypted: enc_set.len(),
        match_sets_equal: symmetric_difference.is_empty(),
        symmetric_difference,
    })
}
