//! The querying client and Decryption Authority: builds encrypted queries,
//! fans out to agency nodes, decrypts scores and matched records with
//! credentialed key access, and applies the match threshold and post-filters.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use he_core::{frame, BfvEngine, CkksEngine, HeParams, ParamsProfile, SecretKey};

use crate::codec::{self, CrimeVocabulary};
use crate::keystore::{parse_ckks_public, parse_secret, KeyStore, KeystoreError};
use crate::protocol::{Envelope, Message, PROTOCOL_VERSION};
use crate::store::EncryptedRecord;

/// The paper's match threshold on decrypted dot-product scores.
pub const DEFAULT_THRESHOLD: f64 = 0.01;

pub const FILTERABLE_FIELDS: [&str; 3] = ["location", "date", "criminal_name"];

#[derive(Debug, Clone)]
pub struct AgencyEndpoint {
    pub agency_id: String,
    pub endpoint: String,
    pub bfv_key_id: u64,
}

#[derive(Debug, Clone)]
pub struct Registry {
    pub agencies: Vec<AgencyEndpoint>,
    pub federation_ckks_key_id: u64,
}

#[derive(Debug, Error)]
pub enum AgencyError {
    #[error("connect failed: {0}")]
    ConnectFail(String),

    #[error("timed out after {0:?}")]
    Timeout(Duration),

    #[error("node error {code}: {message}")]
    Remote { code: u16, message: String },

    #[error("protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Error)]
pub enum FederatorError {
    #[error(transparent)]
    Keystore(#[from] KeystoreError),

    #[error(transparent)]
    He(#[from] he_core::HeError),

    #[error("unknown filter field {0:?} (expected location, date, or criminal_name)")]
    UnknownFilterField(String),

    #[error("registry has no agencies")]
    NoAgencies,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredMatch {
    pub agency_id: String,
    pub record_id: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub agency_id: String,
    pub record_id: u64,
    pub score: f64,
    pub crime_label: Option<String>,
    pub crime_label_multi: bool,
    pub location: String,
    pub description: String,
    pub date: String,
    pub time: String,
    pub criminal_name: String,
}

#[derive(Debug)]
pub struct QueryEnvelope {
    pub request_id: [u8; 16],
    pub params_digest: [u8; 32],
    pub ciphertext: Vec<u8>,
    /// Set when the term was outside the vocabulary (zero query vector).
    pub out_of_vocabulary: bool,
}

#[derive(Debug)]
pub struct SearchOutcome {
    pub matches: Vec<ScoredMatch>,
    pub results: Vec<ResultRecord>,
    pub agency_errors: Vec<(String, AgencyError)>,
    pub out_of_vocabulary: bool,
    pub elapsed: Duration,
}

pub struct Federator {
    pub vocab: CrimeVocabulary,
    pub registry: Registry,
    engine: CkksEngine,
    bfv: BfvEngine,
    keystore: KeyStore,
    credential: String,
    pub threshold: f64,
    pub timeout: Duration,
    federation_pk: he_core::PublicKey,
    federation_sk: SecretKey,
    digest: [u8; 32],
}

impl Federator {
    #[allow(clippy::too_many_arguments)]
    pub fn open(
        keystore_root: impl Into<std::path::PathBuf>,
        token: &str,
        credential: &str,
        registry: Registry,
        ckks_profile: ParamsProfile,
        bfv_profile: ParamsProfile,
        threshold: f64,
        timeout: Duration,
    ) -> Result<Self, FederatorError> {
        if registry.agencies.is_empty() {
            return Err(FederatorError::NoAgencies);
        }
        let engine = CkksEngine::new(HeParams::generate(ckks_profile))?;
        let bfv = BfvEngine::new(HeParams::generate(bfv_profile))?;
        let keystore = KeyStore::open(keystore_root, token, "authority")?;
        let public_bytes = keystore.fetch_public(registry.federation_ckks_key_id)?;
        let material = parse_ckks_public(&public_bytes, &engine.params, &engine.ring)?;
        let secret_bytes = keystore.fetch_secret(registry.federation_ckks_key_id, credential)?;
        let federation_sk = parse_secret(&secret_bytes, &engine.params, &engine.ring)?;
        let digest = engine.params.digest();
        Ok(Federator {
            vocab: CrimeVocabulary::load().expect("bundled vocabulary is valid"),
            registry,
            engine,
            bfv,
            keystore,
            credential: credential.to_string(),
            threshold,
            timeout,
            federation_pk: material.public,
            federation_sk,
            digest,
        })
    }

    pub fn params(&self) -> &HeParams {
        &self.engine.params
    }

    /// One-hot encode and encrypt a search term. Out-of-vocabulary terms
    /// encrypt the zero vector and are flagged so the caller can warn.
    pub fn build_query<R: Rng>(&self, term: &str, rng: &mut R) -> Result<QueryEnvelope, FederatorError> {
        let encoded = codec::encode_search_term(term, &self.vocab);
        let out_of_vocabulary = encoded.iter().all(|&v| v == 0.0);
        let ct = self.engine.encrypt(&self.federation_pk, &encoded, rng)?;
        let mut request_id = [0u8; 16];
        rng.fill(&mut request_id);
        Ok(QueryEnvelope {
            request_id,
            params_digest: self.digest,
            ciphertext: frame::write_ciphertext(&ct, &self.engine.params),
            out_of_vocabulary,
        })
    }

    /// Fan the query out to every agency concurrently. Per-agency failures
    /// become error entries; they never abort the whole dispatch.
    pub fn dispatch(
        &self,
        query: &QueryEnvelope,
    ) -> Vec<(String, Result<Vec<(u64, Vec<u8>)>, AgencyError>)> {
        let (tx, rx) = mpsc::channel();
        let mut order = Vec::new();
        thread::scope(|s| {
            for agency in &self.registry.agencies {
                order.push(agency.agency_id.clone());
                let tx = tx.clone();
                let timeout = self.timeout;
                s.spawn(move || {
                    let result = query_one(agency, query, timeout);
                    let _ = tx.send((agency.agency_id.clone(), result));
                });
            }
            drop(tx);
        });
        let mut by_id: BTreeMap<String, Result<Vec<(u64, Vec<u8>)>, AgencyError>> =
            rx.into_iter().collect();
        order
            .into_iter()
            .map(|id| {
                let r = by_id.remove(&id).unwrap_or_else(|| {
                    Err(AgencyError::Protocol("worker vanished".into()))
                });
                (id, r)
            })
            .collect()
    }

    /// Decrypt slot 0 of every returned score ciphertext, match or not.
    pub fn decrypt_all_scores(
        &self,
        responses: &[(String, Result<Vec<(u64, Vec<u8>)>, AgencyError>)],
    ) -> Vec<(String, u64, f64)> {
        let mut out = Vec::new();
        for (agency_id, response) in responses {
            let scores = match response {
                Ok(s) => s,
                Err(_) => continue,
            };
            for (record_id, blob) in scores {
                match frame::read_ciphertext(blob, &self.engine.params)
                    .and_then(|ct| self.engine.decrypt(&self.federation_sk, &ct))
                {
                    Ok(slots) => out.push((agency_id.clone(), *record_id, slots[0])),
                    Err(e) => {
                        eprintln!(
                            "undecryptable score from {} record {}: {}",
                            agency_id, record_id, e
                        );
                    }
                }
            }
        }
        out
    }

    /// Decrypt each score's slot 0 and keep strict threshold exceedances,
    /// sorted by (score desc, agency, record).
    pub fn resolve_matches(
        &self,
        responses: &[(String, Result<Vec<(u64, Vec<u8>)>, AgencyError>)],
    ) -> Vec<ScoredMatch> {
        let mut out: Vec<ScoredMatch> = self
            .decrypt_all_scores(responses)
            .into_iter()
            .filter(|(_, _, score)| *score > self.threshold)
            .map(|(agency_id, record_id, score)| ScoredMatch {
                agency_id,
                record_id,
                score,
            })
            .collect();
        out.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then_with(|| a.agency_id.cmp(&b.agency_id))
                .then_with(|| a.record_id.cmp(&b.record_id))
        });
        out
    }

    /// Fetch matched rows per agency and decrypt them with that agency's
    /// BFV secret key. Every secret fetch lands in the audit log.
    pub fn fetch_and_decrypt(
        &self,
        matches: &[ScoredMatch],
        errors: &mut Vec<(String, AgencyError)>,
    ) -> Vec<ResultRecord> {
        if matches.is_empty() {
            return Vec::new();
        }
        let mut by_agency: BTreeMap<&str, Vec<&ScoredMatch>> = BTreeMap::new();
        for m in matches {
            by_agency.entry(&m.agency_id).or_default().push(m);
        }
        let mut out = Vec::new();
        for (agency_id, ms) in by_agency {
            let agency = match self
                .registry
                .agencies
                .iter()
                .find(|a| a.agency_id == agency_id)
            {
                Some(a) => a,
                None => continue,
            };
            let ids: Vec<u64> = ms.iter().map(|m| m.record_id).collect();
            let records = match fetch_records(agency, &ids, self.timeout) {
                Ok(r) => r,
                Err(e) => {
                    errors.push((agency_id.to_string(), e));
                    continue;
                }
            };
            let sk_bytes = match self.keystore.fetch_secret(agency.bfv_key_id, &self.credential) {
                Ok(b) => b,
                Err(e) => {
                    errors.push((
                        agency_id.to_string(),
                        AgencyError::Protocol(format!("agency key unavailable: {}", e)),
                    ));
                    continue;
                }
            };
            let sk = match parse_secret(&sk_bytes, &self.bfv.params, &self.bfv.ring) {
                Ok(s) => s,
                Err(e) => {
                    errors.push((
                        agency_id.to_string(),
                        AgencyError::Protocol(format!("agency key corrupt: {}", e)),
                    ));
                    continue;
                }
            };
            for rec in &records {
                let m = ms.iter().find(|m| m.record_id == rec.id);
                let score = m.map(|m| m.score).unwrap_or(0.0);
                match self.decrypt_record(rec, &sk) {
                    Ok(mut rr) => {
                        rr.agency_id = agency_id.to_string();
                        rr.score = score;
                        out.push(rr);
                    }
                    Err(e) => {
                        errors.push((
                            agency_id.to_string(),
                            AgencyError::Protocol(format!("record {} undecodable: {}", rec.id, e)),
                        ));
                    }
                }
            }
        }
        // Deterministic assembly order regardless of fetch order.
        out.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap()
                .then_with(|| a.agency_id.cmp(&b.agency_id))
                .then_with(|| a.record_id.cmp(&b.record_id))
        });
        out
    }

    fn decrypt_record(
        &self,
        rec: &EncryptedRecord,
        bfv_sk: &SecretKey,
    ) -> Result<ResultRecord, String> {
        let field = |blob: &[u8], name: &str| -> Result<String, String> {
            let ct = frame::read_ciphertext(blob, &self.bfv.params)
                .map_err(|e| format!("{}: {}", name, e))?;
            let packed = self
                .bfv
                .decrypt(bfv_sk, &ct)
                .map_err(|e| format!("{}: {}", name, e))?;
            codec::ascii_vec_to_string(&packed[..codec::FIELD_MAX_LEN])
                .map_err(|e| format!("{}: {}", name, e))
        };
        // The crime-type literal is not stored; recover the label from the
        // decrypted searchable vector.
        let label = frame::read_ciphertext(&rec.encrypted_crime_type, &self.engine.params)
            .ok()
            .and_then(|ct| self.engine.decrypt(&self.federation_sk, &ct).ok())
            .and_then(|v| codec::crime_label_from_vector(&v, &self.vocab));
        let (crime_label, crime_label_multi) = match label {
            Some((l, _, multi)) => (Some(l), multi),
            None => (None, false),
        };
        Ok(ResultRecord {
            agency_id: String::new(),
            record_id: rec.id,
            score: 0.0,
            crime_label,
            crime_label_multi,
            location: field(&rec.location, "location")?,
            description: field(&rec.description, "description")?,
            date: field(&rec.date, "date")?,
            time: field(&rec.time, "time")?,
            criminal_name: field(&rec.criminal_name, "criminal_name")?,
        })
    }

    /// End-to-end search: build, dispatch, threshold, fetch, decrypt, filter.
    pub fn search<R: Rng>(
        &self,
        term: &str,
        filters: &BTreeMap<String, String>,
        rng: &mut R,
    ) -> Result<SearchOutcome, FederatorError> {
        for key in filters.keys() {
            if !FILTERABLE_FIELDS.contains(&key.as_str()) {
                return Err(FederatorError::UnknownFilterField(key.clone()));
            }
        }
        let started = Instant::now();
        let query = self.build_query(term, rng)?;
        let responses = self.dispatch(&query);
        let matches = self.resolve_matches(&responses);
        let mut agency_errors: Vec<(String, AgencyError)> = responses
            .into_iter()
            .filter_map(|(id, r)| r.err().map(|e| (id, e)))
            .collect();
        let results = self.fetch_and_decrypt(&matches, &mut agency_errors);
        let results = post_filter(&results, filters)?;
        Ok(SearchOutcome {
            matches,
            results,
            agency_errors,
            out_of_vocabulary: query.out_of_vocabulary,
            elapsed: started.elapsed(),
        })
    }
}

/// Keep records matching every filter by case-insensitive exact equality.
pub fn post_filter(
    results: &[ResultRecord],
    filters: &BTreeMap<String, String>,
) -> Result<Vec<ResultRecord>, FederatorError> {
    for key in filters.keys() {
        if !FILTERABLE_FIELDS.contains(&key.as_str()) {
            return Err(FederatorError::UnknownFilterField(key.clone()));
        }
    }
    Ok(results
        .iter()
        .filter(|r| {
            filters.iter().all(|(field, want)| {
                let have = match field.as_str() {
                    "location" => &r.location,
                    "date" => &r.date,
                    "criminal_name" => &r.criminal_name,
                    _ => unreachable!("validated above"),
                };
                have.eq_ignore_ascii_case(want)
            })
        })
        .cloned()
        .collect())
}

fn connect(agency: &AgencyEndpoint, timeout: Duration) -> Result<TcpStream, AgencyError> {
    let addrs: Vec<_> = agency
        .endpoint
        .to_socket_addrs()
        .map_err(|e| AgencyError::ConnectFail(e.to_string()))?
        .collect();
    let addr = addrs
        .first()
        .ok_or_else(|| AgencyError::ConnectFail("endpoint resolves to nothing".into()))?;
    let stream = TcpStream::connect_timeout(addr, timeout)
        .map_err(|e| AgencyError::ConnectFail(e.to_string()))?;
    stream.set_read_timeout(Some(timeout)).ok();
    stream.set_write_timeout(Some(timeout)).ok();
    Ok(stream)
}

fn exchange(
    agency: &AgencyEndpoint,
    request: &Envelope,
    timeout: Duration,
) -> Result<Envelope, AgencyError> {
    let mut stream = connect(agency, timeout)?;
    stream
        .write_all(&request.to_bytes())
        .map_err(|e| AgencyError::ConnectFail(e.to_string()))?;
    let reply = Envelope::read_from(&mut stream).map_err(|e| match e {
        crate::protocol::WireError::Io(ref io)
            if io.kind() == std::io::ErrorKind::WouldBlock
                || io.kind() == std::io::ErrorKind::TimedOut =>
        {
            AgencyError::Timeout(timeout)
        }
        other => AgencyError::Protocol(other.to_string()),
    })?;
    if reply.request_id != request.request_id {
        return Err(AgencyError::Protocol("request id mismatch".into()));
    }
    Ok(reply)
}

fn query_one(
    agency: &AgencyEndpoint,
    query: &QueryEnvelope,
    timeout: Duration,
) -> Result<Vec<(u64, Vec<u8>)>, AgencyError> {
    let request = Envelope {
        request_id: query.request_id,
        message: Message::Query {
            params_digest: query.params_digest,
            ciphertext: query.ciphertext.clone(),
        },
    };
    match exchange(agency, &request, timeout)?.message {
        Message::Scores { scores } => Ok(scores),
        Message::Error { code, message } => Err(AgencyError::Remote { code, message }),
        other => Err(AgencyError::Protocol(format!(
            "expected SCORES, got {:?}",
            std::mem::discriminant(&other)
        ))),
    }
}

fn fetch_records(
    agency: &AgencyEndpoint,
    ids: &[u64],
    timeout: Duration,
) -> Result<Vec<EncryptedRecord>, AgencyError> {
    let mut request_id = [0u8; 16];
    rand::thread_rng().fill(&mut request_id);
    let request = Envelope {
        request_id,
        message: Message::Fetch { ids: ids.to_vec() },
    };
    match exchange(agency, &request, timeout)?.message {
        Message::Records { records } => Ok(records),
        Message::Error { code, message } => Err(AgencyError::Remote { code, message }),
        other => Err(AgencyError::Protocol(format!(
            "expected RECORDS, got {:?}",
            std::mem::discriminant(&other)
        ))),
    }
}

/// Ping a node, returning its advertised node id.
pub fn ping(agency: &AgencyEndpoint, timeout: Duration) -> Result<String, AgencyError> {
    let mut request_id = [0u8; 16];
    rand::thread_rng().fill(&mut request_id);
    let request = Envelope {
        request_id,
        message: Message::Ping {
            version: PROTOCOL_VERSION,
            node_id: String::new(),
        },
    };
    match exchange(agency, &request, timeout)?.message {
        Message::Ping { node_id, .. } => Ok(node_id),
        Message::Error { code, message } => Err(AgencyError::Remote { code, message }),
        _ => Err(AgencyError::Protocol("expected PING reply".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rr(agency: &str, id: u64, location: &str, date: &str, name: &str) -> ResultRecord {
        ResultRecord {
            agency_id: agency.into(),
            record_id: id,
            score: 1.0,
            crime_label: None,
            crime_label_multi: false,
            location: location.into(),
            description: String::new(),
            date: date.into(),
            time: String::new(),
            criminal_name: name.into(),
        }
    }

    #[test]
    fn post_filter_is_case_insensitive_intersection() {
        let results = vec![
            rr("a", 1, "Portland", "2024-02-23", "Unknown"),
            rr("a", 2, "Detroit", "2024-02-15", "Unknown"),
            rr("b", 3, "Portland", "2024-08-22", "Unknown"),
        ];
        let mut filters = BTreeMap::new();
        filters.insert("location".to_string(), "portland".to_string());
        let filtered = post_filter(&results, &filters).unwrap();
        assert_eq!(filtered.len(), 2);
        assert!(filtered.iter().all(|r| r.location == "Portland"));

        filters.insert("date".to_string(), "2024-08-22".to_string());
        let narrowed = post_filter(&results, &filters).unwrap();
        assert_eq!(narrowed.len(), 1);
        assert_eq!(narrowed[0].record_id, 3);

        // Composition is commutative: applying the filters one at a time in
        // either order gives the same set.
        let mut f1 = BTreeMap::new();
        f1.insert("date".to_string(), "2024-08-22".to_string());
        let step1 = post_filter(&results, &f1).unwrap();
        let mut f2 = BTreeMap::new();
        f2.insert("location".to_string(), "Portland".to_string());
        let step2 = post_filter(&step1, &f2).unwrap();
        assert_eq!(step2, narrowed);
    }

    #[test]
    fn post_filter_edge_cases() {
        let results = vec![rr("a", 1, "Portland", "2024-02-23", "Unknown")];
        // Empty filter map is the identity.
        assert_eq!(post_filter(&results, &BTreeMap::new()).unwrap(), results);
        // Value matching nothing gives the empty list.
        let mut none = BTreeMap::new();
        none.insert("location".to_string(), "Gotham".to_string());
        assert!(post_filter(&results, &none).unwrap().is_empty());
        // Unknown field is a usage error.
        let mut bad = BTreeMap::new();
        bad.insert("description".to_string(), "x".to_string());
        assert!(matches!(
            post_filter(&results, &bad),
            Err(FederatorError::UnknownFilterField(_))
        ));
    }
}
