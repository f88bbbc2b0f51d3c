//! Centralized key management: key bundles on disk keyed by integer id,
//! public material freely readable, secret material gated behind a bearer
//! token with every access audited.
//!
//! Layout: `<root>/keys/<key_id>/{public.hef, secret.hef, meta.json}` plus
//! an append-only `<root>/audit.jsonl`. `public.hef` holds the public-key
//! frame followed by any evaluation-key frames (relin, galois),
//! concatenated; `secret.hef` is a single secret-key frame.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use he_core::frame::{self, FrameKind};
use he_core::{BfvEngine, CkksEngine, GaloisKeys, HeParams, KsKey, PublicKey, Scheme, SecretKey};

#[derive(Debug, Error)]
pub enum KeystoreError {
    #[error("key {0} not found")]
    NotFound(u64),

    #[error("access denied: invalid credential for secret key {0}")]
    AccessDenied(u64),

    #[error("key {0} already exists (use force to overwrite)")]
    AlreadyExists(u64),

    #[error("key {key_id} has no {part} material")]
    MissingPart { key_id: u64, part: &'static str },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("corrupt metadata for key {0}: {1}")]
    BadMeta(u64, String),

    #[error(transparent)]
    He(#[from] he_core::HeError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeyMeta {
    pub key_id: u64,
    pub agency_id: String,
    pub scheme: String,
    pub profile: String,
    pub created_at_ms: u64,
    pub has_secret: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp_ms: u64,
    pub key_id: u64,
    pub requester: String,
    pub action: String,
}

pub struct KeyStore {
    root: PathBuf,
    /// The authority's bearer token; presented credentials must match.
    token: String,
    /// Identity recorded in audit entries.
    requester: String,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap()
        .as_millis() as u64
}

impl KeyStore {
    pub fn open(root: impl Into<PathBuf>, token: &str, requester: &str) -> Result<Self, KeystoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("keys"))?;
        Ok(KeyStore {
            root,
            token: token.to_string(),
            requester: requester.to_string(),
        })
    }

    fn key_dir(&self, key_id: u64) -> PathBuf {
        self.root.join("keys").join(key_id.to_string())
    }

    fn next_key_id(&self) -> Result<u64, KeystoreError> {
        let mut max = 0u64;
        for entry in fs::read_dir(self.root.join("keys"))? {
            if let Ok(id) = entry?.file_name().to_string_lossy().parse::<u64>() {
                max = max.max(id);
            }
        }
        Ok(max + 1)
    }

    fn audit(&self, key_id: u64, action: &str) -> Result<(), KeystoreError> {
        let entry = AuditEntry {
            timestamp_ms: now_ms(),
            key_id,
            requester: self.requester.clone(),
            action: action.to_string(),
        };
        let mut line = serde_json::to_string(&entry).expect("audit entry serializes");
        line.push('\n');
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.root.join("audit.jsonl"))?;
        // One write call per entry keeps appends atomic at line granularity.
        f.write_all(line.as_bytes())?;
        Ok(())
    }

    pub fn read_audit_log(&self) -> Result<Vec<AuditEntry>, KeystoreError> {
        let path = self.root.join("audit.jsonl");
        if !path.exists() {
            return Ok(Vec::new());
        }
        let text = fs::read_to_string(path)?;
        let mut out = Vec::new();
        for line in text.lines() {
            out.push(
                serde_json::from_str(line)
                    .map_err(|e| KeystoreError::BadMeta(0, e.to_string()))?,
            );
        }
        Ok(out)
    }

    fn store_bundle(
        &self,
        agency_id: &str,
        profile_name: &str,
        public_frames: Vec<u8>,
        secret_frame: Vec<u8>,
        scheme: Scheme,
        force: bool,
        key_id: Option<u64>,
    ) -> Result<u64, KeystoreError> {
        let key_id = match key_id {
            Some(id) => id,
            None => self.next_key_id()?,
        };
        let dir = self.key_dir(key_id);
        if dir.exists() && !force {
            return Err(KeystoreError::AlreadyExists(key_id));
        }
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("public.hef"), &public_frames)?;
        fs::write(dir.join("secret.hef"), &secret_frame)?;
        let meta = KeyMeta {
            key_id,
            agency_id: agency_id.to_string(),
            scheme: match scheme {
                Scheme::Ckks => "ckks".into(),
                Scheme::Bfv => "bfv".into(),
            },
            profile: profile_name.to_string(),
            created_at_ms: now_ms(),
            has_secret: true,
        };
        fs::write(
            dir.join("meta.json"),
            serde_json::to_vec_pretty(&meta).expect("meta serializes"),
        )?;
        self.audit(key_id, "create")?;
        Ok(key_id)
    }

    /// Generate the single federation-wide CKKS bundle (public + relin +
    /// galois in `public.hef`, secret in `secret.hef`).
    pub fn create_federation_ckks_keys<R: Rng>(
        &self,
        engine: &CkksEngine,
        profile_name: &str,
        rng: &mut R,
        force: bool,
    ) -> Result<u64, KeystoreError> {
        let bundle = engine.keygen(rng);
        let mut public = frame::write_public_key(&bundle.public, &engine.params, &engine.ring);
        public.extend(frame::write_relin_key(
            bundle.relin.as_ref().expect("ckks keygen emits relin"),
            &engine.params,
            &engine.ring,
        ));
        public.extend(frame::write_galois_keys(
            bundle.galois.as_ref().expect("ckks keygen emits galois"),
            &engine.params,
            &engine.ring,
        ));
        let secret = frame::write_secret_key(&bundle.secret, &engine.params, &engine.ring);
        self.store_bundle("federation", profile_name, public, secret, Scheme::Ckks, force, None)
    }

    /// Generate a per-agency BFV bundle for at-rest field encryption.
    pub fn register_agency_bfv_keys<R: Rng>(
        &self,
        agency_id: &str,
        engine: &BfvEngine,
        profile_name: &str,
        rng: &mut R,
        force: bool,
    ) -> Result<u64, KeystoreError> {
        let bundle = engine.keygen(rng);
        let public = frame::write_public_key(&bundle.public, &engine.params, &engine.ring);
        let secret = frame::write_secret_key(&bundle.secret, &engine.params, &engine.ring);
        self.store_bundle(agency_id, profile_name, public, secret, Scheme::Bfv, force, None)
    }

    pub fn meta(&self, key_id: u64) -> Result<KeyMeta, KeystoreError> {
        let path = self.key_dir(key_id).join("meta.json");
        if !path.exists() {
            return Err(KeystoreError::NotFound(key_id));
        }
        serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| KeystoreError::BadMeta(key_id, e.to_string()))
    }

    /// Raw public material (one or more concatenated frames), byte-identical
    /// to what was stored.
    pub fn fetch_public(&self, key_id: u64) -> Result<Vec<u8>, KeystoreError> {
        let path = self.key_dir(key_id).join("public.hef");
        if !path.exists() {
            return Err(KeystoreError::NotFound(key_id));
        }
        let bytes = fs::read(path)?;
        self.audit(key_id, "fetch_public")?;
        Ok(bytes)
    }

    /// The single choke point for secret material: credential check first,
    /// audit entry on success.
    pub fn fetch_secret(&self, key_id: u64, credential: &str) -> Result<Vec<u8>, KeystoreError> {
        if credential != self.token {
            return Err(KeystoreError::AccessDenied(key_id));
        }
        let path = self.key_dir(key_id).join("secret.hef");
        if !path.parent().unwrap().exists() {
            return Err(KeystoreError::NotFound(key_id));
        }
        if !path.exists() {
            return Err(KeystoreError::MissingPart {
                key_id,
                part: "secret",
            });
        }
        let bytes = fs::read(path)?;
        self.audit(key_id, "fetch_secret")?;
        Ok(bytes)
    }
}

/// Parsed public material for a federation CKKS key.
pub struct CkksPublicMaterial {
    pub public: PublicKey,
    pub relin: KsKey,
    pub galois: GaloisKeys,
}

/// Split a concatenated public.hef into its frames and parse them.
pub fn parse_ckks_public(
    bytes: &[u8],
    params: &HeParams,
    ring: &he_core::ring::RingContext,
) -> Result<CkksPublicMaterial, he_core::HeError> {
    let mut public = None;
    let mut relin = None;
    let mut galois = None;
    let mut rest = bytes;
    while !rest.is_empty() {
        let len = frame::frame_len(rest)?;
        let (head, tail) = rest.split_at(len);
        match frame::peek_kind(head)? {
            FrameKind::PublicKey => public = Some(frame::read_public_key(head, params, ring)?),
            FrameKind::RelinKey => relin = Some(frame::read_relin_key(head, params, ring)?),
            FrameKind::GaloisKeys => galois = Some(frame::read_galois_keys(head, params, ring)?),
            other => {
                return Err(he_core::FrameError::WrongKind {
                    expected: "public material",
                    got: other.name(),
                }
                .into())
            }
        }
        rest = tail;
    }
    Ok(CkksPublicMaterial {
        public: public.ok_or(he_core::HeError::MissingKeyComponent("public"))?,
        relin: relin.ok_or(he_core::HeError::MissingKeyComponent("relin"))?,
        galois: galois.ok_or(he_core::HeError::MissingKeyComponent("galois"))?,
    })
}

/// Parse a secret.hef blob.
pub fn parse_secret(
    bytes: &[u8],
    params: &HeParams,
    ring: &he_core::ring::RingContext,
) -> Result<SecretKey, he_core::HeError> {
    frame::read_secret_key(bytes, params, ring)
}
