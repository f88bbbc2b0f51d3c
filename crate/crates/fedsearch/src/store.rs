//! Per-agency persistence of encrypted crime reports, plus the hybrid
//! ingestion pipeline (CKKS for the searchable vector, BFV for the at-rest
//! string fields).
//!
//! File layout (integers little-endian):
//!
//! ```text
//! "HSTR" | version u8 | agency_id_len u16 | agency_id
//!        | bfv_key_id u64 | ckks_key_id u64
//! row*:  row_len u32 | id u64 | encryption_key_id u64
//!        | 7 × (blob_len u32 | blob)
//! ```
//!
//! Blob order: crime_type, location, description, date, time,
//! criminal_name, encrypted_crime_type.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use he_core::frame;
use he_core::{BfvEngine, Ciphertext, CkksEngine, PublicKey};

use crate::codec::{self, CodecError, CrimeVocabulary, PlainRecord};

const MAGIC: &[u8; 4] = b"HSTR";
const VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not a record store: bad magic")]
    BadMagic,

    #[error("unsupported store version {0}")]
    UnsupportedVersion(u8),

    #[error("store file is truncated or corrupt: {0}")]
    Corrupt(String),

    #[error("record {0} not found")]
    NotFound(u64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Codec(#[from] CodecError),

    #[error(transparent)]
    He(#[from] he_core::HeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncryptedRecord {
    pub id: u64,
    pub encryption_key_id: u64,
    pub crime_type: Vec<u8>,
    pub location: Vec<u8>,
    pub description: Vec<u8>,
    pub date: Vec<u8>,
    pub time: Vec<u8>,
    pub criminal_name: Vec<u8>,
    pub encrypted_crime_type: Vec<u8>,
}

impl EncryptedRecord {
    pub fn blobs(&self) -> [&Vec<u8>; 7] {
        [
            &self.crime_type,
            &self.location,
            &self.description,
            &self.date,
            &self.time,
            &self.criminal_name,
            &self.encrypted_crime_type,
        ]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        body.extend_from_slice(&self.id.to_le_bytes());
        body.extend_from_slice(&self.encryption_key_id.to_le_bytes());
        for blob in self.blobs() {
            body.extend_from_slice(&(blob.len() as u32).to_le_bytes());
            body.extend_from_slice(blob);
        }
        let mut out = Vec::with_capacity(4 + body.len());
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(body: &[u8]) -> Result<Self, StoreError> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], StoreError> {
            if body.len() - *pos < n {
                return Err(StoreError::Corrupt(format!(
                    "row needs {} more bytes",
                    n - (body.len() - *pos)
                )));
            }
            let s = &body[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let id = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let encryption_key_id = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        let mut blobs: Vec<Vec<u8>> = Vec::with_capacity(7);
        for _ in 0..7 {
            let len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            blobs.push(take(&mut pos, len)?.to_vec());
        }
        if pos != body.len() {
            return Err(StoreError::Corrupt("trailing bytes in row".into()));
        }
        let mut it = blobs.into_iter();
        Ok(EncryptedRecord {
            id,
            encryption_key_id,
            crime_type: it.next().unwrap(),
            location: it.next().unwrap(),
            description: it.next().unwrap(),
            date: it.next().unwrap(),
            time: it.next().unwrap(),
            criminal_name: it.next().unwrap(),
            encrypted_crime_type: it.next().unwrap(),
        })
    }
}

pub struct AgencyStore {
    path: PathBuf,
    pub agency_id: String,
    pub bfv_key_id: u64,
    pub ckks_key_id: u64,
    records: Vec<EncryptedRecord>,
}

impl AgencyStore {
    pub fn create(
        path: impl Into<PathBuf>,
        agency_id: &str,
        bfv_key_id: u64,
        ckks_key_id: u64,
    ) -> Result<Self, StoreError> {
        let path = path.into();
        let mut header = Vec::new();
        header.extend_from_slice(MAGIC);
        header.push(VERSION);
        header.extend_from_slice(&(agency_id.len() as u16).to_le_bytes());
        header.extend_from_slice(agency_id.as_bytes());
        header.extend_from_slice(&bfv_key_id.to_le_bytes());
        header.extend_from_slice(&ckks_key_id.to_le_bytes());
        fs::write(&path, header)?;
        Ok(AgencyStore {
            path,
            agency_id: agency_id.to_string(),
            bfv_key_id,
            ckks_key_id,
            records: Vec::new(),
        })
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let path = path.into();
        let bytes = fs::read(&path)?;
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(StoreError::BadMagic);
        }
        if bytes[4] != VERSION {
            return Err(StoreError::UnsupportedVersion(bytes[4]));
        }
        let mut pos = 5usize;
        let need = |pos: usize, n: usize| -> Result<(), StoreError> {
            if bytes.len() - pos < n {
                return Err(StoreError::Corrupt("truncated header".into()));
            }
            Ok(())
        };
        need(pos, 2)?;
        let id_len = u16::from_le_bytes(bytes[pos..pos + 2].try_into().unwrap()) as usize;
        pos += 2;
        need(pos, id_len + 16)?;
        let agency_id = String::from_utf8(bytes[pos..pos + id_len].to_vec())
            .map_err(|_| StoreError::Corrupt("agency id is not UTF-8".into()))?;
        pos += id_len;
        let bfv_key_id = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
        pos += 8;
        let ckks_key_id = u64::from_le_bytes(bytes[pos..pos + 8].try_into().unwrap());
        pos += 8;

        let mut records = Vec::new();
        while pos < bytes.len() {
            if bytes.len() - pos < 4 {
                return Err(StoreError::Corrupt("truncated row length".into()));
            }
            let row_len = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            if bytes.len() - pos < row_len {
                return Err(StoreError::Corrupt("truncated row".into()));
            }
            records.push(EncryptedRecord::from_bytes(&bytes[pos..pos + row_len])?);
            pos += row_len;
        }
        Ok(AgencyStore {
            path,
            agency_id,
            bfv_key_id,
            ckks_key_id,
            records,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn append(&mut self, mut rec: EncryptedRecord) -> Result<u64, StoreError> {
        rec.id = self.records.len() as u64 + 1;
        let bytes = rec.to_bytes();
        let mut f = fs::OpenOptions::new().append(true).open(&self.path)?;
        f.write_all(&bytes)?;
        let id = rec.id;
        self.records.push(rec);
        Ok(id)
    }

    /// Hybrid-encrypt one plaintext record and persist it. The CKKS vector
    /// blob is stored in both crime_type and encrypted_crime_type; the
    /// crime-type literal is therefore only recoverable from the vector.
    #[allow(clippy::too_many_arguments)]
    pub fn ingest_record<R: Rng>(
        &mut self,
        rec: &PlainRecord,
        vocab: &CrimeVocabulary,
        bfv: &BfvEngine,
        bfv_pk: &PublicKey,
        ckks: &CkksEngine,
        federation_pk: &PublicKey,
        rng: &mut R,
    ) -> Result<u64, StoreError> {
        rec.validate_ascii()?;
        let vector = codec::vectorize_crime_type(&rec.crime_type, vocab);
        let ct = ckks.encrypt(federation_pk, &vector, rng)?;
        let ckks_blob = frame::write_ciphertext(&ct, &ckks.params);

        let mut bfv_field = |name: &'static str, text: &str| -> Result<Vec<u8>, StoreError> {
            let packed = codec::string_to_ascii_vec(text, name)?;
            let ct = bfv.encrypt(bfv_pk, &packed, rng)?;
            Ok(frame::write_ciphertext(&ct, &bfv.params))
        };

        let row = EncryptedRecord {
            id: 0, // assigned by append
            encryption_key_id: self.bfv_key_id,
            crime_type: ckks_blob.clone(),
            location: bfv_field("location", &rec.location)?,
            description: bfv_field("description", &rec.description)?,
            date: bfv_field("date", &rec.date)?,
            time: bfv_field("time", &rec.time)?,
            criminal_name: bfv_field("criminal_name", &rec.criminal_name)?,
            encrypted_crime_type: ckks_blob,
        };
        self.append(row)
    }

    /// Parse every row's searchable vector, in id order. Corrupt blobs are
    /// reported per row; the scan continues.
    pub fn scan_encrypted_vectors(
        &self,
        ckks_params: &he_core::HeParams,
    ) -> (Vec<(u64, Ciphertext)>, Vec<(u64, he_core::HeError)>) {
        let mut ok = Vec::with_capacity(self.records.len());
        let mut errors = Vec::new();
        for rec in &self.records {
            match frame::read_ciphertext(&rec.encrypted_crime_type, ckks_params) {
                Ok(ct) => ok.push((rec.id, ct)),
                Err(e) => errors.push((rec.id, e)),
            }
        }
        (ok, errors)
    }

    pub fn fetch_encrypted_fields(&self, ids: &[u64]) -> Result<Vec<EncryptedRecord>, StoreError> {
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            let rec = self
                .records
                .iter()
                .find(|r| r.id == id)
                .ok_or(StoreError::NotFound(id))?;
            out.push(rec.clone());
        }
        Ok(out)
    }

    pub fn records(&self) -> &[EncryptedRecord] {
        &self.records
    }
}
