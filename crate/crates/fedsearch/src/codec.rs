//! Vocabulary handling and all plaintext <-> vector encodings.
//!
//! The crime-type vocabulary is the slot-index contract shared by every
//! encrypted vector in the federation: slot i always means entry i.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Bundled vocabulary, one entry per line, order significant.
const VOCAB_DATA: &str = include_str!("../data/crime_types.txt");
const VOCAB_DIGEST: &str = include_str!("../data/crime_types.txt.sha256");

pub const VOCAB_SIZE: usize = 72;

/// Fixed packed length for every BFV-encrypted string field.
pub const FIELD_MAX_LEN: usize = 30;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("vocabulary file digest mismatch: expected {expected}, got {got}")]
    VocabDigest { expected: String, got: String },

    #[error("vocabulary has {0} entries, expected {}", VOCAB_SIZE)]
    VocabSize(usize),

    #[error("field {field} has non-ASCII character at offset {offset}")]
    NonAscii { field: &'static str, offset: usize },

    #[error("field {field} contains an embedded NUL")]
    EmbeddedNul { field: &'static str },

    #[error("packed value {0} is not ASCII (>= 128)")]
    BadPackedValue(u64),
}

pub struct CrimeVocabulary {
    entries: Vec<String>,
    normalized: Vec<String>,
}

impl CrimeVocabulary {
    /// Load the bundled vocabulary, verifying the sidecar digest.
    pub fn load() -> Result<Self, CodecError> {
        let got = hex::encode(Sha256::digest(VOCAB_DATA.as_bytes()));
        let expected = VOCAB_DIGEST.trim();
        if got != expected {
            return Err(CodecError::VocabDigest {
                expected: expected.to_string(),
                got,
            });
        }
        let entries: Vec<String> = VOCAB_DATA.lines().map(|l| l.to_string()).collect();
        if entries.len() != VOCAB_SIZE {
            return Err(CodecError::VocabSize(entries.len()));
        }
        let normalized = entries.iter().map(|e| e.to_lowercase()).collect();
        Ok(CrimeVocabulary {
            entries,
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn entry(&self, i: usize) -> &str {
        &self.entries[i]
    }
}

/// One plaintext crime report, pre-encryption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlainRecord {
    pub crime_type: String,
    pub location: String,
    pub description: String,
    pub date: String,
    pub time: String,
    pub criminal_name: String,
}

impl PlainRecord {
    pub fn fields(&self) -> [(&'static str, &str); 6] {
        [
            ("crime_type", &self.crime_type),
            ("location", &self.location),
            ("description", &self.description),
            ("date", &self.date),
            ("time", &self.time),
            ("criminal_name", &self.criminal_name),
        ]
    }

    /// Ingestion normalization check: every field must be ASCII without
    /// embedded NUL (NUL is the padding sentinel).
    pub fn validate_ascii(&self) -> Result<(), CodecError> {
        for (name, value) in self.fields() {
            if let Some(offset) = value.bytes().position(|b| b >= 128) {
                return Err(CodecError::NonAscii {
                    field: name,
                    offset,
                });
            }
            if value.bytes().any(|b| b == 0) {
                return Err(CodecError::EmbeddedNul { field: name });
            }
        }
        Ok(())
    }
}

/// One-hot query encoding: exact case-insensitive equality per entry. An
/// unknown term yields the zero vector; the caller decides whether to warn.
pub fn encode_search_term(term: &str, vocab: &CrimeVocabulary) -> Vec<f64> {
    let needle = term.to_lowercase();
    vocab
        .normalized
        .iter()
        .map(|e| if *e == needle { 1.0 } else { 0.0 })
        .collect()
}

/// Record vectorization: slot i set iff entry i is a case-insensitive
/// substring of the crime type. Deliberately wider than the query rule, so
/// a "Fraud" query also hits "Credit Card Fraud" records.
pub fn vectorize_crime_type(crime_type: &str, vocab: &CrimeVocabulary) -> Vec<f64> {
    let haystack = crime_type.to_lowercase();
    vocab
        .normalized
        .iter()
        .map(|e| if haystack.contains(e.as_str()) { 1.0 } else { 0.0 })
        .collect()
}

/// Plaintext reference search rule, in pure string logic: the term names a
/// vocabulary entry exactly (case-insensitive) and that entry occurs within
/// the record's crime type. The oracle the encrypted pipeline must equal.
pub fn reference_match(term: &str, crime_type: &str, vocab: &CrimeVocabulary) -> bool {
    let needle = term.to_lowercase();
    vocab.normalized.iter().any(|e| *e == needle)
        && crime_type.to_lowercase().contains(&needle)
}

/// Pack the first 30 characters as ASCII code points, zero-padded.
pub fn string_to_ascii_vec(text: &str, field: &'static str) -> Result<Vec<u64>, CodecError> {
    if let Some(offset) = text.bytes().position(|b| b >= 128) {
        return Err(CodecError::NonAscii { field, offset });
    }
    if text.bytes().any(|b| b == 0) {
        return Err(CodecError::EmbeddedNul { field });
    }
    let mut out: Vec<u64> = text.bytes().take(FIELD_MAX_LEN).map(u64::from).collect();
    out.resize(FIELD_MAX_LEN, 0);
    Ok(out)
}

/// Inverse of `string_to_ascii_vec`: characters up to the first zero.
pub fn ascii_vec_to_string(vec: &[u64]) -> Result<String, CodecError> {
    let mut out = String::new();
    for &v in vec.iter().take(FIELD_MAX_LEN) {
        if v == 0 {
            break;
        }
        if v >= 128 {
            return Err(CodecError::BadPackedValue(v));
        }
        out.push(v as u8 as char);
    }
    Ok(out)
}

/// Recover a crime label from a decrypted (noisy) vector: binarize at 0.5;
/// one hit gives the label, several give the lowest-index label with a
/// multi flag, none gives nothing.
pub fn crime_label_from_vector(
    vec: &[f64],
    vocab: &CrimeVocabulary,
) -> Option<(String, f64, bool)> {
    let set: Vec<usize> = vec
        .iter()
        .take(vocab.len())
        .enumerate()
        .filter(|(_, &v)| v > 0.5)
        .map(|(i, _)| i)
        .collect();
    match set.as_slice() {
        [] => None,
        [i] => Some((vocab.entry(*i).to_string(), vec[*i], false)),
        [i, ..] => Some((vocab.entry(*i).to_string(), vec[*i], true)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> CrimeVocabulary {
        CrimeVocabulary::load().unwrap()
    }

    #[test]
    fn vocabulary_shape() {
        let v = vocab();
        assert_eq!(v.len(), 72);
        assert_eq!(v.entry(0), "Identity Theft");
    }

    #[test]
    fn encode_search_term_is_one_hot_equality() {
        let v = vocab();
        let enc = encode_search_term("Identity Theft", &v);
        assert_eq!(enc[0], 1.0);
        assert_eq!(enc.iter().sum::<f64>(), 1.0);
        // Case-insensitive.
        assert_eq!(encode_search_term("identity theft", &v), enc);
        // Unknown terms encode to zero.
        assert!(encode_search_term("Jaywalking", &v).iter().all(|&x| x == 0.0));
        // Equality, not containment: "Fraud" must not hit "Credit Card Fraud".
        let fraud = encode_search_term("Fraud", &v);
        assert_eq!(fraud.iter().sum::<f64>(), 1.0);
        let fraud_idx = v.entries().iter().position(|e| e == "Fraud").unwrap();
        assert_eq!(fraud[fraud_idx], 1.0);
    }

    #[test]
    fn encode_search_term_weight_is_zero_or_one_for_any_term() {
        let v = vocab();
        for term in v.entries().to_vec() {
            let w: f64 = encode_search_term(&term, &v).iter().sum();
            assert_eq!(w, 1.0, "term {:?}", term);
        }
        for term in ["", "x", "theft", "IDENTITY  THEFT"] {
            let w: f64 = encode_search_term(term, &v).iter().sum();
            assert_eq!(w, 0.0, "term {:?}", term);
        }
    }

    #[test]
    fn vectorize_uses_substring_containment() {
        let v = vocab();
        let vec = vectorize_crime_type("Credit Card Fraud", &v);
        let ccf = v.entries().iter().position(|e| e == "Credit Card Fraud").unwrap();
        let fraud = v.entries().iter().position(|e| e == "Fraud").unwrap();
        assert_eq!(vec[ccf], 1.0);
        assert_eq!(vec[fraud], 1.0);
        assert_eq!(vec.iter().sum::<f64>(), 2.0);

        let single = vectorize_crime_type("Burglary", &v);
        assert_eq!(single.iter().sum::<f64>(), 1.0);

        assert!(vectorize_crime_type("", &v).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vectorize_covers_every_query_hit() {
        // Containment implies the equality hit: for every entry e,
        // vectorize(e) has a 1 wherever encode(e) does.
        let v = vocab();
        for e in v.entries().to_vec() {
            let q = encode_search_term(&e, &v);
            let c = vectorize_crime_type(&e, &v);
            for i in 0..72 {
                assert!(c[i] >= q[i], "entry {:?} slot {}", e, i);
            }
        }
    }

    #[test]
    fn dot_product_semantics_over_all_pairs() {
        // <encode(q), vectorize(c)> >= 1 iff q is an entry and a substring
        // of c, brute-forced over all 72x72 pairs.
        let v = vocab();
        for q in v.entries().to_vec() {
            let qv = encode_search_term(&q, &v);
            for c in v.entries().to_vec() {
                let cv = vectorize_crime_type(&c, &v);
                let dot: f64 = qv.iter().zip(&cv).map(|(a, b)| a * b).sum();
                let expect = c.to_lowercase().contains(&q.to_lowercase());
                assert_eq!(dot >= 1.0, expect, "q={:?} c={:?} dot={}", q, c, dot);
            }
        }
    }

    #[test]
    fn ascii_packing_truncates_at_thirty() {
        let long = "Bank account compromised through phishing email";
        assert_eq!(long.len(), 47);
        let packed = string_to_ascii_vec(long, "description").unwrap();
        assert_eq!(packed.len(), 30);
        assert_eq!(
            ascii_vec_to_string(&packed).unwrap(),
            "Bank account compromised throu"
        );

        let short = string_to_ascii_vec("Portland", "location").unwrap();
        assert_eq!(&short[..8], &[80, 111, 114, 116, 108, 97, 110, 100]);
        assert!(short[8..].iter().all(|&x| x == 0));
        assert_eq!(ascii_vec_to_string(&short).unwrap(), "Portland");

        let empty = string_to_ascii_vec("", "time").unwrap();
        assert_eq!(empty, vec![0u64; 30]);
        assert_eq!(ascii_vec_to_string(&empty).unwrap(), "");
    }

    #[test]
    fn ascii_packing_rejects_bad_input() {
        assert!(matches!(
            string_to_ascii_vec("café", "location"),
            Err(CodecError::NonAscii { field: "location", offset: 3 })
        ));
        assert!(matches!(
            string_to_ascii_vec("a\0b", "time"),
            Err(CodecError::EmbeddedNul { .. })
        ));
        assert!(matches!(
            ascii_vec_to_string(&[200]),
            Err(CodecError::BadPackedValue(200))
        ));
    }

    #[test]
    fn ascii_roundtrip_for_short_strings() {
        for s in ["Unknown", "2024-02-23", "14:35", "Santa Ana", "x"] {
            let packed = string_to_ascii_vec(s, "f").unwrap();
            assert_eq!(ascii_vec_to_string(&packed).unwrap(), s);
        }
    }

    #[test]
    fn crime_label_recovery() {
        let v = vocab();
        // Noisy one-hot at index 0.
        let mut noisy = vec![1e-4; 72];
        noisy[0] = 1.0001;
        let (label, score, multi) = crime_label_from_vector(&noisy, &v).unwrap();
        assert_eq!(label, "Identity Theft");
        assert!((score - 1.0).abs() < 1e-3);
        assert!(!multi);

        // All near zero: absent.
        assert!(crime_label_from_vector(&vec![1e-4; 72], &v).is_none());

        // Multi-hot: lowest index wins, flagged.
        let multi_vec = vectorize_crime_type("Credit Card Fraud", &v);
        let (label, _, multi) = crime_label_from_vector(&multi_vec, &v).unwrap();
        let fraud_idx = v.entries().iter().position(|e| e == "Fraud").unwrap();
        let ccf_idx = v.entries().iter().position(|e| e == "Credit Card Fraud").unwrap();
        assert_eq!(label, v.entry(fraud_idx.min(ccf_idx)));
        assert!(multi);
    }

    #[test]
    fn record_ascii_validation() {
        let mut rec = PlainRecord {
            crime_type: "Fraud".into(),
            location: "Portland".into(),
            description: "ok".into(),
            date: "2024-01-01".into(),
            time: "12:00".into(),
            criminal_name: "Unknown".into(),
        };
        assert!(rec.validate_ascii().is_ok());
        rec.criminal_name = "Zoë".into();
        assert!(matches!(
            rec.validate_ascii(),
            Err(CodecError::NonAscii { field: "criminal_name", .. })
        ));
    }
}
