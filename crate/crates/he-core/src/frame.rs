//! The on-disk / on-wire frame for ciphertexts and keys.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "HEF1" | version u8 | scheme u8 | kind u8 | params_digest [u8;32]
//!        | level u16 | scale f64 | payload_len u64 | payload
//! ```
//!
//! Payloads hold coefficient-form polynomials: residue rows concatenated in
//! chain order, n u64 words per row.
//!
//! - ciphertext: parts u8 | primes u8 | parts × primes rows
//! - public key: parts u8 (=2) | primes u8 (data chain) | rows
//! - secret key: parts u8 (=1) | primes u8 (full chain) | rows
//! - relin key:  digits u8 | primes u8 (full chain) | digits × 2 polys
//! - galois:     count u8 | count × (step u64 | digits u8 | primes u8 | pairs)

use std::collections::BTreeMap;

use crate::cipher::Ciphertext;
use crate::error::{FrameError, Result};
use crate::keys::{GaloisKeys, KsKey, PublicKey, SecretKey};
use crate::params::{HeParams, Scheme};
use crate::ring::{Poly, RingContext};

pub const MAGIC: [u8; 4] = *b"HEF1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 1 + 1 + 32 + 2 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    Ciphertext,
    PublicKey,
    SecretKey,
    RelinKey,
    GaloisKeys,
}

impl FrameKind {
    pub fn as_u8(self) -> u8 {
        match self {
            FrameKind::Ciphertext => 1,
            FrameKind::PublicKey => 2,
            FrameKind::SecretKey => 3,
            FrameKind::RelinKey => 4,
            FrameKind::GaloisKeys => 5,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(FrameKind::Ciphertext),
            2 => Some(FrameKind::PublicKey),
            3 => Some(FrameKind::SecretKey),
            4 => Some(FrameKind::RelinKey),
            5 => Some(FrameKind::GaloisKeys),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameKind::Ciphertext => "ciphertext",
            FrameKind::PublicKey => "public key",
            FrameKind::SecretKey => "secret key",
            FrameKind::RelinKey => "relinearization key",
            FrameKind::GaloisKeys => "galois keys",
        }
    }
}

fn header(params: &HeParams, kind: FrameKind, level: u16, scale: f64, payload_len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload_len);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(params.scheme.as_u8());
    out.push(kind.as_u8());
    out.extend_from_slice(&params.digest());
    out.extend_from_slice(&level.to_le_bytes());
    out.extend_from_slice(&scale.to_le_bytes());
    out.extend_from_slice(&(payload_len as u64).to_le_bytes());
    out
}

struct ParsedHeader {
    kind: FrameKind,
    level: u16,
    scale: f64,
    payload: std::ops::Range<usize>,
}

fn parse_header(bytes: &[u8], params: &HeParams) -> Result<ParsedHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            need: HEADER_LEN,
            have: bytes.len(),
        }
        .into());
    }
    if bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic.into());
    }
    if bytes[4] != VERSION {
        return Err(FrameError::UnsupportedVersion(bytes[4]).into());
    }
    let scheme = Scheme::from_u8(bytes[5])
        .ok_or_else(|| FrameError::Malformed(format!("unknown scheme {}", bytes[5])))?;
    if scheme != params.scheme {
        return Err(FrameError::ParamsDigestMismatch.into());
    }
    let kind = FrameKind::from_u8(bytes[6])
        .ok_or_else(|| FrameError::Malformed(format!("unknown frame kind {}", bytes[6])))?;
    if bytes[7..39] != params.digest() {
        return Err(FrameError::ParamsDigestMismatch.into());
    }
    let level = u16::from_le_bytes(bytes[39..41].try_into().unwrap());
    let scale = f64::from_le_bytes(bytes[41..49].try_into().unwrap());
    let payload_len = u64::from_le_bytes(bytes[49..57].try_into().unwrap()) as usize;
    if bytes.len() < HEADER_LEN + payload_len {
        return Err(FrameError::Truncated {
            need: HEADER_LEN + payload_len,
            have: bytes.len(),
        }
        .into());
    }
    Ok(ParsedHeader {
        kind,
        level,
        scale,
        payload: HEADER_LEN..HEADER_LEN + payload_len,
    })
}

/// Total length of the frame starting at `bytes`, for splitting
/// concatenated frames.
pub fn frame_len(bytes: &[u8]) -> Result<usize> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            need: HEADER_LEN,
            have: bytes.len(),
        }
        .into());
    }
    if bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic.into());
    }
    let payload_len = u64::from_le_bytes(bytes[49..57].try_into().unwrap()) as usize;
    Ok(HEADER_LEN + payload_len)
}

pub fn peek_kind(bytes: &[u8]) -> Result<FrameKind> {
    if bytes.len() < 7 {
        return Err(FrameError::Truncated {
            need: 7,
            have: bytes.len(),
        }
        .into());
    }
    if bytes[..4] != MAGIC {
        return Err(FrameError::BadMagic.into());
    }
    FrameKind::from_u8(bytes[6])
        .ok_or_else(|| FrameError::Malformed(format!("unknown frame kind {}", bytes[6])).into())
}

fn push_poly_rows(out: &mut Vec<u8>, poly: &Poly) {
    debug_assert!(!poly.ntt_form);
    for row in &poly.residues {
        for &c in row {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(FrameError::Truncated {
                need: self.pos + n,
                have: self.bytes.len(),
            }
            .into());
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn poly(&mut self, n: usize, chain_idx: &[usize], params: &HeParams) -> Result<Poly> {
        let mut residues = Vec::with_capacity(chain_idx.len());
        for &ci in chain_idx {
            let q = params.primes[ci];
            let raw = self.take(n * 8)?;
            let mut row = Vec::with_capacity(n);
            for w in raw.chunks_exact(8) {
                let c = u64::from_le_bytes(w.try_into().unwrap());
                if c >= q {
                    return Err(FrameError::Malformed(format!(
                        "coefficient {} exceeds modulus {}",
                        c, q
                    ))
                    .into());
                }
                row.push(c);
            }
            residues.push(row);
        }
        Ok(Poly {
            chain_idx: chain_idx.to_vec(),
            residues,
            ntt_form: false,
        })
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(FrameError::Malformed(format!(
                "{} trailing payload bytes",
                self.bytes.len() - self.pos
            ))
            .into());
        }
        Ok(())
    }
}

fn expect_kind(got: FrameKind, expected: FrameKind) -> Result<()> {
    if got != expected {
        return Err(FrameError::WrongKind {
            expected: expected.name(),
            got: got.name(),
        }
        .into());
    }
    Ok(())
}

pub fn write_ciphertext(ct: &Ciphertext, params: &HeParams) -> Vec<u8> {
    let n = params.ring_degree;
    let primes = ct.parts[0].chain_idx.len();
    let payload_len = 2 + ct.parts.len() * primes * n * 8;
    let mut out = header(
        params,
        FrameKind::Ciphertext,
        ct.level as u16,
        ct.scale,
        payload_len,
    );
    out.push(ct.parts.len() as u8);
    out.push(primes as u8);
    for p in &ct.parts {
        push_poly_rows(&mut out, p);
    }
    out
}

pub fn read_ciphertext(bytes: &[u8], params: &HeParams) -> Result<Ciphertext> {
    let h = parse_header(bytes, params)?;
    expect_kind(h.kind, FrameKind::Ciphertext)?;
    let mut r = Reader {
        bytes: &bytes[h.payload.clone()],
        pos: 0,
    };
    let parts = r.u8()? as usize;
    let primes = r.u8()? as usize;
    if parts < 2 || primes == 0 || primes > params.data_prime_count() {
        return Err(FrameError::Malformed(format!(
            "ciphertext with {} parts over {} primes",
            parts, primes
        ))
        .into());
    }
    if h.level as usize != primes - 1 {
        return Err(FrameError::Malformed(format!(
            "level {} does not match {} primes",
            h.level, primes
        ))
        .into());
    }
    let chain: Vec<usize> = (0..primes).collect();
    let n = params.ring_degree;
    let mut polys = Vec::with_capacity(parts);
    for _ in 0..parts {
        polys.push(r.poly(n, &chain, params)?);
    }
    r.done()?;
    Ok(Ciphertext {
        scheme: params.scheme,
        parts: polys,
        level: h.level as usize,
        scale: h.scale,
    })
}

pub fn write_public_key(pk: &PublicKey, params: &HeParams, ring: &RingContext) -> Vec<u8> {
    let n = params.ring_degree;
    let primes = pk.b.chain_idx.len();
    let payload_len = 2 + 2 * primes * n * 8;
    let mut out = header(params, FrameKind::PublicKey, 0, 0.0, payload_len);
    out.push(2);
    out.push(primes as u8);
    push_poly_rows(&mut out, &pk.b.to_coeff(ring));
    push_poly_rows(&mut out, &pk.a.to_coeff(ring));
    out
}

pub fn read_public_key(bytes: &[u8], params: &HeParams, ring: &RingContext) -> Result<PublicKey> {
    let h = parse_header(bytes, params)?;
    expect_kind(h.kind, FrameKind::PublicKey)?;
    let mut r = Reader {
        bytes: &bytes[h.payload.clone()],
        pos: 0,
    };
    let parts = r.u8()? as usize;
    let primes = r.u8()? as usize;
    if parts != 2 || primes != params.data_prime_count() {
        return Err(FrameError::Malformed("bad public key shape".into()).into());
    }
    let chain: Vec<usize> = (0..primes).collect();
    let n = params.ring_degree;
    let b = r.poly(n, &chain, params)?.to_ntt(ring);
    let a = r.poly(n, &chain, params)?.to_ntt(ring);
    r.done()?;
    Ok(PublicKey { b, a })
}

pub fn write_secret_key(sk: &SecretKey, params: &HeParams, ring: &RingContext) -> Vec<u8> {
    let n = params.ring_degree;
    let primes = sk.s.chain_idx.len();
    let payload_len = 2 + primes * n * 8;
    let mut out = header(params, FrameKind::SecretKey, 0, 0.0, payload_len);
    out.push(1);
    out.push(primes as u8);
    push_poly_rows(&mut out, &sk.s.to_coeff(ring));
    out
}

pub fn read_secret_key(bytes: &[u8], params: &HeParams, ring: &RingContext) -> Result<SecretKey> {
    let h = parse_header(bytes, params)?;
    expect_kind(h.kind, FrameKind::SecretKey)?;
    let mut r = Reader {
        bytes: &bytes[h.payload.clone()],
        pos: 0,
    };
    let parts = r.u8()? as usize;
    let primes = r.u8()? as usize;
    if parts != 1 || primes != params.primes.len() {
        return Err(FrameError::Malformed("bad secret key shape".into()).into());
    }
    let chain: Vec<usize> = (0..primes).collect();
    let s = r.poly(params.ring_degree, &chain, params)?.to_ntt(ring);
    r.done()?;
    Ok(SecretKey { s })
}

fn ks_key_payload(key: &KsKey, params: &HeParams, ring: &RingContext, out: &mut Vec<u8>) {
    out.push(key.digits.len() as u8);
    out.push(params.primes.len() as u8);
    for (b, a) in &key.digits {
        push_poly_rows(out, &b.to_coeff(ring));
        push_poly_rows(out, &a.to_coeff(ring));
    }
}

fn ks_key_payload_len(key: &KsKey, params: &HeParams) -> usize {
    2 + key.digits.len() * 2 * params.primes.len() * params.ring_degree * 8
}

fn read_ks_key(r: &mut Reader, params: &HeParams, ring: &RingContext) -> Result<KsKey> {
    let digits = r.u8()? as usize;
    let primes = r.u8()? as usize;
    if digits != params.data_prime_count() || primes != params.primes.len() {
        return Err(FrameError::Malformed("bad key-switching key shape".into()).into());
    }
    let chain: Vec<usize> = (0..primes).collect();
    let n = params.ring_degree;
    let mut out = Vec::with_capacity(digits);
    for _ in 0..digits {
        let b = r.poly(n, &chain, params)?.to_ntt(ring);
        let a = r.poly(n, &chain, params)?.to_ntt(ring);
        out.push((b, a));
    }
    Ok(KsKey { digits: out })
}

pub fn write_relin_key(key: &KsKey, params: &HeParams, ring: &RingContext) -> Vec<u8> {
    let mut out = header(
        params,
        FrameKind::RelinKey,
        0,
        0.0,
        ks_key_payload_len(key, params),
    );
    ks_key_payload(key, params, ring, &mut out);
    out
}

pub fn read_relin_key(bytes: &[u8], params: &HeParams, ring: &RingContext) -> Result<KsKey> {
    let h = parse_header(bytes, params)?;
    expect_kind(h.kind, FrameKind::RelinKey)?;
    let mut r = Reader {
        bytes: &bytes[h.payload.clone()],
        pos: 0,
    };
    let key = read_ks_key(&mut r, params, ring)?;
    r.done()?;
    Ok(key)
}

pub fn write_galois_keys(keys: &GaloisKeys, params: &HeParams, ring: &RingContext) -> Vec<u8> {
    let per_key: usize = keys
        .keys
        .values()
        .map(|k| 8 + ks_key_payload_len(k, params))
        .sum();
    let mut out = header(params, FrameKind::GaloisKeys, 0, 0.0, 1 + per_key);
    out.push(keys.keys.len() as u8);
    for (&step, key) in &keys.keys {
        out.extend_from_slice(&(step as u64).to_le_bytes());
        ks_key_payload(key, params, ring, &mut out);
    }
    out
}

pub fn read_galois_keys(bytes: &[u8], params: &HeParams, ring: &RingContext) -> Result<GaloisKeys> {
    let h = parse_header(bytes, params)?;
    expect_kind(h.kind, FrameKind::GaloisKeys)?;
    let mut r = Reader {
        bytes: &bytes[h.payload.clone()],
        pos: 0,
    };
    let count = r.u8()? as usize;
    let mut keys = BTreeMap::new();
    for _ in 0..count {
        let step = r.u64()? as usize;
        let key = read_ks_key(&mut r, params, ring)?;
        keys.insert(step, key);
    }
    r.done()?;
    Ok(GaloisKeys { keys })
}
