//! Key material. All polynomials are kept in NTT form in memory; the frame
//! codec converts to coefficient form for serialization.

use std::collections::BTreeMap;

use crate::ring::Poly;

pub struct SecretKey {
    /// Ternary secret over the full prime chain.
    pub s: Poly,
}

pub struct PublicKey {
    /// b = -(a·s + e) over the data primes.
    pub b: Poly,
    pub a: Poly,
}

/// Key-switching key from some s' to the canonical secret s. One digit per
/// data prime; each digit is an RLWE pair over the full chain (data primes
/// plus the key-switching prime) whose `b` row hides P·s' on that digit's
/// own prime.
pub struct KsKey {
    pub digits: Vec<(Poly, Poly)>,
}

pub type RelinKey = KsKey;

pub struct GaloisKeys {
    /// Rotation step -> key switching σ(s) back to s.
    pub keys: BTreeMap<usize, KsKey>,
}

pub struct KeyBundle {
    pub secret: SecretKey,
    pub public: PublicKey,
    pub relin: Option<RelinKey>,
    pub galois: Option<GaloisKeys>,
}
