//! Encryption parameter profiles and the parameter digest that ties
//! ciphertexts and keys together.

use sha2::{Digest, Sha256};

use crate::arith::find_ntt_prime;
use crate::error::{HeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Ckks,
    Bfv,
}

impl Scheme {
    pub fn as_u8(self) -> u8 {
        match self {
            Scheme::Ckks => 1,
            Scheme::Bfv => 2,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            1 => Some(Scheme::Ckks),
            2 => Some(Scheme::Bfv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamsProfile {
    /// N = 8192, moduli [60, 40, 40, 60] bits (last is the key-switching
    /// prime), scale 2^40.
    CkksDefault,
    /// N = 4096, one 60-bit modulus, plaintext modulus 65537.
    BfvDefault,
    /// N = 1024 CKKS for fast unit tests. Far below any acceptable
    /// security level; refused by anything marked `require_secure`.
    TestSmall,
}

impl ParamsProfile {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "ckks_default" => Some(ParamsProfile::CkksDefault),
            "bfv_default" => Some(ParamsProfile::BfvDefault),
            "test_small" => Some(ParamsProfile::TestSmall),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ParamsProfile::CkksDefault => "ckks_default",
            ParamsProfile::BfvDefault => "bfv_default",
            ParamsProfile::TestSmall => "test_small",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeParams {
    pub scheme: Scheme,
    pub ring_degree: usize,
    /// Requested bit sizes, in chain order. For CKKS the final prime is the
    /// key-switching ("special") prime and never carries ciphertext data.
    pub modulus_bits: Vec<u32>,
    /// The concrete NTT-friendly primes, chain order.
    pub primes: Vec<u64>,
    /// CKKS encoding scale; 0.0 for BFV.
    pub scale: f64,
    /// BFV plaintext modulus t; 0 for CKKS.
    pub plain_modulus: u64,
}

impl HeParams {
    pub fn generate(profile: ParamsProfile) -> HeParams {
        match profile {
            ParamsProfile::CkksDefault => Self::ckks(8192, &[60, 40, 40, 60]),
            ParamsProfile::TestSmall => Self::ckks(1024, &[60, 40, 40, 60]),
            ParamsProfile::BfvDefault => Self::bfv(4096, &[60], 65537),
        }
    }

    fn ckks(ring_degree: usize, bits: &[u32]) -> HeParams {
        let primes = pick_primes(ring_degree, bits);
        HeParams {
            scheme: Scheme::Ckks,
            ring_degree,
            modulus_bits: bits.to_vec(),
            primes,
            scale: (1u64 << 40) as f64,
            plain_modulus: 0,
        }
    }

    fn bfv(ring_degree: usize, bits: &[u32], plain_modulus: u64) -> HeParams {
        let primes = pick_primes(ring_degree, bits);
        HeParams {
            scheme: Scheme::Bfv,
            ring_degree,
            modulus_bits: bits.to_vec(),
            primes,
            scale: 0.0,
            plain_modulus,
        }
    }

    /// Slot count: N/2 packed complex slots for CKKS, N integer
    /// coefficients for BFV.
    pub fn slot_count(&self) -> usize {
        match self.scheme {
            Scheme::Ckks => self.ring_degree / 2,
            Scheme::Bfv => self.ring_degree,
        }
    }

    /// Number of primes that carry ciphertext data (excludes the CKKS
    /// key-switching prime).
    pub fn data_prime_count(&self) -> usize {
        match self.scheme {
            Scheme::Ckks => self.primes.len() - 1,
            Scheme::Bfv => self.primes.len(),
        }
    }

    /// Top level of a fresh CKKS ciphertext.
    pub fn max_level(&self) -> usize {
        self.data_prime_count() - 1
    }

    /// Classical 128-bit security bound on total log2(Q·P) per ring degree,
    /// following the common homomorphic encryption standard table.
    pub fn is_secure(&self) -> bool {
        let bound = match self.ring_degree {
            4096 => 109,
            8192 => 218,
            16384 => 438,
            32768 => 881,
            _ => return false,
        };
        let total: u32 = self.modulus_bits.iter().sum();
        total <= bound
    }

    pub fn require_secure(&self) -> Result<()> {
        if self.is_secure() {
            Ok(())
        } else {
            Err(HeError::InsecureParams(format!(
                "ring degree {} with {} total modulus bits",
                self.ring_degree,
                self.modulus_bits.iter().sum::<u32>()
            )))
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"HEPARAMS1");
        h.update([self.scheme.as_u8()]);
        h.update((self.ring_degree as u64).to_le_bytes());
        h.update([self.primes.len() as u8]);
        for &p in &self.primes {
            h.update(p.to_le_bytes());
        }
        h.update(self.scale.to_le_bytes());
        h.update(self.plain_modulus.to_le_bytes());
        h.finalize().into()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.ring_degree.is_power_of_two() {
            return Err(HeError::InsecureParams(format!(
                "ring degree {} is not a power of two",
                self.ring_degree
            )));
        }
        match self.scheme {
            Scheme::Ckks => {
                if self.slot_count() < 72 {
                    return Err(HeError::VectorTooLong {
                        len: 72,
                        slots: self.slot_count(),
                    });
                }
            }
            Scheme::Bfv => {
                if self.plain_modulus <= 127 {
                    return Err(HeError::ValueOutOfRange {
                        value: 127,
                        plain_modulus: self.plain_modulus,
                    });
                }
            }
        }
        Ok(())
    }
}

fn pick_primes(ring_degree: usize, bits: &[u32]) -> Vec<u64> {
    let two_n = 2 * ring_degree as u64;
    let mut primes: Vec<u64> = Vec::with_capacity(bits.len());
    for &b in bits {
        let p = find_ntt_prime(b, two_n, &primes);
        primes.push(p);
    }
    primes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ckks_default_shape() {
        let p = HeParams::generate(ParamsProfile::CkksDefault);
        assert_eq!(p.ring_degree, 8192);
        assert_eq!(p.slot_count(), 4096);
        assert!(p.slot_count() >= 72);
        assert_eq!(p.scale, (1u64 << 40) as f64);
        assert_eq!(p.primes.len(), 4);
        assert!(p.is_secure());
        for &q in &p.primes {
            assert_eq!(q % 16384, 1);
        }
    }

    #[test]
    fn bfv_default_shape() {
        let p = HeParams::generate(ParamsProfile::BfvDefault);
        assert_eq!(p.ring_degree, 4096);
        assert_eq!(p.plain_modulus, 65537);
        assert!(p.plain_modulus > 127);
        assert!(p.is_secure());
    }

    #[test]
    fn test_small_is_insecure() {
        let p = HeParams::generate(ParamsProfile::TestSmall);
        assert!(!p.is_secure());
        assert!(p.require_secure().is_err());
        assert!(p.slot_count() >= 72);
    }

    #[test]
    fn digest_distinguishes_profiles() {
        let a = HeParams::generate(ParamsProfile::CkksDefault);
        let b = HeParams::generate(ParamsProfile::BfvDefault);
        let c = HeParams::generate(ParamsProfile::TestSmall);
        assert_ne!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest(), HeParams::generate(ParamsProfile::CkksDefault).digest());
    }
}
