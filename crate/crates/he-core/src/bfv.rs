//! BFV over a single word-sized prime, used for exact payloads
//! (coefficient-packed byte strings). No homomorphic multiplication is
//! needed for those, so there is no relinearization machinery here.

use rand::Rng;

use crate::cipher::Ciphertext;
use crate::error::{HeError, Result};
use crate::keys::{KeyBundle, PublicKey, SecretKey};
use crate::params::{HeParams, Scheme};
use crate::ring::{Poly, RingContext};

pub struct BfvEngine {
    pub params: HeParams,
    pub ring: RingContext,
    /// Δ = floor(q / t).
    delta: u64,
}

impl BfvEngine {
    pub fn new(params: HeParams) -> Result<Self> {
        assert_eq!(params.scheme, Scheme::Bfv);
        params.validate()?;
        assert_eq!(params.primes.len(), 1);
        let ring = RingContext::new(&params);
        let delta = params.primes[0] / params.plain_modulus;
        Ok(BfvEngine {
            params,
            ring,
            delta,
        })
    }

    pub fn keygen<R: Rng>(&self, rng: &mut R) -> KeyBundle {
        let n = self.params.ring_degree;
        let ring = &self.ring;
        let chain = [0usize];
        let mut s = Poly::sample_ternary(rng, n, &chain, ring);
        s.ntt(ring);
        let a = Poly::sample_uniform(rng, n, &chain, ring).to_ntt(ring);
        let e = Poly::sample_gaussian(rng, n, &chain, ring).to_ntt(ring);
        let b = a.mul_pointwise(&s, ring).add(&e, ring).neg(ring);
        KeyBundle {
            secret: SecretKey { s },
            public: PublicKey { b, a },
            relin: None,
            galois: None,
        }
    }

    /// Encrypt integer coefficients, one value per polynomial slot. Every
    /// value must lie in [0, t).
    pub fn encrypt<R: Rng>(
        &self,
        pk: &PublicKey,
        values: &[u64],
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let n = self.params.ring_degree;
        let t = self.params.plain_modulus;
        if values.len() > n {
            return Err(HeError::VectorTooLong {
                len: values.len(),
                slots: n,
            });
        }
        for &v in values {
            if v >= t {
                return Err(HeError::ValueOutOfRange {
                    value: v,
                    plain_modulus: t,
                });
            }
        }
        let ring = &self.ring;
        let chain = [0usize];
        let q = self.params.primes[0];

        let mut m = Poly::zero(n, &chain, false);
        for (i, &v) in values.iter().enumerate() {
            m.residues[0][i] = crate::arith::mul_mod(v, self.delta, q);
        }

        let u = Poly::sample_ternary(rng, n, &chain, ring).to_ntt(ring);
        let e0 = Poly::sample_gaussian(rng, n, &chain, ring);
        let e1 = Poly::sample_gaussian(rng, n, &chain, ring);
        let mut c0 = pk.b.mul_pointwise(&u, ring);
        c0.intt(ring);
        c0 = c0.add(&e0, ring).add(&m, ring);
        let mut c1 = pk.a.mul_pointwise(&u, ring);
        c1.intt(ring);
        c1 = c1.add(&e1, ring);

        Ok(Ciphertext {
            scheme: Scheme::Bfv,
            parts: vec![c0, c1],
            level: 0,
            scale: 0.0,
        })
    }

    /// Decrypt to integer coefficients, failing if the invariant noise has
    /// eaten the whole budget.
    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<u64>> {
        let (values, budget) = self.decrypt_with_budget(sk, ct);
        if budget < 1 {
            return Err(HeError::NoiseBudgetExhausted);
        }
        Ok(values)
    }

    /// Decrypt and report the remaining invariant-noise budget in bits:
    /// log2(q / (2·max|r|)) where r is the centered rounding residue of
    /// t·(c0 + c1·s) mod q. A budget below 1 bit means the rounding is no
    /// longer trustworthy.
    pub fn decrypt_with_budget(&self, sk: &SecretKey, ct: &Ciphertext) -> (Vec<u64>, i64) {
        let ring = &self.ring;
        let q = self.params.primes[0];
        let t = self.params.plain_modulus;
        let mut c1s = ct.parts[1].to_ntt(ring).mul_pointwise(&sk.s, ring);
        c1s.intt(ring);
        let v = ct.parts[0].add(&c1s, ring);

        let half_q = q / 2;
        let mut max_noise: u64 = 0;
        let mut out = Vec::with_capacity(self.params.ring_degree);
        for &coeff in &v.residues[0] {
            // t·coeff = m·q + r with |r| <= q/2; m mod t is the plaintext.
            let tv = coeff as u128 * t as u128;
            let m = ((tv + (q / 2) as u128) / q as u128) as u64;
            let r_raw = (tv % q as u128) as u64;
            let r_mag = if r_raw > half_q { q - r_raw } else { r_raw };
            max_noise = max_noise.max(r_mag);
            out.push(m % t);
        }
        let budget = if max_noise == 0 {
            63
        } else {
            (q as f64 / (2.0 * max_noise as f64)).log2().floor() as i64
        };
        (out, budget)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamsProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn engine() -> BfvEngine {
        BfvEngine::new(HeParams::generate(ParamsProfile::BfvDefault)).unwrap()
    }

    #[test]
    fn exact_roundtrip() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let keys = eng.keygen(&mut rng);
        let values: Vec<u64> = (0..30).map(|i| (b'a' as u64 + i) % 65537).collect();
        let ct = eng.encrypt(&keys.public, &values, &mut rng).unwrap();
        let out = eng.decrypt(&keys.secret, &ct).unwrap();
        assert_eq!(&out[..30], &values[..]);
        for &v in &out[30..] {
            assert_eq!(v, 0);
        }
    }

    #[test]
    fn roundtrip_is_exact_for_all_byte_values() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let keys = eng.keygen(&mut rng);
        let values: Vec<u64> = (0..=255u64).collect();
        let ct = eng.encrypt(&keys.public, &values, &mut rng).unwrap();
        let out = eng.decrypt(&keys.secret, &ct).unwrap();
        assert_eq!(&out[..256], &values[..]);
    }

    #[test]
    fn value_at_plain_modulus_is_rejected() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let keys = eng.keygen(&mut rng);
        let t = eng.params.plain_modulus;
        assert!(matches!(
            eng.encrypt(&keys.public, &[t], &mut rng),
            Err(HeError::ValueOutOfRange { .. })
        ));
        assert!(eng.encrypt(&keys.public, &[t - 1], &mut rng).is_ok());
    }

    #[test]
    fn fresh_ciphertext_has_healthy_noise_budget() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(14);
        let keys = eng.keygen(&mut rng);
        let ct = eng.encrypt(&keys.public, &[1, 2, 3], &mut rng).unwrap();
        let (_, budget) = eng.decrypt_with_budget(&keys.secret, &ct);
        // 60-bit q against t = 65537 leaves roughly 25-35 bits.
        assert!(budget > 15, "budget {} too low", budget);
        assert!(budget < 50, "budget {} implausibly high", budget);
    }

    #[test]
    fn wrong_key_exhausts_the_budget() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(15);
        let keys = eng.keygen(&mut rng);
        let other = eng.keygen(&mut rng);
        let ct = eng.encrypt(&keys.public, &[42; 16], &mut rng).unwrap();
        assert!(matches!(
            eng.decrypt(&other.secret, &ct),
            Err(HeError::NoiseBudgetExhausted)
        ));
    }
}
