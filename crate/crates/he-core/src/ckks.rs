//! CKKS over an RNS prime chain with a dedicated key-switching prime.
//!
//! The last prime of the chain (P) never carries ciphertext data. Key
//! switching decomposes per data prime: digit i of the input is its raw
//! residue mod q_i spread across the active primes and P, and the matching
//! key digit hides P·s' on row i only — so the same keys serve every level.
//! The final mod-down by P divides the key noise back out.

use rand::Rng;

use crate::cipher::Ciphertext;
use crate::encoder::CkksEncoder;
use crate::error::{HeError, Result};
use crate::keys::{GaloisKeys, KeyBundle, KsKey, PublicKey, SecretKey};
use crate::params::{HeParams, Scheme};
use crate::ring::{Poly, RingContext};

/// Generator of the slot-rotation subgroup: X -> X^5 shifts every slot
/// left by one.
pub const GALOIS_GENERATOR: usize = 5;

pub struct CkksEngine {
    pub params: HeParams,
    pub ring: RingContext,
    pub encoder: CkksEncoder,
}

impl CkksEngine {
    pub fn new(params: HeParams) -> Result<Self> {
        assert_eq!(params.scheme, Scheme::Ckks);
        params.validate()?;
        let ring = RingContext::new(&params);
        let encoder = CkksEncoder::new(params.ring_degree);
        Ok(CkksEngine {
            params,
            ring,
            encoder,
        })
    }

    fn full_chain(&self) -> Vec<usize> {
        (0..self.params.primes.len()).collect()
    }

    fn data_chain(&self, level: usize) -> Vec<usize> {
        (0..=level).collect()
    }

    /// Active data primes plus the key-switching prime, in drop order.
    fn ks_chain(&self, level: usize) -> Vec<usize> {
        let special = self.params.primes.len() - 1;
        (0..=level).chain(std::iter::once(special)).collect()
    }

    /// Rotation steps that get Galois keys: every power of two below the
    /// slot count, enough to compose any rotation and to run slot sums.
    pub fn default_rotation_steps(&self) -> Vec<usize> {
        let slots = self.params.slot_count();
        (0..slots.trailing_zeros()).map(|j| 1usize << j).collect()
    }

    pub fn keygen<R: Rng>(&self, rng: &mut R) -> KeyBundle {
        let n = self.params.ring_degree;
        let ring = &self.ring;
        let full = self.full_chain();
        let data = self.data_chain(self.params.max_level());

        let mut s = Poly::sample_ternary(rng, n, &full, ring);
        s.ntt(ring);
        let secret = SecretKey { s };

        let a = Poly::sample_uniform(rng, n, &data, ring).to_ntt(ring);
        let e = Poly::sample_gaussian(rng, n, &data, ring).to_ntt(ring);
        let s_data = secret.s.restrict(&data);
        let b = a.mul_pointwise(&s_data, ring).add(&e, ring).neg(ring);
        let public = PublicKey { b, a };

        let s_sq = secret.s.mul_pointwise(&secret.s, ring);
        let relin = self.make_ks_key(rng, &s_sq, &secret.s);

        let mut galois = std::collections::BTreeMap::new();
        let two_n = 2 * n;
        for step in self.default_rotation_steps() {
            let g = mod_pow_usize(GALOIS_GENERATOR, step, two_n);
            let s_rot = secret
                .s
                .to_coeff(ring)
                .automorphism(g, ring)
                .to_ntt(ring);
            galois.insert(step, self.make_ks_key(rng, &s_rot, &secret.s));
        }

        KeyBundle {
            secret,
            public,
            relin: Some(relin),
            galois: Some(GaloisKeys { keys: galois }),
        }
    }

    /// Key switching s' -> s. Digit i is an RLWE pair (b_i, a_i) over the
    /// full chain with b_i = -(a_i·s + e_i) + (P mod q_i)·s' on row i only:
    /// P·(Q/q_i)·[(Q/q_i)^{-1}]_{q_i} vanishes mod every other prime.
    fn make_ks_key<R: Rng>(&self, rng: &mut R, s_from: &Poly, s_to: &Poly) -> KsKey {
        let n = self.params.ring_degree;
        let ring = &self.ring;
        let full = self.full_chain();
        let special = self.params.primes.len() - 1;
        let p_special = self.params.primes[special];
        let mut digits = Vec::with_capacity(self.params.data_prime_count());
        for i in 0..self.params.data_prime_count() {
            let a = Poly::sample_uniform(rng, n, &full, ring).to_ntt(ring);
            let e = Poly::sample_gaussian(rng, n, &full, ring).to_ntt(ring);
            let mut b = a.mul_pointwise(s_to, ring).add(&e, ring).neg(ring);
            let q_i = self.params.primes[i];
            let factor = p_special % q_i;
            for j in 0..n {
                b.residues[i][j] = crate::arith::add_mod(
                    b.residues[i][j],
                    crate::arith::mul_mod(s_from.residues[i][j], factor, q_i),
                    q_i,
                );
            }
            digits.push((b, a));
        }
        KsKey { digits }
    }

    /// Apply a key-switching key to a coefficient-form polynomial on the
    /// active data primes; returns a coefficient-form RLWE pair on the same
    /// primes, already divided by P.
    fn key_switch(&self, c: &Poly, key: &KsKey) -> (Poly, Poly) {
        debug_assert!(!c.ntt_form);
        let ring = &self.ring;
        let n = self.params.ring_degree;
        let level = c.chain_idx.len() - 1;
        let chain = self.ks_chain(level);
        let mut acc_b = Poly::zero(n, &chain, true);
        let mut acc_a = Poly::zero(n, &chain, true);
        for i in 0..=level {
            let raw = &c.residues[i];
            let mut digit = Poly::zero(n, &chain, false);
            for (row, &ci) in chain.iter().enumerate() {
                let q = ring.primes[ci];
                if ci == i {
                    digit.residues[row].copy_from_slice(raw);
                } else {
                    for (dst, &v) in digit.residues[row].iter_mut().zip(raw) {
                        *dst = v % q;
                    }
                }
            }
            digit.ntt(ring);
            let kb = key.digits[i].0.restrict(&chain);
            let ka = key.digits[i].1.restrict(&chain);
            acc_b.mul_add_assign(&digit, &kb, ring);
            acc_a.mul_add_assign(&digit, &ka, ring);
        }
        acc_b.intt(ring);
        acc_a.intt(ring);
        (
            acc_b.drop_last_rounded(ring),
            acc_a.drop_last_rounded(ring),
        )
    }

    pub fn encrypt<R: Rng>(
        &self,
        pk: &PublicKey,
        values: &[f64],
        rng: &mut R,
    ) -> Result<Ciphertext> {
        let ring = &self.ring;
        let n = self.params.ring_degree;
        let level = self.params.max_level();
        let chain = self.data_chain(level);
        let m = self
            .encoder
            .encode(values, self.params.scale, &chain, ring)?;

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
            scheme: Scheme::Ckks,
            parts: vec![c0, c1],
            level,
            scale: self.params.scale,
        })
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> Result<Vec<f64>> {
        let ring = &self.ring;
        let chain = self.data_chain(ct.level);
        let s = sk.s.restrict(&chain);
        let mut c1s = ct.parts[1].to_ntt(ring).mul_pointwise(&s, ring);
        c1s.intt(ring);
        let m = ct.parts[0].add(&c1s, ring);
        Ok(self.encoder.decode(&m.to_centered_i128(ring), ct.scale))
    }

    fn check_pair(&self, a: &Ciphertext, b: &Ciphertext) -> Result<()> {
        if a.level != b.level {
            return Err(HeError::LevelMismatch {
                a: a.level,
                b: b.level,
            });
        }
        let rel = (a.scale - b.scale).abs() / a.scale.max(b.scale);
        if rel > 1e-9 {
            return Err(HeError::ScaleMismatch {
                expected: a.scale,
                got: b.scale,
            });
        }
        Ok(())
    }

    /// Drop modulus-chain primes without touching the scale. Cheap (residue
    /// rows are simply discarded) and noise-free; useful to shrink
    /// ciphertexts before a known-depth computation.
    pub fn mod_drop(&self, ct: &Ciphertext, level: usize) -> Result<Ciphertext> {
        if level > ct.level {
            return Err(HeError::LevelMismatch {
                a: ct.level,
                b: level,
            });
        }
        let chain = self.data_chain(level);
        Ok(Ciphertext {
            scheme: Scheme::Ckks,
            parts: ct.parts.iter().map(|p| p.restrict(&chain)).collect(),
            level,
            scale: ct.scale,
        })
    }

    pub fn add(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.check_pair(a, b)?;
        let ring = &self.ring;
        Ok(Ciphertext {
            scheme: Scheme::Ckks,
            parts: a
                .parts
                .iter()
                .zip(&b.parts)
                .map(|(x, y)| x.add(y, ring))
                .collect(),
            level: a.level,
            scale: a.scale,
        })
    }

    /// Full multiply: tensor, relinearize to two parts, rescale one level.
    pub fn multiply(
        &self,
        a: &Ciphertext,
        b: &Ciphertext,
        relin: &KsKey,
    ) -> Result<Ciphertext> {
        self.check_pair(a, b)?;
        if a.level == 0 {
            return Err(HeError::LevelExhausted);
        }
        let ring = &self.ring;
        let a0 = a.parts[0].to_ntt(ring);
        let a1 = a.parts[1].to_ntt(ring);
        let b0 = b.parts[0].to_ntt(ring);
        let b1 = b.parts[1].to_ntt(ring);

        let d0 = a0.mul_pointwise(&b0, ring);
        let mut d1 = a0.mul_pointwise(&b1, ring);
        d1.add_assign(&a1.mul_pointwise(&b0, ring), ring);
        let d2 = a1.mul_pointwise(&b1, ring);

        let d2 = d2.to_coeff(ring);
        let (r0, r1) = self.key_switch(&d2, relin);
        let c0 = d0.to_coeff(ring).add(&r0, ring);
        let c1 = d1.to_coeff(ring).add(&r1, ring);

        let dropped_prime = self.params.primes[a.level] as f64;
        Ok(Ciphertext {
            scheme: Scheme::Ckks,
            parts: vec![c0.drop_last_rounded(ring), c1.drop_last_rounded(ring)],
            level: a.level - 1,
            scale: a.scale * b.scale / dropped_prime,
        })
    }

    /// Rotate slots left by `step` using the matching Galois key.
    pub fn rotate(
        &self,
        ct: &Ciphertext,
        step: usize,
        galois: &GaloisKeys,
    ) -> Result<Ciphertext> {
        let key = galois
            .keys
            .get(&step)
            .ok_or(HeError::MissingRotationKey { step })?;
        let ring = &self.ring;
        let two_n = 2 * self.params.ring_degree;
        let g = mod_pow_usize(GALOIS_GENERATOR, step, two_n);
        let c0 = ct.parts[0].to_coeff(ring).automorphism(g, ring);
        let c1 = ct.parts[1].to_coeff(ring).automorphism(g, ring);
        let (r0, r1) = self.key_switch(&c1, key);
        Ok(Ciphertext {
            scheme: Scheme::Ckks,
            parts: vec![c0.add(&r0, ring), r1],
            level: ct.level,
            scale: ct.scale,
        })
    }

    /// Sum the first `width` slots into slot 0 (and every slot k gets the
    /// sum of slots k..k+2^ceil(log2 width)), by rotate-and-add over
    /// power-of-two steps. Slots past `width` must be zero.
    pub fn slot_sum(
        &self,
        ct: &Ciphertext,
        width: usize,
        galois: &GaloisKeys,
    ) -> Result<Ciphertext> {
        assert!(width >= 1 && width <= self.params.slot_count());
        let span = width.next_power_of_two();
        let mut acc = ct.clone();
        let mut step = 1usize;
        while step < span {
            let rotated = self.rotate(&acc, step, galois)?;
            acc = self.add(&acc, &rotated)?;
            step <<= 1;
        }
        Ok(acc)
    }
}

fn mod_pow_usize(base: usize, exp: usize, modulus: usize) -> usize {
    let mut acc = 1usize;
    let mut b = base % modulus;
    let mut e = exp;
    while e > 0 {
        if e & 1 == 1 {
            acc = acc * b % modulus;
        }
        b = b * b % modulus;
        e >>= 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamsProfile;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn engine() -> CkksEngine {
        CkksEngine::new(HeParams::generate(ParamsProfile::TestSmall)).unwrap()
    }

    #[test]
    fn encrypt_decrypt_roundtrip() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let keys = eng.keygen(&mut rng);
        let values: Vec<f64> = (0..72).map(|i| if i == 31 { 1.0 } else { 0.0 }).collect();
        let ct = eng.encrypt(&keys.public, &values, &mut rng).unwrap();
        assert_eq!(ct.level, eng.params.max_level());
        assert_eq!(ct.scale, eng.params.scale);
        let out = eng.decrypt(&keys.secret, &ct).unwrap();
        for (i, (&a, &b)) in values.iter().zip(&out).enumerate() {
            assert!((a - b).abs() < 1e-3, "slot {}: {} vs {}", i, a, b);
        }
    }

    #[test]
    fn homomorphic_add() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let keys = eng.keygen(&mut rng);
        let a: Vec<f64> = (0..50).map(|i| i as f64 * 0.01).collect();
        let b: Vec<f64> = (0..50).map(|i| 1.0 - i as f64 * 0.02).collect();
        let ca = eng.encrypt(&keys.public, &a, &mut rng).unwrap();
        let cb = eng.encrypt(&keys.public, &b, &mut rng).unwrap();
        let sum = eng.add(&ca, &cb).unwrap();
        let out = eng.decrypt(&keys.secret, &sum).unwrap();
        for i in 0..50 {
            assert!((out[i] - (a[i] + b[i])).abs() < 1e-3);
        }
    }

    #[test]
    fn homomorphic_multiply_rescales() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let keys = eng.keygen(&mut rng);
        let a: Vec<f64> = (0..72).map(|i| if i % 7 == 0 { 1.0 } else { 0.0 }).collect();
        let b: Vec<f64> = (0..72).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let ca = eng.encrypt(&keys.public, &a, &mut rng).unwrap();
        let cb = eng.encrypt(&keys.public, &b, &mut rng).unwrap();
        let prod = eng.multiply(&ca, &cb, keys.relin.as_ref().unwrap()).unwrap();
        assert_eq!(prod.level, eng.params.max_level() - 1);
        // Rescale brings the scale back near 2^40.
        let ratio = prod.scale / eng.params.scale;
        assert!(ratio > 0.5 && ratio < 2.0, "scale drifted: {}", prod.scale);
        let out = eng.decrypt(&keys.secret, &prod).unwrap();
        for i in 0..72 {
            assert!((out[i] - a[i] * b[i]).abs() < 1e-3, "slot {}: {}", i, out[i]);
        }
    }

    #[test]
    fn multiply_at_level_zero_is_an_error() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let keys = eng.keygen(&mut rng);
        let rk = keys.relin.as_ref().unwrap();
        let v = vec![0.5; 8];
        let ct = eng.encrypt(&keys.public, &v, &mut rng).unwrap();
        let ct1 = eng.multiply(&ct, &ct, rk).unwrap();
        let ct0 = eng.multiply(&ct1, &ct1, rk).unwrap();
        assert_eq!(ct0.level, 0);
        match eng.multiply(&ct0, &ct0, rk) {
            Err(HeError::LevelExhausted) => {}
            other => panic!("expected LevelExhausted, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn mismatched_levels_are_an_error() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let keys = eng.keygen(&mut rng);
        let rk = keys.relin.as_ref().unwrap();
        let v = vec![1.0; 4];
        let fresh = eng.encrypt(&keys.public, &v, &mut rng).unwrap();
        let deeper = eng.multiply(&fresh, &fresh, rk).unwrap();
        assert!(matches!(
            eng.add(&fresh, &deeper),
            Err(HeError::LevelMismatch { .. })
        ));
    }

    #[test]
    fn rotation_shifts_slots() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let keys = eng.keygen(&mut rng);
        let gk = keys.galois.as_ref().unwrap();
        let slots = eng.params.slot_count();
        let values: Vec<f64> = (0..slots).map(|i| (i % 97) as f64).collect();
        let ct = eng.encrypt(&keys.public, &values, &mut rng).unwrap();
        for step in [1usize, 4, 64] {
            let rot = eng.rotate(&ct, step, gk).unwrap();
            let out = eng.decrypt(&keys.secret, &rot).unwrap();
            for k in 0..slots {
                let expect = values[(k + step) % slots];
                assert!(
                    (out[k] - expect).abs() < 1e-2,
                    "step {} slot {}: {} vs {}",
                    step,
                    k,
                    out[k],
                    expect
                );
            }
        }
    }

    #[test]
    fn missing_rotation_key_is_an_error() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let keys = eng.keygen(&mut rng);
        let gk = keys.galois.as_ref().unwrap();
        let ct = eng.encrypt(&keys.public, &[1.0], &mut rng).unwrap();
        assert!(matches!(
            eng.rotate(&ct, 3, gk),
            Err(HeError::MissingRotationKey { step: 3 })
        ));
    }

    #[test]
    fn slot_sum_matches_plain_dot_product() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let keys = eng.keygen(&mut rng);
        let rk = keys.relin.as_ref().unwrap();
        let gk = keys.galois.as_ref().unwrap();
        // One-hot query against a multi-hot record vector, the system's
        // core scoring shape.
        let width = 72;
        let mut q = vec![0.0; width];
        q[13] = 1.0;
        let r: Vec<f64> = (0..width).map(|i| if i % 3 == 1 { 1.0 } else { 0.0 }).collect();
        let expected: f64 = q.iter().zip(&r).map(|(x, y)| x * y).sum();
        let cq = eng.encrypt(&keys.public, &q, &mut rng).unwrap();
        let cr = eng.encrypt(&keys.public, &r, &mut rng).unwrap();
        let prod = eng.multiply(&cq, &cr, rk).unwrap();
        let summed = eng.slot_sum(&prod, width, gk).unwrap();
        let out = eng.decrypt(&keys.secret, &summed).unwrap();
        assert!(
            (out[0] - expected).abs() < 1e-2,
            "dot product: {} vs {}",
            out[0],
            expected
        );
    }

    #[test]
    fn slot_sum_of_all_zeros_stays_near_zero() {
        let eng = engine();
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let keys = eng.keygen(&mut rng);
        let rk = keys.relin.as_ref().unwrap();
        let gk = keys.galois.as_ref().unwrap();
        let q = vec![0.0; 72];
        let r = vec![1.0; 72];
        let cq = eng.encrypt(&keys.public, &q, &mut rng).unwrap();
        let cr = eng.encrypt(&keys.public, &r, &mut rng).unwrap();
        let prod = eng.multiply(&cq, &cr, rk).unwrap();
        let summed = eng.slot_sum(&prod, 72, gk).unwrap();
        let out = eng.decrypt(&keys.secret, &summed).unwrap();
        assert!(out[0].abs() < 1e-2, "zero score drifted to {}", out[0]);
    }
}
