//! CKKS encoding: real slot vectors <-> integer polynomial coefficients via
//! the canonical embedding.
//!
//! Slot k is the evaluation of the message polynomial at ζ^(5^k mod 2n),
//! ζ = exp(iπ/n). Writing each odd exponent e as 2r+1 folds the evaluation
//! into a single length-n FFT of the ζ-twisted coefficients, with slot k at
//! array position r_k = (5^k mod 2n − 1)/2 and its conjugate at n−1−r_k.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{HeError, Result};
use crate::ring::{Poly, RingContext};

pub struct CkksEncoder {
    n: usize,
    slots: usize,
    /// r_k for each slot k.
    rot_pos: Vec<usize>,
    /// ζ^j, j in 0..n.
    zeta: Vec<Complex64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl CkksEncoder {
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two());
        let slots = n / 2;
        let two_n = 2 * n;
        let mut rot_pos = Vec::with_capacity(slots);
        let mut e = 1usize;
        for _ in 0..slots {
            rot_pos.push((e - 1) / 2);
            e = (e * 5) % two_n;
        }
        let zeta: Vec<Complex64> = (0..n)
            .map(|j| {
                let theta = std::f64::consts::PI * j as f64 / n as f64;
                Complex64::new(theta.cos(), theta.sin())
            })
            .collect();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(n);
        let fft_inv = planner.plan_fft_inverse(n);
        CkksEncoder {
            n,
            slots,
            rot_pos,
            zeta,
            fft_fwd,
            fft_inv,
        }
    }

    pub fn slot_count(&self) -> usize {
        self.slots
    }

    /// Encode a real vector (zero-padded to the slot count) at the given
    /// scale into a coefficient-form polynomial on `chain_idx`.
    pub fn encode(
        &self,
        values: &[f64],
        scale: f64,
        chain_idx: &[usize],
        ring: &RingContext,
    ) -> Result<Poly> {
        if values.len() > self.slots {
            return Err(HeError::VectorTooLong {
                len: values.len(),
                slots: self.slots,
            });
        }
        let n = self.n;
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        for (k, &v) in values.iter().enumerate() {
            let r = self.rot_pos[k];
            let z = Complex64::new(v * scale, 0.0);
            u[r] = z;
            u[n - 1 - r] = z.conj();
        }
        // t_j = (1/n) Σ_r u[r] ω^{-jr}, then untwist by ζ^{-j}.
        self.fft_fwd.process(&mut u);
        let inv_n = 1.0 / n as f64;
        let coeffs: Vec<i64> = (0..n)
            .map(|j| {
                let t = u[j] * inv_n * self.zeta[j].conj();
                t.re.round() as i64
            })
            .collect();
        Ok(Poly::from_signed(&coeffs, chain_idx, ring))
    }

    /// Decode centered integer coefficients back to real slot values.
    pub fn decode(&self, coeffs: &[i128], scale: f64) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(coeffs.len(), n);
        let mut u: Vec<Complex64> = (0..n)
            .map(|j| self.zeta[j] * coeffs[j] as f64)
            .collect();
        // Slot value at position r_k is Σ_j t_j ω^{+jr}.
        self.fft_inv.process(&mut u);
        (0..self.slots)
            .map(|k| u[self.rot_pos[k]].re / scale)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{HeParams, ParamsProfile};

    fn setup() -> (CkksEncoder, RingContext) {
        let params = HeParams::generate(ParamsProfile::TestSmall);
        let ring = RingContext::new(&params);
        let enc = CkksEncoder::new(params.ring_degree);
        (enc, ring)
    }

    #[test]
    fn encode_decode_roundtrip() {
        let (enc, ring) = setup();
        let scale = (1u64 << 40) as f64;
        let values: Vec<f64> = (0..enc.slot_count())
            .map(|i| ((i as f64) * 0.37).sin())
            .collect();
        let poly = enc.encode(&values, scale, &[0, 1, 2], &ring).unwrap();
        let back = enc.decode(&poly.to_centered_i128(&ring), scale);
        for (a, b) in values.iter().zip(&back) {
            assert!((a - b).abs() < 1e-7, "{} vs {}", a, b);
        }
    }

    #[test]
    fn short_input_pads_with_zeros() {
        let (enc, ring) = setup();
        let scale = (1u64 << 40) as f64;
        let values = vec![1.0, 0.0, 0.5];
        let poly = enc.encode(&values, scale, &[0], &ring).unwrap();
        let back = enc.decode(&poly.to_centered_i128(&ring), scale);
        assert!((back[0] - 1.0).abs() < 1e-8);
        assert!((back[2] - 0.5).abs() < 1e-8);
        for &v in &back[3..] {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn overlong_input_is_rejected() {
        let (enc, ring) = setup();
        let values = vec![0.0; enc.slot_count() + 1];
        assert!(enc.encode(&values, 2.0_f64.powi(40), &[0], &ring).is_err());
    }

    #[test]
    fn encoding_is_additive() {
        let (enc, ring) = setup();
        let scale = (1u64 << 30) as f64;
        let a = vec![0.25, -1.5, 3.0];
        let b = vec![1.0, 2.0, -0.5];
        let pa = enc.encode(&a, scale, &[0, 1], &ring).unwrap();
        let pb = enc.encode(&b, scale, &[0, 1], &ring).unwrap();
        let sum = pa.add(&pb, &ring);
        let back = enc.decode(&sum.to_centered_i128(&ring), scale);
        for i in 0..3 {
            assert!((back[i] - (a[i] + b[i])).abs() < 1e-5);
        }
    }

    #[test]
    fn automorphism_by_five_rotates_slots_left() {
        let (enc, ring) = setup();
        let scale = (1u64 << 40) as f64;
        let values: Vec<f64> = (0..enc.slot_count()).map(|i| i as f64).collect();
        let poly = enc.encode(&values, scale, &[0, 1], &ring).unwrap();
        let rotated = poly.automorphism(5, &ring);
        let back = enc.decode(&rotated.to_centered_i128(&ring), scale);
        let slots = enc.slot_count();
        for k in 0..slots {
            let expect = values[(k + 1) % slots];
            assert!((back[k] - expect).abs() < 1e-6, "slot {}: {} vs {}", k, back[k], expect);
        }
    }
}
