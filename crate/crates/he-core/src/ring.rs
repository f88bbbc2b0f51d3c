//! RNS polynomials over Z_q[X]/(X^n + 1) for a chain of NTT-friendly primes.
//!
//! A polynomial carries residues for an explicit subset of the chain
//! (`chain_idx`): ciphertexts use a prefix of the data primes, key material
//! uses the full chain including the key-switching prime, and key-switching
//! intermediates use a prefix plus the special prime.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::arith::{add_mod, inv_mod, mul_mod, neg_mod, sub_mod};
use crate::ntt::NttTable;
use crate::params::HeParams;

/// Error distribution width, the conventional RLWE choice.
const NOISE_STDDEV: f64 = 3.2;

pub struct RingContext {
    pub n: usize,
    pub primes: Vec<u64>,
    pub tables: Vec<NttTable>,
}

impl RingContext {
    pub fn new(params: &HeParams) -> Self {
        let n = params.ring_degree;
        let tables = params.primes.iter().map(|&q| NttTable::new(q, n)).collect();
        RingContext {
            n,
            primes: params.primes.clone(),
            tables,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    /// Indices into the parameter prime chain, one per residue row.
    pub chain_idx: Vec<usize>,
    /// residues[i][j] = coefficient j mod primes[chain_idx[i]].
    pub residues: Vec<Vec<u64>>,
    pub ntt_form: bool,
}

impl Poly {
    pub fn zero(n: usize, chain_idx: &[usize], ntt_form: bool) -> Poly {
        Poly {
            chain_idx: chain_idx.to_vec(),
            residues: vec![vec![0u64; n]; chain_idx.len()],
            ntt_form,
        }
    }

    pub fn n(&self) -> usize {
        self.residues[0].len()
    }

    /// Lift signed coefficients into every residue ring.
    pub fn from_signed(coeffs: &[i64], chain_idx: &[usize], ring: &RingContext) -> Poly {
        let residues = chain_idx
            .iter()
            .map(|&ci| {
                let q = ring.primes[ci];
                coeffs
                    .iter()
                    .map(|&c| {
                        if c >= 0 {
                            (c as u64) % q
                        } else {
                            q - ((c.unsigned_abs()) % q)
                        }
                    })
                    .map(|v| if v == q { 0 } else { v })
                    .collect()
            })
            .collect();
        Poly {
            chain_idx: chain_idx.to_vec(),
            residues,
            ntt_form: false,
        }
    }

    pub fn sample_uniform<R: Rng>(rng: &mut R, n: usize, chain_idx: &[usize], ring: &RingContext) -> Poly {
        let residues = chain_idx
            .iter()
            .map(|&ci| {
                let q = ring.primes[ci];
                (0..n).map(|_| rng.gen_range(0..q)).collect()
            })
            .collect();
        Poly {
            chain_idx: chain_idx.to_vec(),
            residues,
            ntt_form: false,
        }
    }

    /// Uniform ternary {-1, 0, 1} coefficients.
    pub fn sample_ternary<R: Rng>(rng: &mut R, n: usize, chain_idx: &[usize], ring: &RingContext) -> Poly {
        let coeffs: Vec<i64> = (0..n).map(|_| rng.gen_range(-1i64..=1)).collect();
        Poly::from_signed(&coeffs, chain_idx, ring)
    }

    /// Centered discrete gaussian, sigma = 3.2.
    pub fn sample_gaussian<R: Rng>(rng: &mut R, n: usize, chain_idx: &[usize], ring: &RingContext) -> Poly {
        let normal = Normal::new(0.0, NOISE_STDDEV).unwrap();
        let coeffs: Vec<i64> = (0..n).map(|_| normal.sample(rng).round() as i64).collect();
        Poly::from_signed(&coeffs, chain_idx, ring)
    }

    fn assert_compatible(&self, other: &Poly) {
        debug_assert_eq!(self.chain_idx, other.chain_idx, "prime chain mismatch");
        debug_assert_eq!(self.ntt_form, other.ntt_form, "domain mismatch");
    }

    pub fn add(&self, other: &Poly, ring: &RingContext) -> Poly {
        self.assert_compatible(other);
        let residues = self
            .chain_idx
            .iter()
            .zip(self.residues.iter().zip(&other.residues))
            .map(|(&ci, (a, b))| {
                let q = ring.primes[ci];
                a.iter().zip(b).map(|(&x, &y)| add_mod(x, y, q)).collect()
            })
            .collect();
        Poly {
            chain_idx: self.chain_idx.clone(),
            residues,
            ntt_form: self.ntt_form,
        }
    }

    pub fn add_assign(&mut self, other: &Poly, ring: &RingContext) {
        self.assert_compatible(other);
        for (i, &ci) in self.chain_idx.iter().enumerate() {
            let q = ring.primes[ci];
            for (x, &y) in self.residues[i].iter_mut().zip(&other.residues[i]) {
                *x = add_mod(*x, y, q);
            }
        }
    }

    pub fn sub(&self, other: &Poly, ring: &RingContext) -> Poly {
        self.assert_compatible(other);
        let residues = self
            .chain_idx
            .iter()
            .zip(self.residues.iter().zip(&other.residues))
            .map(|(&ci, (a, b))| {
                let q = ring.primes[ci];
                a.iter().zip(b).map(|(&x, &y)| sub_mod(x, y, q)).collect()
            })
            .collect();
        Poly {
            chain_idx: self.chain_idx.clone(),
            residues,
            ntt_form: self.ntt_form,
        }
    }

    pub fn neg(&self, ring: &RingContext) -> Poly {
        let residues = self
            .chain_idx
            .iter()
            .zip(&self.residues)
            .map(|(&ci, a)| {
                let q = ring.primes[ci];
                a.iter().map(|&x| neg_mod(x, q)).collect()
            })
            .collect();
        Poly {
            chain_idx: self.chain_idx.clone(),
            residues,
            ntt_form: self.ntt_form,
        }
    }

    pub fn ntt(&mut self, ring: &RingContext) {
        debug_assert!(!self.ntt_form);
        for (i, &ci) in self.chain_idx.iter().enumerate() {
            ring.tables[ci].forward(&mut self.residues[i]);
        }
        self.ntt_form = true;
    }

    pub fn intt(&mut self, ring: &RingContext) {
        debug_assert!(self.ntt_form);
        for (i, &ci) in self.chain_idx.iter().enumerate() {
            ring.tables[ci].inverse(&mut self.residues[i]);
        }
        self.ntt_form = false;
    }

    pub fn to_ntt(&self, ring: &RingContext) -> Poly {
        let mut p = self.clone();
        if !p.ntt_form {
            p.ntt(ring);
        }
        p
    }

    pub fn to_coeff(&self, ring: &RingContext) -> Poly {
        let mut p = self.clone();
        if p.ntt_form {
            p.intt(ring);
        }
        p
    }

    /// Slot-wise product; both operands must be in NTT form.
    pub fn mul_pointwise(&self, other: &Poly, ring: &RingContext) -> Poly {
        self.assert_compatible(other);
        debug_assert!(self.ntt_form);
        let residues = self
            .chain_idx
            .iter()
            .zip(self.residues.iter().zip(&other.residues))
            .map(|(&ci, (a, b))| {
                let q = ring.primes[ci];
                a.iter().zip(b).map(|(&x, &y)| mul_mod(x, y, q)).collect()
            })
            .collect();
        Poly {
            chain_idx: self.chain_idx.clone(),
            residues,
            ntt_form: true,
        }
    }

    pub fn mul_add_assign(&mut self, a: &Poly, b: &Poly, ring: &RingContext) {
        a.assert_compatible(b);
        debug_assert!(self.ntt_form && a.ntt_form);
        debug_assert_eq!(self.chain_idx, a.chain_idx);
        for (i, &ci) in self.chain_idx.iter().enumerate() {
            let q = ring.primes[ci];
            for j in 0..self.residues[i].len() {
                let prod = mul_mod(a.residues[i][j], b.residues[i][j], q);
                self.residues[i][j] = add_mod(self.residues[i][j], prod, q);
            }
        }
    }

    /// Full negacyclic product of two coefficient-form polynomials.
    pub fn mul(&self, other: &Poly, ring: &RingContext) -> Poly {
        let fa = self.to_ntt(ring);
        let fb = other.to_ntt(ring);
        let mut out = fa.mul_pointwise(&fb, ring);
        out.intt(ring);
        out
    }

    /// Multiply every residue row by a per-row scalar.
    pub fn scale_rows(&self, scalars: &[u64], ring: &RingContext) -> Poly {
        debug_assert_eq!(scalars.len(), self.chain_idx.len());
        let residues = self
            .chain_idx
            .iter()
            .zip(self.residues.iter().zip(scalars))
            .map(|(&ci, (a, &s))| {
                let q = ring.primes[ci];
                a.iter().map(|&x| mul_mod(x, s, q)).collect()
            })
            .collect();
        Poly {
            chain_idx: self.chain_idx.clone(),
            residues,
            ntt_form: self.ntt_form,
        }
    }

    /// The Galois automorphism X -> X^g (g odd), coefficient form only.
    /// Coefficient i lands at (i·g mod 2n), negated when it wraps past n.
    pub fn automorphism(&self, g: usize, ring: &RingContext) -> Poly {
        debug_assert!(!self.ntt_form);
        debug_assert!(g % 2 == 1);
        let n = self.n();
        let two_n = 2 * n;
        let residues = self
            .chain_idx
            .iter()
            .zip(&self.residues)
            .map(|(&ci, a)| {
                let q = ring.primes[ci];
                let mut out = vec![0u64; n];
                for (i, &c) in a.iter().enumerate() {
                    let k = (i * g) % two_n;
                    if k < n {
                        out[k] = c;
                    } else {
                        out[k - n] = neg_mod(c, q);
                    }
                }
                out
            })
            .collect();
        Poly {
            chain_idx: self.chain_idx.clone(),
            residues,
            ntt_form: false,
        }
    }

    /// Restrict to a subset of chain indices (must be present).
    pub fn restrict(&self, keep: &[usize]) -> Poly {
        let residues = keep
            .iter()
            .map(|k| {
                let pos = self
                    .chain_idx
                    .iter()
                    .position(|ci| ci == k)
                    .expect("chain index not present");
                self.residues[pos].clone()
            })
            .collect();
        Poly {
            chain_idx: keep.to_vec(),
            residues,
            ntt_form: self.ntt_form,
        }
    }

    /// Drop the final chain prime with rounding: computes round(c / q_last)
    /// over the remaining primes. Used for both CKKS rescale and the
    /// mod-down step after key switching. Coefficient form only.
    pub fn drop_last_rounded(&self, ring: &RingContext) -> Poly {
        debug_assert!(!self.ntt_form);
        let k = self.chain_idx.len();
        assert!(k >= 2, "cannot drop the only prime");
        let last_ci = self.chain_idx[k - 1];
        let q_last = ring.primes[last_ci];
        let half = q_last / 2;
        let n = self.n();

        let mut out = Poly::zero(n, &self.chain_idx[..k - 1], false);
        for (i, &ci) in out.chain_idx.clone().iter().enumerate() {
            let q = ring.primes[ci];
            let q_last_inv = inv_mod(q_last % q, q);
            let row = &self.residues[i];
            let last = &self.residues[k - 1];
            let dst = &mut out.residues[i];
            for j in 0..n {
                // Centered lift of the dropped residue.
                let d = last[j];
                let d_mod_q = if d > half {
                    // negative representative: -(q_last - d)
                    let mag = (q_last - d) % q;
                    neg_mod(mag, q)
                } else {
                    d % q
                };
                let diff = sub_mod(row[j], d_mod_q, q);
                dst[j] = mul_mod(diff, q_last_inv, q);
            }
        }
        out
    }

    /// Centered CRT reconstruction. Exact for contents small relative to
    /// the full modulus; garbage contents may wrap (which is fine — CKKS
    /// cannot detect noise overflow by design).
    pub fn to_centered_i128(&self, ring: &RingContext) -> Vec<i128> {
        debug_assert!(!self.ntt_form);
        let k = self.chain_idx.len();
        let n = self.n();
        let primes: Vec<u64> = self.chain_idx.iter().map(|&ci| ring.primes[ci]).collect();
        // Garner mixed-radix digits, then Horner from the top with the top
        // digit centered.
        let mut inv_table = vec![vec![0u64; k]; k];
        for i in 1..k {
            for j in 0..i {
                inv_table[i][j] = inv_mod(primes[j] % primes[i], primes[i]);
            }
        }
        let mut out = Vec::with_capacity(n);
        let mut digits = vec![0u64; k];
        for j in 0..n {
            digits[0] = self.residues[0][j];
            for i in 1..k {
                let qi = primes[i];
                let mut u = self.residues[i][j];
                for l in 0..i {
                    u = sub_mod(u, digits[l] % qi, qi);
                    u = mul_mod(u, inv_table[i][l], qi);
                }
                digits[i] = u;
            }
            let top = digits[k - 1];
            let mut acc: i128 = if top > primes[k - 1] / 2 {
                top as i128 - primes[k - 1] as i128
            } else {
                top as i128
            };
            for i in (0..k - 1).rev() {
                acc = acc
                    .wrapping_mul(primes[i] as i128)
                    .wrapping_add(digits[i] as i128);
            }
            out.push(acc);
        }
        out
    }
}
