//! Negacyclic number-theoretic transform over Z_q[X]/(X^n + 1).
//!
//! Forward is Cooley-Tukey with bit-reversed powers of the 2n-th root ψ,
//! inverse is Gentleman-Sande; both keep the ψ-twist fused into the
//! butterflies so no separate pre/post scaling pass is needed.

use crate::arith::{add_mod, inv_mod, mul_mod, mul_mod_shoup, pow_mod, shoup_precompute, sub_mod};

pub struct NttTable {
    pub q: u64,
    pub n: usize,
    /// ψ^brv(i), Shoup pairs.
    roots: Vec<u64>,
    roots_shoup: Vec<u64>,
    /// ψ^{-brv(i)}, Shoup pairs.
    inv_roots: Vec<u64>,
    inv_roots_shoup: Vec<u64>,
    n_inv: u64,
    n_inv_shoup: u64,
}

fn bit_reverse(x: usize, log_n: u32) -> usize {
    x.reverse_bits() >> (usize::BITS - log_n)
}

/// Find a primitive 2n-th root of unity mod q (requires q ≡ 1 mod 2n).
fn primitive_root_2n(q: u64, n: usize) -> u64 {
    let two_n = 2 * n as u64;
    assert_eq!((q - 1) % two_n, 0, "prime {} is not NTT-friendly for n={}", q, n);
    let cofactor = (q - 1) / two_n;
    for candidate in 2..q {
        let psi = pow_mod(candidate, cofactor, q);
        // Primitive iff ψ^n = -1.
        if pow_mod(psi, n as u64, q) == q - 1 {
            return psi;
        }
    }
    unreachable!("no primitive root found");
}

impl NttTable {
    pub fn new(q: u64, n: usize) -> Self {
        assert!(n.is_power_of_two());
        let log_n = n.trailing_zeros();
        let psi = primitive_root_2n(q, n);
        let psi_inv = inv_mod(psi, q);

        let mut roots = vec![0u64; n];
        let mut inv_roots = vec![0u64; n];
        let mut pow_f = 1u64;
        let mut pow_i = 1u64;
        let mut tmp_f = vec![0u64; n];
        let mut tmp_i = vec![0u64; n];
        for i in 0..n {
            tmp_f[i] = pow_f;
            tmp_i[i] = pow_i;
            pow_f = mul_mod(pow_f, psi, q);
            pow_i = mul_mod(pow_i, psi_inv, q);
        }
        for i in 0..n {
            roots[i] = tmp_f[bit_reverse(i, log_n)];
            inv_roots[i] = tmp_i[bit_reverse(i, log_n)];
        }
        let roots_shoup = roots.iter().map(|&w| shoup_precompute(w, q)).collect();
        let inv_roots_shoup = inv_roots.iter().map(|&w| shoup_precompute(w, q)).collect();
        let n_inv = inv_mod(n as u64, q);
        let n_inv_shoup = shoup_precompute(n_inv, q);

        NttTable {
            q,
            n,
            roots,
            roots_shoup,
            inv_roots,
            inv_roots_shoup,
            n_inv,
            n_inv_shoup,
        }
    }

    /// In-place forward NTT: coefficient order in, bit-reversed evaluation order out.
    pub fn forward(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.q;
        let n = self.n;
        let mut t = n;
        let mut m = 1;
        while m < n {
            t >>= 1;
            for i in 0..m {
                let w = self.roots[m + i];
                let ws = self.roots_shoup[m + i];
                let j1 = 2 * i * t;
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = mul_mod_shoup(a[j + t], w, ws, q);
                    a[j] = add_mod(u, v, q);
                    a[j + t] = sub_mod(u, v, q);
                }
            }
            m <<= 1;
        }
    }

    /// In-place inverse NTT, returning to coefficient order.
    pub fn inverse(&self, a: &mut [u64]) {
        debug_assert_eq!(a.len(), self.n);
        let q = self.q;
        let n = self.n;
        let mut t = 1;
        let mut m = n;
        while m > 1 {
            let h = m >> 1;
            let mut j1 = 0;
            for i in 0..h {
                let w = self.inv_roots[h + i];
                let ws = self.inv_roots_shoup[h + i];
                for j in j1..j1 + t {
                    let u = a[j];
                    let v = a[j + t];
                    a[j] = add_mod(u, v, q);
                    a[j + t] = mul_mod_shoup(sub_mod(u, v, q), w, ws, q);
                }
                j1 += 2 * t;
            }
            t <<= 1;
            m = h;
        }
        for x in a.iter_mut() {
            *x = mul_mod_shoup(*x, self.n_inv, self.n_inv_shoup, q);
        }
    }
}
