//! Scalar modular arithmetic over word-sized primes.

#[inline(always)]
pub fn add_mod(a: u64, b: u64, q: u64) -> u64 {
    let s = a + b;
    if s >= q {
        s - q
    } else {
        s
    }
}

#[inline(always)]
pub fn sub_mod(a: u64, b: u64, q: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + q - b
    }
}

#[inline(always)]
pub fn neg_mod(a: u64, q: u64) -> u64 {
    if a == 0 {
        0
    } else {
        q - a
    }
}

#[inline(always)]
pub fn mul_mod(a: u64, b: u64, q: u64) -> u64 {
    ((a as u128 * b as u128) % q as u128) as u64
}

/// Shoup precomputation: floor(b * 2^64 / q), enabling division-free
/// multiplication by a fixed operand `b`.
#[inline(always)]
pub fn shoup_precompute(b: u64, q: u64) -> u64 {
    (((b as u128) << 64) / q as u128) as u64
}

/// Multiply `a` by fixed `b` given its Shoup companion. Result in [0, q).
#[inline(always)]
pub fn mul_mod_shoup(a: u64, b: u64, b_shoup: u64, q: u64) -> u64 {
    let hi = ((a as u128 * b_shoup as u128) >> 64) as u64;
    let r = a
        .wrapping_mul(b)
        .wrapping_sub(hi.wrapping_mul(q));
    if r >= q {
        r - q
    } else {
        r
    }
}

pub fn pow_mod(mut base: u64, mut exp: u64, q: u64) -> u64 {
    let mut acc = 1u64;
    base %= q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, q);
        }
        base = mul_mod(base, base, q);
        exp >>= 1;
    }
    acc
}

/// Inverse modulo a prime.
pub fn inv_mod(a: u64, q: u64) -> u64 {
    pow_mod(a, q - 2, q)
}

/// Deterministic Miller-Rabin, valid for all u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut r = 0u32;
    while d & 1 == 0 {
        d >>= 1;
        r += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..r - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Largest prime p < 2^bits with p ≡ 1 (mod modulus), skipping any in `taken`.
/// Deterministic, so parameter digests are stable across runs.
pub fn find_ntt_prime(bits: u32, modulus: u64, taken: &[u64]) -> u64 {
    assert!(bits >= 20 && bits <= 62);
    let top = 1u64 << bits;
    // Largest candidate ≡ 1 mod `modulus` below 2^bits.
    let mut p = top - (top - 1) % modulus;
    debug_assert_eq!(p % modulus, 1);
    while p > modulus {
        if !taken.contains(&p) && is_prime(p) {
            return p;
        }
        p -= modulus;
    }
    panic!("no NTT prime of {} bits for modulus {}", bits, modulus);
}
