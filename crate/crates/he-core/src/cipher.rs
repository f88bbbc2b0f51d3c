use crate::params::Scheme;
use crate::ring::Poly;

#[derive(Debug, Clone, PartialEq)]
pub struct Ciphertext {
    pub scheme: Scheme,
    /// Polynomial parts in coefficient form; always two after relinearization.
    pub parts: Vec<Poly>,
    /// Remaining multiplicative depth: index of the last active data prime.
    pub level: usize,
    /// CKKS encoding scale; 0.0 for BFV.
    pub scale: f64,
}
