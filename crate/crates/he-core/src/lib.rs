//! Lattice homomorphic encryption primitives: an RNS CKKS engine for
//! approximate packed arithmetic (encrypted similarity scoring) and a BFV
//! engine for exact integer payloads, plus a common serialization frame.

pub mod arith;
pub mod bfv;
pub mod cipher;
pub mod ckks;
pub mod encoder;
pub mod error;
pub mod frame;
pub mod keys;
pub mod ntt;
pub mod params;
pub mod ring;

pub use bfv::BfvEngine;
pub use cipher::Ciphertext;
pub use ckks::CkksEngine;
pub use encoder::CkksEncoder;
pub use error::{FrameError, HeError, Result};
pub use keys::{GaloisKeys, KeyBundle, KsKey, PublicKey, RelinKey, SecretKey};
pub use params::{HeParams, ParamsProfile, Scheme};
