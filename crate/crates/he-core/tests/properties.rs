//! Property tests for the algebraic contracts of both engines, checked
//! against plaintext arithmetic as the oracle.

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use he_core::frame;
use he_core::{BfvEngine, CkksEngine, HeParams, KeyBundle, ParamsProfile};

fn ckks() -> &'static (CkksEngine, KeyBundle) {
    static CELL: OnceLock<(CkksEngine, KeyBundle)> = OnceLock::new();
    CELL.get_or_init(|| {
        let eng = CkksEngine::new(HeParams::generate(ParamsProfile::TestSmall)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0xC0FFEE);
        let keys = eng.keygen(&mut rng);
        (eng, keys)
    })
}

fn bfv() -> &'static (BfvEngine, KeyBundle) {
    static CELL: OnceLock<(BfvEngine, KeyBundle)> = OnceLock::new();
    CELL.get_or_init(|| {
        let eng = BfvEngine::new(HeParams::generate(ParamsProfile::BfvDefault)).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0xBEEF);
        let keys = eng.keygen(&mut rng);
        (eng, keys)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn ckks_addition_tracks_plaintext(
        seed in any::<u64>(),
        a in proptest::collection::vec(-4.0f64..4.0, 1..72),
        b in proptest::collection::vec(-4.0f64..4.0, 1..72),
    ) {
        let (eng, keys) = ckks();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ca = eng.encrypt(&keys.public, &a, &mut rng).unwrap();
        let cb = eng.encrypt(&keys.public, &b, &mut rng).unwrap();
        let out = eng.decrypt(&keys.secret, &eng.add(&ca, &cb).unwrap()).unwrap();
        for i in 0..a.len().max(b.len()) {
            let expect = a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0);
            prop_assert!((out[i] - expect).abs() < 1e-3);
        }
    }

    #[test]
    fn ckks_multiplication_tracks_plaintext(
        seed in any::<u64>(),
        a in proptest::collection::vec(-2.0f64..2.0, 1..72),
        b in proptest::collection::vec(-2.0f64..2.0, 1..72),
    ) {
        let (eng, keys) = ckks();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ca = eng.encrypt(&keys.public, &a, &mut rng).unwrap();
        let cb = eng.encrypt(&keys.public, &b, &mut rng).unwrap();
        let prod = eng.multiply(&ca, &cb, keys.relin.as_ref().unwrap()).unwrap();
        prop_assert_eq!(prod.level, eng.params.max_level() - 1);
        let out = eng.decrypt(&keys.secret, &prod).unwrap();
        for i in 0..a.len().min(b.len()) {
            prop_assert!((out[i] - a[i] * b[i]).abs() < 1e-3,
                "slot {}: {} vs {}", i, out[i], a[i] * b[i]);
        }
    }

    #[test]
    fn ckks_rotation_permutes_slots(
        seed in any::<u64>(),
        log_step in 0u32..9,
        values in proptest::collection::vec(-4.0f64..4.0, 1..128),
    ) {
        let (eng, keys) = ckks();
        let gk = keys.galois.as_ref().unwrap();
        let slots = eng.params.slot_count();
        let step = 1usize << log_step;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut full = values.clone();
        full.resize(slots, 0.0);
        let ct = eng.encrypt(&keys.public, &full, &mut rng).unwrap();
        let out = eng.decrypt(&keys.secret, &eng.rotate(&ct, step, gk).unwrap()).unwrap();
        for k in 0..slots {
            prop_assert!((out[k] - full[(k + step) % slots]).abs() < 1e-2);
        }
    }

    #[test]
    fn ckks_slot_sum_equals_prefix_sum(
        seed in any::<u64>(),
        values in proptest::collection::vec(-1.0f64..1.0, 1..72),
    ) {
        let (eng, keys) = ckks();
        let gk = keys.galois.as_ref().unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ct = eng.encrypt(&keys.public, &values, &mut rng).unwrap();
        let summed = eng.slot_sum(&ct, values.len(), gk).unwrap();
        let out = eng.decrypt(&keys.secret, &summed).unwrap();
        let expect: f64 = values.iter().sum();
        prop_assert!((out[0] - expect).abs() < 1e-2, "{} vs {}", out[0], expect);
    }

    #[test]
    fn ckks_ciphertext_frame_roundtrip_is_identity(
        seed in any::<u64>(),
        values in proptest::collection::vec(-4.0f64..4.0, 1..72),
    ) {
        let (eng, keys) = ckks();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ct = eng.encrypt(&keys.public, &values, &mut rng).unwrap();
        let bytes = frame::write_ciphertext(&ct, &eng.params);
        let back = frame::read_ciphertext(&bytes, &eng.params).unwrap();
        prop_assert_eq!(&back, &ct);
        prop_assert_eq!(frame::write_ciphertext(&back, &eng.params), bytes);
    }

    #[test]
    fn bfv_roundtrip_is_exact(
        seed in any::<u64>(),
        values in proptest::collection::vec(0u64..65537, 1..256),
    ) {
        let (eng, keys) = bfv();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let ct = eng.encrypt(&keys.public, &values, &mut rng).unwrap();
        let out = eng.decrypt(&keys.secret, &ct).unwrap();
        prop_assert_eq!(&out[..values.len()], &values[..]);
    }
}
