//! Smoke test at production-size parameters; slow, so ignored by default
//! and exercised via the system-level acceptance suite instead.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use he_core::{CkksEngine, HeParams, ParamsProfile};

#[test]
#[ignore]
fn full_size_score_pipeline() {
    let eng = CkksEngine::new(HeParams::generate(ParamsProfile::CkksDefault)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let t0 = Instant::now();
    let keys = eng.keygen(&mut rng);
    println!("keygen: {:?}", t0.elapsed());

    let mut q = vec![0.0; 72];
    q[5] = 1.0;
    let r: Vec<f64> = (0..72).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
    let t1 = Instant::now();
    let cq = eng.encrypt(&keys.public, &q, &mut rng).unwrap();
    let cr = eng.encrypt(&keys.public, &r, &mut rng).unwrap();
    println!("2x encrypt: {:?}", t1.elapsed());

    let rk = keys.relin.as_ref().unwrap();
    let gk = keys.galois.as_ref().unwrap();
    let t2 = Instant::now();
    let prod = eng.multiply(&cq, &cr, rk).unwrap();
    let score = eng.slot_sum(&prod, 72, gk).unwrap();
    println!("multiply + slot_sum (one record score): {:?}", t2.elapsed());

    let out = eng.decrypt(&keys.secret, &score).unwrap();
    println!("score = {}, err = {:e}", out[0], (out[0] - 1.0).abs());
    assert!((out[0] - 1.0).abs() < 1e-4);
}

#[test]
#[ignore]
fn full_size_score_pipeline_mod_dropped() {
    let eng = CkksEngine::new(HeParams::generate(ParamsProfile::CkksDefault)).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let keys = eng.keygen(&mut rng);

    let mut q = vec![0.0; 72];
    q[5] = 1.0;
    let r: Vec<f64> = (0..72).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
    let cq = eng.mod_drop(&eng.encrypt(&keys.public, &q, &mut rng).unwrap(), 1).unwrap();
    let cr = eng.mod_drop(&eng.encrypt(&keys.public, &r, &mut rng).unwrap(), 1).unwrap();

    let rk = keys.relin.as_ref().unwrap();
    let gk = keys.galois.as_ref().unwrap();
    let t2 = Instant::now();
    let iters = 10;
    let mut score = None;
    for _ in 0..iters {
        let prod = eng.multiply(&cq, &cr, rk).unwrap();
        score = Some(eng.slot_sum(&prod, 72, gk).unwrap());
    }
    println!("score at level 1: {:?}/iter", t2.elapsed() / iters);

    let out = eng.decrypt(&keys.secret, &score.unwrap()).unwrap();
    println!("score = {}, err = {:e}", out[0], (out[0] - 1.0).abs());
    assert!((out[0] - 1.0).abs() < 1e-4);
}
