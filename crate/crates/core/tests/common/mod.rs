#![allow(dead_code)]

use adhesion_core::ParticleSystem;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bare system: positive gaps, masses and velocities of order one.
pub fn random_system(seed: u64, max_n: usize) -> ParticleSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n);
    system_from_rng(&mut rng, n)
}

pub fn system_from_rng(rng: &mut ChaCha8Rng, n: usize) -> ParticleSystem {
    let mut a = Vec::with_capacity(n);
    let mut x = rng.random_range(-1.0..1.0);
    for _ in 0..n {
        a.push(x);
        x += rng.random_range(0.05..1.0);
    }
    let m = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let v = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    ParticleSystem::new(a, m, v).unwrap()
}

prop_compose! {
    pub fn arb_system(max_n: usize)(n in 1..=max_n)(
        start in -1.0f64..1.0,
        gaps in prop::collection::vec(0.05f64..1.0, n),
        m in prop::collection::vec(0.1f64..2.0, n),
        v in prop::collection::vec(-2.0f64..2.0, n),
    ) -> ParticleSystem {
        let mut a = Vec::with_capacity(gaps.len());
        let mut x = start;
        for g in gaps {
            a.push(x);
            x += g;
        }
        ParticleSystem::new(a, m, v).unwrap()
    }
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want} within {tol}"
    );
}
