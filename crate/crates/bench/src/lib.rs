//! Inputs shared by the benchmarks.

use adhesion_core::fixtures::single_shock;
use adhesion_core::ParticleSystem;

/// Single-shock system with `n` particles on `[-2, 2]`.
pub fn shock_system(n: usize) -> ParticleSystem {
    single_shock(n, 2.0).expect("valid fixture")
}

/// `count` equally spaced times in `[0, end]`.
pub fn time_grid(end: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| end * k as f64 / (count - 1) as f64).collect()
}
