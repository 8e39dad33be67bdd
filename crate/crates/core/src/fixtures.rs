//! Reference initial data with known closed-form flows.

use crate::error::Result;
use crate::model::{discretize, DensityPiece, MassDistribution, ParticleSystem, VelocityProfile};

/// Velocity 1 left of the origin and 0 right of it.
pub fn unit_step() -> VelocityProfile {
    VelocityProfile::step(0.0, 1.0, 0.0)
}

/// Lebesgue mass on `[-half_width, half_width]` with the unit step: a single
/// shock leaves the origin with speed 1/2.
pub fn single_shock(n: usize, half_width: f64) -> Result<ParticleSystem> {
    let w = (-half_width, half_width);
    discretize(&MassDistribution::lebesgue(w.0, w.1)?, &unit_step(), n, w)
}

/// Density 2 on `[-2, 0]` and 1 on `[0, 2]` with the unit step: the shock
/// moves with speed `2 - √2`.
pub fn two_density_shock(n: usize) -> Result<ParticleSystem> {
    let dist = MassDistribution::new(
        vec![
            DensityPiece {
                lo: -2.0,
                hi: 0.0,
                density: 2.0,
            },
            DensityPiece {
                lo: 0.0,
                hi: 2.0,
                density: 1.0,
            },
        ],
        Vec::new(),
        (-2.0, 2.0),
    )?;
    discretize(&dist, &unit_step(), n, (-2.0, 2.0))
}

/// Interpolant of `-arctan` on `[lo, hi]` through `knots` equally spaced
/// points, flat outside.
pub fn neg_arctan(lo: f64, hi: f64, knots: usize) -> Result<VelocityProfile> {
    VelocityProfile::sampled(|x: f64| -x.atan(), lo, hi, knots)
}

/// Lebesgue mass on `[-4, 4]` moving with a smooth strictly decreasing
/// velocity whose knots are finer than the particle spacing.
pub fn smooth_compression(n: usize) -> Result<ParticleSystem> {
    let prof = neg_arctan(-4.0, 4.0, 2 * n + 1)?;
    discretize(&MassDistribution::lebesgue(-4.0, 4.0)?, &prof, n, (-4.0, 4.0))
}
