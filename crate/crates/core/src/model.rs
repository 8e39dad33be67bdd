//! Initial data of the adhesion model and its finite particle discretization.
//!
//! The mass distribution is a finite sum of constant-density pieces and
//! atoms, observed through a window. Outside the window the line is treated
//! as filled with unit density, so the model never has vacuum at infinity.
//! The velocity profile is piecewise affine with flat tails and may jump
//! downward at its breakpoints.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when a computed position must coincide with a
/// breakpoint or another particle.
pub const POSITION_RTOL: f64 = 1e-9;

/// Relative half-distance between the two particles that stand in for a
/// velocity jump.
pub const SPLIT_RTOL: f64 = 1e-12;

/// Velocity differences below this relative size are rounding, not jumps.
const JUMP_RTOL: f64 = 1e-12;

/// `hi` exceeds `lo` by more than rounding.
fn exceeds(hi: f64, lo: f64) -> bool {
    hi - lo > JUMP_RTOL * (1.0 + hi.abs().max(lo.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

/// Initial mass measure: piecewise-constant density plus finitely many atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct MassDistribution {
    pieces: Vec<DensityPiece>,
    atoms: Vec<Atom>,
    window: (f64, f64),
}

impl MassDistribution {
    pub fn new(pieces: Vec<DensityPiece>, atoms: Vec<Atom>, window: (f64, f64)) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Structural(format!("window [{lo}, {hi}] is empty")));
        }
        for p in &pieces {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi) {
                return Err(Error::Structural(format!(
                    "density piece [{}, {}) is empty",
                    p.lo, p.hi
                )));
            }
            if !(p.density.is_finite() && p.density >= 0.0) {
                return Err(Error::Structural(format!(
                    "density {} on [{}, {}) is negative",
                    p.density, p.lo, p.hi
                )));
            }
        }
        for w in pieces.windows(2) {
            if w[0].hi > w[1].lo {
                return Err(Error::Structural(format!(
                    "density pieces [{}, {}) and [{}, {}) overlap or are unsorted",
                    w[0].lo, w[0].hi, w[1].lo, w[1].hi
                )));
            }
        }
        for a in &atoms {
            if !(a.position.is_finite() && a.mass.is_finite() && a.mass > 0.0) {
                return Err(Error::Structural(format!(
                    "atom at {} has non-positive mass {}",
                    a.position, a.mass
                )));
            }
        }
        for w in atoms.windows(2) {
            if w[0].position >= w[1].position {
                return Err(Error::Structural(format!(
                    "atoms at {} and {} are unsorted or repeated",
                    w[0].position, w[1].position
                )));
            }
        }
        Ok(Self {
            pieces,
            atoms,
            window,
        })
    }

    /// Lebesgue measure on `[lo, hi]`.
    pub fn lebesgue(lo: f64, hi: f64) -> Result<Self> {
        Self::new(
            vec![DensityPiece {
                lo,
                hi,
                density: 1.0,
            }],
            Vec::new(),
            (lo, hi),
        )
    }

    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// Density at `x`; unit filler outside the window.
    pub fn density_at(&self, x: f64) -> f64 {
        if x < self.window.0 || x > self.window.1 {
            return 1.0;
        }
        self.pieces
            .iter()
            .find(|p| p.lo <= x && x < p.hi)
            .map_or(0.0, |p| p.density)
    }

    /// Mass of the closed interval `[lo, hi]`, both ends clipped to the window.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(self.window.0);
        let hi = hi.min(self.window.1);
        if lo > hi {
            return 0.0;
        }
        let dens: f64 = self
            .pieces
            .iter()
            .map(|p| p.density * (p.hi.min(hi) - p.lo.max(lo)).max(0.0))
            .sum();
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| a.position >= lo && a.position <= hi)
            .map(|a| a.mass)
            .sum();
        dens + atoms
    }

    /// Sub-intervals of the window carrying no density.
    pub fn vacuum_gaps(&self) -> Vec<(f64, f64)> {
        let (wlo, whi) = self.window;
        let mut gaps = Vec::new();
        let mut cursor = wlo;
        for p in self.pieces.iter().filter(|p| p.density > 0.0) {
            if p.hi <= cursor {
                continue;
            }
            if p.lo > cursor {
                gaps.push((cursor, p.lo.min(whi)));
            }
            cursor = p.hi;
            if cursor >= whi {
                break;
            }
        }
        if cursor < whi {
            gaps.push((cursor, whi));
        }
        gaps.retain(|g| g.1 > g.0);
        gaps
    }

    /// True when the distribution is the Lebesgue measure on its window.
    pub fn is_lebesgue(&self) -> bool {
        self.atoms.is_empty()
            && self.pieces.iter().all(|p| p.density == 1.0)
            && self.vacuum_gaps().is_empty()
    }

    fn has_mass_left_of(&self, x: f64) -> bool {
        if x <= self.window.0 || x > self.window.1 {
            return true;
        }
        self.pieces
            .iter()
            .any(|p| p.density > 0.0 && p.lo < x && x <= p.hi)
    }

    fn has_mass_right_of(&self, x: f64) -> bool {
        if x < self.window.0 || x >= self.window.1 {
            return true;
        }
        self.pieces
            .iter()
            .any(|p| p.density > 0.0 && p.lo <= x && x < p.hi)
    }

    /// Density pieces and atoms clipped to `[lo, hi]`, in left-to-right order.
    fn segments_in(&self, lo: f64, hi: f64) -> Vec<MassSegment> {
        let mut segs: Vec<MassSegment> = Vec::new();
        for p in &self.pieces {
            let l = p.lo.max(lo);
            let r = p.hi.min(hi);
            if r > l && p.density > 0.0 {
                segs.push(MassSegment::Density {
                    lo: l,
                    hi: r,
                    density: p.density,
                });
            }
        }
        for a in &self.atoms {
            if a.position >= lo && a.position <= hi {
                segs.push(MassSegment::Atom {
                    position: a.position,
                    mass: a.mass,
                });
            }
        }
        // An atom sitting on the left end of a piece comes before it.
        segs.sort_by(|x, y| x.sort_key().partial_cmp(&y.sort_key()).unwrap());
        segs
    }
}

#[derive(Debug, Clone, Copy)]
enum MassSegment {
    Density { lo: f64, hi: f64, density: f64 },
    Atom { position: f64, mass: f64 },
}

impl MassSegment {
    fn sort_key(&self) -> (f64, u8) {
        match *self {
            MassSegment::Atom { position, .. } => (position, 0),
            MassSegment::Density { lo, .. } => (lo, 1),
        }
    }

    fn mass(&self) -> f64 {
        match *self {
            MassSegment::Density { lo, hi, density } => density * (hi - lo),
            MassSegment::Atom { mass, .. } => mass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub slope: f64,
    pub intercept: f64,
}

impl Affine {
    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }

    /// Integral over `[p, q]`.
    fn integral(&self, p: f64, q: f64) -> f64 {
        0.5 * self.slope * (q - p) * (q + p) + self.intercept * (q - p)
    }
}

/// Piecewise-affine initial velocity with flat outer segments.
///
/// `segments[j]` applies strictly between `breakpoints[j - 1]` and
/// `breakpoints[j]`. The value at a breakpoint is either given explicitly or
/// is the midpoint of the two one-sided limits.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityProfile {
    breakpoints: Vec<f64>,
    segments: Vec<Affine>,
    point_values: Vec<Option<f64>>,
    /// Antiderivative at each breakpoint, zero at the first one.
    primitive_at: Vec<f64>,
}

impl VelocityProfile {
    pub fn new(breakpoints: Vec<f64>, segments: Vec<Affine>) -> Result<Self> {
        let k = breakpoints.len();
        Self::with_point_values(breakpoints, segments, vec![None; k])
    }

    pub fn with_point_values(
        breakpoints: Vec<f64>,
        segments: Vec<Affine>,
        point_values: Vec<Option<f64>>,
    ) -> Result<Self> {
        if segments.len() != breakpoints.len() + 1 {
            return Err(Error::Structural(format!(
                "{} breakpoints need {} segments, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                segments.len()
            )));
        }
        if point_values.len() != breakpoints.len() {
            return Err(Error::Structural(
                "one point value slot per breakpoint is required".into(),
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite())
            || segments
                .iter()
                .any(|s| !s.slope.is_finite() || !s.intercept.is_finite())
        {
            return Err(Error::Structural("non-finite velocity data".into()));
        }
        for w in breakpoints.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Structural(format!(
                    "breakpoints {} and {} are not strictly increasing",
                    w[0], w[1]
                )));
            }
        }
        if segments[0].slope != 0.0 || segments[segments.len() - 1].slope != 0.0 {
            return Err(Error::Structural(
                "outer velocity segments must be flat".into(),
            ));
        }
        let mut primitive_at = Vec::with_capacity(breakpoints.len());
        for (j, &b) in breakpoints.iter().enumerate() {
            if j == 0 {
                primitive_at.push(0.0);
            } else {
                let prev = primitive_at[j - 1] + segments[j].integral(breakpoints[j - 1], b);
                primitive_at.push(prev);
            }
        }
        Ok(Self {
            breakpoints,
            segments,
            point_values,
            primitive_at,
        })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(
            Vec::new(),
            vec![Affine {
                slope: 0.0,
                intercept: c,
            }],
        )
        .expect("constant profile is valid")
    }

    /// `left` up to and including `at`, `right` after it.
    pub fn step(at: f64, left: f64, right: f64) -> Self {
        Self::with_point_values(
            vec![at],
            vec![
                Affine {
                    slope: 0.0,
                    intercept: left,
                },
                Affine {
                    slope: 0.0,
                    intercept: right,
                },
            ],
            vec![Some(left)],
        )
        .expect("step profile is valid")
    }

    /// Continuous interpolant through `(x, u)` knots, flat beyond the ends.
    pub fn from_knots(knots: &[(f64, f64)]) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Structural("no knots".into()));
        }
        let breakpoints: Vec<f64> = knots.iter().map(|k| k.0).collect();
        let mut segments = Vec::with_capacity(knots.len() + 1);
        segments.push(Affine {
            slope: 0.0,
            intercept: knots[0].1,
        });
        for w in knots.windows(2) {
            let (x0, u0) = w[0];
            let (x1, u1) = w[1];
            let slope = (u1 - u0) / (x1 - x0);
            segments.push(Affine {
                slope,
                intercept: u0 - slope * x0,
            });
        }
        segments.push(Affine {
            slope: 0.0,
            intercept: knots[knots.len() - 1].1,
        });
        Self::new(breakpoints, segments)
    }

    /// Samples `f` at `count` equally spaced knots of `[lo, hi]`.
    pub fn sampled(f: impl Fn(f64) -> f64, lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count < 2 || !(lo < hi) {
            return Err(Error::InvalidArgument(
                "sampling needs at least two knots on a non-empty range".into(),
            ));
        }
        let h = (hi - lo) / (count - 1) as f64;
        let knots: Vec<(f64, f64)> = (0..count)
            .map(|i| {
                let x = if i + 1 == count { hi } else { lo + h * i as f64 };
                (x, f(x))
            })
            .collect();
        Self::from_knots(&knots)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Affine] {
        &self.segments
    }

    pub fn point_values(&self) -> &[Option<f64>] {
        &self.point_values
    }

    fn breakpoint_index(&self, x: f64) -> Option<usize> {
        self.breakpoints
            .binary_search_by(|b| b.total_cmp(&x))
            .ok()
    }

    pub fn left_limit(&self, x: f64) -> f64 {
        let j = self.breakpoints.partition_point(|&b| b < x);
        self.segments[j].eval(x)
    }

    pub fn right_limit(&self, x: f64) -> f64 {
        let j = self.breakpoints.partition_point(|&b| b <= x);
        self.segments[j].eval(x)
    }

    pub fn value(&self, x: f64) -> f64 {
        match self.breakpoint_index(x) {
            Some(j) => self.point_values[j]
                .unwrap_or_else(|| 0.5 * (self.left_limit(x) + self.right_limit(x))),
            None => self.right_limit(x),
        }
    }

    /// Breakpoint within `tol` of `x` whose one-sided limits differ.
    pub fn jump_near(&self, x: f64, tol: f64) -> Option<f64> {
        let j = self.breakpoints.partition_point(|&b| b < x - tol);
        let b = *self.breakpoints.get(j)?;
        if (b - x).abs() <= tol && exceeds(self.left_limit(b), self.right_limit(b)) {
            Some(b)
        } else {
            None
        }
    }

    /// An antiderivative of the profile.
    pub fn primitive(&self, x: f64) -> f64 {
        if self.breakpoints.is_empty() {
            return self.segments[0].integral(0.0, x);
        }
        let j = self.breakpoints.partition_point(|&b| b <= x);
        if j == 0 {
            -self.segments[0].integral(x, self.breakpoints[0])
        } else {
            self.primitive_at[j - 1] + self.segments[j].integral(self.breakpoints[j - 1], x)
        }
    }

    /// Smallest and largest values taken, one-sided limits included.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut take = |u: f64| {
            lo = lo.min(u);
            hi = hi.max(u);
        };
        take(self.segments[0].intercept);
        take(self.segments[self.segments.len() - 1].intercept);
        for (j, &b) in self.breakpoints.iter().enumerate() {
            take(self.left_limit(b));
            take(self.right_limit(b));
            if let Some(v) = self.point_values[j] {
                take(v);
            }
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationSite {
    Breakpoint,
    Atom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NjcViolation {
    pub position: f64,
    pub site: ViolationSite,
    pub left: f64,
    pub value: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub violations: Vec<NjcViolation>,
    /// Zero-density gaps inside the window. Reported, not judged.
    pub vacuum: Vec<(f64, f64)>,
}

/// Checks the negative jump condition `u⁻ ≥ u ≥ u⁺` wherever matter sits on
/// the corresponding side.
pub fn validate_njc(dist: &MassDistribution, prof: &VelocityProfile) -> ValidationReport {
    let mut violations = Vec::new();
    for &b in prof.breakpoints() {
        let left = prof.left_limit(b);
        let right = prof.right_limit(b);
        let value = prof.value(b);
        let has_left = dist.has_mass_left_of(b);
        let has_right = dist.has_mass_right_of(b);
        let bad = (has_left && has_right && exceeds(right, left))
            || (has_left && exceeds(value, left))
            || (has_right && exceeds(right, value));
        if bad {
            violations.push(NjcViolation {
                position: b,
                site: ViolationSite::Breakpoint,
                left,
                value,
                right,
            });
        }
    }
    for atom in dist.atoms() {
        let x = atom.position;
        let left = prof.left_limit(x);
        let right = prof.right_limit(x);
        let value = prof.value(x);
        let bad = (dist.has_mass_left_of(x) && exceeds(value, left))
            || (dist.has_mass_right_of(x) && exceeds(right, value));
        if bad && !violations.iter().any(|v| v.position == x) {
            violations.push(NjcViolation {
                position: x,
                site: ViolationSite::Atom,
                left,
                value,
                right,
            });
        }
    }
    ValidationReport {
        ok: violations.is_empty(),
        violations,
        vacuum: dist.vacuum_gaps(),
    }
}

/// The stieltjes measure `-du₀` of a non-increasing profile.
///
/// When `window` is `None` the window is the hull of the breakpoints, padded
/// by one unit on each side if that hull is a single point.
pub fn stieltjes_distribution_from(
    prof: &VelocityProfile,
    window: Option<(f64, f64)>,
) -> Result<MassDistribution> {
    let bps = prof.breakpoints();
    if bps.is_empty() {
        return Err(Error::Unsupported(
            "constant profile has an empty stieltjes measure".into(),
        ));
    }
    let mut pieces = Vec::new();
    let mut atoms = Vec::new();
    for (j, seg) in prof.segments().iter().enumerate() {
        if seg.slope > 0.0 {
            return Err(Error::Unsupported(format!(
                "profile increases on segment {j} (slope {})",
                seg.slope
            )));
        }
        if seg.slope < 0.0 {
            pieces.push(DensityPiece {
                lo: bps[j - 1],
                hi: bps[j],
                density: -seg.slope,
            });
        }
    }
    for &b in bps {
        let (left, right) = (prof.left_limit(b), prof.right_limit(b));
        let jump = left - right;
        if exceeds(right, left) {
            return Err(Error::Unsupported(format!("profile jumps upward at {b}")));
        }
        if exceeds(left, right) {
            atoms.push(Atom {
                position: b,
                mass: jump,
            });
        }
    }
    let window = window.unwrap_or_else(|| {
        let (lo, hi) = (bps[0], bps[bps.len() - 1]);
        if lo == hi {
            (lo - 1.0, hi + 1.0)
        } else {
            (lo, hi)
        }
    });
    MassDistribution::new(pieces, atoms, window)
}

/// The initial data a particle system was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub distribution: MassDistribution,
    pub profile: VelocityProfile,
    pub window: (f64, f64),
}

impl Provenance {
    /// The distribution restricted to the discretized window is Lebesgue measure.
    pub fn is_lebesgue(&self) -> bool {
        let (lo, hi) = self.window;
        MassDistribution::new(
            self.distribution.pieces().to_vec(),
            self.distribution.atoms().to_vec(),
            (lo, hi),
        )
        .map(|d| d.is_lebesgue())
        .unwrap_or(false)
    }
}

/// Finite sticky-particle system: strictly increasing positions, positive
/// masses, and initial velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    a: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    window: (f64, f64),
    provenance: Option<Arc<Provenance>>,
}

impl ParticleSystem {
    pub fn new(a: Vec<f64>, m: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let window = match (a.first(), a.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => (0.0, 0.0),
        };
        Self::with_window(a, m, v, window)
    }

    pub fn with_window(a: Vec<f64>, m: Vec<f64>, v: Vec<f64>, window: (f64, f64)) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::Structural("particle system is empty".into()));
        }
        if a.len() != m.len() || a.len() != v.len() {
            return Err(Error::Structural(format!(
                "array lengths differ: {} positions, {} masses, {} velocities",
                a.len(),
                m.len(),
                v.len()
            )));
        }
        if a.iter().chain(&m).chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::Structural("non-finite particle data".into()));
        }
        if let Some(w) = a.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::Structural(format!(
                "positions {} and {} are not strictly increasing",
                w[0], w[1]
            )));
        }
        if let Some(bad) = m.iter().find(|&&x| x <= 0.0) {
            return Err(Error::Structural(format!("non-positive mass {bad}")));
        }
        Ok(Self {
            a,
            m,
            v,
            window,
            provenance: None,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.a
    }

    pub fn masses(&self) -> &[f64] {
        &self.m
    }

    pub fn velocities(&self) -> &[f64] {
        &self.v
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_deref()
    }

    /// Length scale for tolerances; never zero.
    pub fn width(&self) -> f64 {
        let w = self.window.1 - self.window.0;
        let span = self.a[self.a.len() - 1] - self.a[0];
        let w = w.max(span);
        if w > 0.0 {
            w
        } else {
            1.0
        }
    }

    /// Absolute tolerance under which two barycenters count as touching.
    pub fn merge_tol(&self) -> f64 {
        1e-12 * self.width()
    }

    /// Absolute tolerance for position equality.
    pub fn position_tol(&self) -> f64 {
        POSITION_RTOL * self.width()
    }

    pub fn total_mass(&self) -> f64 {
        self.m.iter().sum()
    }

    pub fn total_momentum(&self) -> f64 {
        self.m.iter().zip(&self.v).map(|(m, v)| m * v).sum()
    }

    /// Particles with indices in `range`, provenance dropped.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::with_window(
            self.a[range.clone()].to_vec(),
            self.m[range.clone()].to_vec(),
            self.v[range].to_vec(),
            self.window,
        )
    }

    /// Same particles with every velocity replaced.
    pub fn with_velocities(&self, v: Vec<f64>) -> Result<Self> {
        let mut out = Self::with_window(self.a.clone(), self.m.clone(), v, self.window)?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    /// Index of the particle closest to `x`, ties going left.
    pub fn nearest_particle(&self, x: f64) -> usize {
        let j = self.a.partition_point(|&p| p < x);
        if j == 0 {
            0
        } else if j == self.a.len() || x - self.a[j - 1] <= self.a[j] - x {
            j - 1
        } else {
            j
        }
    }
}

/// Discretizes `(dist, prof)` on `window` into about `n` particles placed at
/// mass-quantile midpoints.
///
/// Atoms heavier than `total / n` become single particles carrying their
/// exact mass; the remaining mass is shared equally by the other particles.
/// A particle landing on a velocity jump is replaced by two half-mass
/// particles straddling it that carry the one-sided limits. Coincident
/// particles are fused, so the result may hold fewer than `n` particles.
pub fn discretize(
    dist: &MassDistribution,
    prof: &VelocityProfile,
    n: usize,
    window: (f64, f64),
) -> Result<ParticleSystem> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let (lo, hi) = window;
    let (dlo, dhi) = dist.window();
    if !(lo < hi) || lo < dlo || hi > dhi {
        return Err(Error::InvalidArgument(format!(
            "window [{lo}, {hi}] is not inside the distribution window [{dlo}, {dhi}]"
        )));
    }
    let report = validate_njc(dist, prof);
    if !report.ok {
        return Err(Error::NegativeJump(
            report.violations.iter().map(|v| v.position).collect(),
        ));
    }
    let segs = dist.segments_in(lo, hi);
    let total: f64 = segs.iter().map(MassSegment::mass).sum();
    if !(total > 0.0) {
        return Err(Error::ZeroMass { lo, hi });
    }
    let threshold = total / n as f64;
    let heavy = |s: &MassSegment| matches!(s, MassSegment::Atom { mass, .. } if *mass > threshold);
    let heavy_count = segs.iter().filter(|s| heavy(s)).count();
    let heavy_mass: f64 = segs.iter().filter(|s| heavy(s)).map(MassSegment::mass).sum();
    let rest: Vec<MassSegment> = segs.iter().copied().filter(|s| !heavy(s)).collect();
    let rest_mass = total - heavy_mass;

    // (position, mass, sits on an atom)
    let mut raw: Vec<(f64, f64, bool)> = segs
        .iter()
        .filter_map(|s| match *s {
            MassSegment::Atom { position, mass } if mass > threshold => Some((position, mass, true)),
            _ => None,
        })
        .collect();
    let light = n - heavy_count;
    if rest_mass > total * 1e-15 && light > 0 {
        let cell = rest_mass / light as f64;
        let mut seg_iter = rest.iter();
        let mut current = seg_iter.next();
        let mut consumed = 0.0;
        for j in 0..light {
            let q = (j as f64 + 0.5) * cell;
            while let Some(s) = current {
                if q <= consumed + s.mass() || seg_iter.len() == 0 {
                    break;
                }
                consumed += s.mass();
                current = seg_iter.next();
            }
            let s = current.expect("remaining mass has at least one segment");
            let (x, on_atom) = match *s {
                MassSegment::Density {
                    lo: l,
                    hi: r,
                    density,
                } => ((l + (q - consumed) / density).clamp(l, r), false),
                MassSegment::Atom { position, .. } => (position, true),
            };
            raw.push((x, cell, on_atom));
        }
    }
    raw.sort_by(|x, y| x.0.total_cmp(&y.0));

    let eps = SPLIT_RTOL * (hi - lo);
    let mut a: Vec<f64> = Vec::with_capacity(raw.len() + 2);
    let mut m: Vec<f64> = Vec::with_capacity(raw.len() + 2);
    let mut p: Vec<f64> = Vec::with_capacity(raw.len() + 2);
    let mut push = |x: f64, mass: f64, vel: f64| {
        if let Some(&last) = a.last() {
            if x <= last {
                let k = a.len() - 1;
                let mt = m[k] + mass;
                a[k] = (m[k] * a[k] + mass * x) / mt;
                p[k] += mass * vel;
                m[k] = mt;
                return;
            }
        }
        a.push(x);
        m.push(mass);
        p.push(mass * vel);
    };
    for &(x, mass, on_atom) in &raw {
        match prof.jump_near(x, eps) {
            Some(b) if !on_atom => {
                push(b - eps, 0.5 * mass, prof.left_limit(b));
                push(b + eps, 0.5 * mass, prof.right_limit(b));
            }
            _ => push(x, mass, prof.value(x)),
        }
    }
    let v: Vec<f64> = p.iter().zip(&m).map(|(p, m)| p / m).collect();
    let mut sys = ParticleSystem::with_window(a, m, v, window)?;
    sys.provenance = Some(Arc::new(Provenance {
        distribution: dist.clone(),
        profile: prof.clone(),
        window,
    }));
    Ok(sys)
}
