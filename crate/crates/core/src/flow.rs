//! Forward flow of a sticky-particle system.
//!
//! At time `t` the clusters are the weighted isotonic projection of the
//! free-flight positions `a_i + t v_i`: the coarsest contiguous partition
//! whose barycenters increase. Matter between two particles is carried by a
//! map that is affine in the initial coordinate, which keeps the flow
//! continuous and non-decreasing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParticleSystem;

/// A maximal group of particles sharing one position at a given time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub first: usize,
    pub last: usize,
    pub mass: f64,
    pub momentum: f64,
    pub position: f64,
    pub velocity: f64,
    /// Initial position of the leftmost member.
    pub alpha: f64,
    /// Initial position of the rightmost member.
    pub beta: f64,
}

impl Block {
    /// Number of particles in the block, never zero.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }

    pub fn is_singleton(&self) -> bool {
        self.first == self.last
    }

    pub fn contains(&self, i: usize) -> bool {
        self.first <= i && i <= self.last
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub time: f64,
    pub blocks: Vec<Block>,
    block_of: Vec<usize>,
}

impl ClusterState {
    pub fn from_blocks(time: f64, blocks: Vec<Block>) -> Self {
        let n = blocks.last().map_or(0, |b| b.last + 1);
        let mut block_of = vec![0; n];
        for (k, b) in blocks.iter().enumerate() {
            block_of[b.first..=b.last].fill(k);
        }
        Self {
            time,
            blocks,
            block_of,
        }
    }

    /// Block holding particle `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.block_of[i]
    }

    pub fn block_ids(&self) -> &[usize] {
        &self.block_of
    }

    pub fn particle_position(&self, i: usize) -> f64 {
        self.blocks[self.block_of[i]].position
    }

    pub fn particle_velocity(&self, i: usize) -> f64 {
        self.blocks[self.block_of[i]].velocity
    }

    pub fn nontrivial(&self) -> impl Iterator<Item = &Block> {
        self.blocks.iter().filter(|b| !b.is_singleton())
    }

    /// Block whose position lies within `tol` of `x`.
    pub fn block_at(&self, x: f64, tol: f64) -> Option<usize> {
        let k = self.blocks.partition_point(|b| b.position < x - tol);
        self.blocks
            .get(k)
            .filter(|b| (b.position - x).abs() <= tol)
            .map(|_| k)
    }

    /// Position at this time of the matter that started at `a`.
    ///
    /// Affine in `a` between consecutive blocks, constant across a block.
    /// Values of `a` outside the particle hull are clamped to it.
    pub fn eulerian(&self, a: f64) -> f64 {
        let k = self.blocks.partition_point(|b| b.alpha <= a);
        if k == 0 {
            return self.blocks[0].position;
        }
        let left = &self.blocks[k - 1];
        if a <= left.beta || k == self.blocks.len() {
            return left.position;
        }
        let right = &self.blocks[k];
        let s = (a - left.beta) / (right.alpha - left.beta);
        left.position + s * (right.position - left.position)
    }

    /// Initial coordinate of the matter found at `x`; at a block position
    /// this is the block's left end. `None` outside the particle hull.
    pub fn lagrangian(&self, x: f64, tol: f64) -> Option<f64> {
        if let Some(k) = self.block_at(x, tol) {
            return Some(self.blocks[k].alpha);
        }
        let k = self.blocks.partition_point(|b| b.position < x);
        if k == 0 || k == self.blocks.len() {
            return None;
        }
        let left = &self.blocks[k - 1];
        let right = &self.blocks[k];
        let s = (x - left.position) / (right.position - left.position);
        Some(left.beta + s * (right.alpha - left.beta))
    }

    /// Recomputes the barycenter identity, conservation, ordering and the
    /// split inequality.
    pub fn check_invariants(&self, sys: &ParticleSystem) -> Result<()> {
        let (a, m, v) = (sys.positions(), sys.masses(), sys.velocities());
        let t = self.time;
        let tol = sys.position_tol();
        if self.block_of.len() != sys.len() {
            return Err(Error::Invariant("blocks do not cover the system".into()));
        }
        let mut next = 0;
        for (k, b) in self.blocks.iter().enumerate() {
            if b.first != next || b.last < b.first {
                return Err(Error::Invariant(format!("block {k} breaks the partition")));
            }
            next = b.last + 1;
            let mass: f64 = m[b.first..=b.last].iter().sum();
            let mom: f64 = (b.first..=b.last).map(|i| m[i] * v[i]).sum();
            let bary: f64 = (b.first..=b.last).map(|i| m[i] * (a[i] + t * v[i])).sum::<f64>() / mass;
            let scale = mass.max(1.0) * 1e-12;
            if (mass - b.mass).abs() > scale || (mom - b.momentum).abs() > scale * (1.0 + mom.abs()) {
                return Err(Error::Invariant(format!("block {k} does not conserve mass or momentum")));
            }
            if (bary - b.position).abs() > tol {
                return Err(Error::Invariant(format!(
                    "block {k} position {} differs from barycenter {bary}",
                    b.position
                )));
            }
            let mut left_mass = 0.0;
            let mut left_sum = 0.0;
            for i in b.first..b.last {
                left_mass += m[i];
                left_sum += m[i] * (a[i] + t * v[i]);
                let left_mean = left_sum / left_mass;
                let right_mean = (bary * mass - left_sum) / (mass - left_mass);
                if left_mean < bary - tol || right_mean > bary + tol {
                    return Err(Error::Invariant(format!(
                        "block {k} violates the split inequality after particle {i}"
                    )));
                }
            }
        }
        if next != sys.len() {
            return Err(Error::Invariant("blocks do not cover the system".into()));
        }
        if let Some(w) = self.blocks.windows(2).find(|w| w[0].position >= w[1].position) {
            return Err(Error::Invariant(format!(
                "block positions {} and {} are not increasing",
                w[0].position, w[1].position
            )));
        }
        Ok(())
    }
}

/// Clusters at time `t` by pool-adjacent-violators on free-flight positions.
pub fn cluster_at(sys: &ParticleSystem, t: f64) -> ClusterState {
    let (a, m, v) = (sys.positions(), sys.masses(), sys.velocities());
    let tol = sys.merge_tol();

    struct Pool {
        first: usize,
        last: usize,
        mass: f64,
        weighted_start: f64,
        momentum: f64,
    }
    let mean = |p: &Pool| (p.weighted_start + t * p.momentum) / p.mass;

    let mut stack: Vec<Pool> = Vec::with_capacity(a.len());
    for i in 0..a.len() {
        let mut cur = Pool {
            first: i,
            last: i,
            mass: m[i],
            weighted_start: m[i] * a[i],
            momentum: m[i] * v[i],
        };
        while let Some(top) = stack.last() {
            if mean(top) < mean(&cur) - tol {
                break;
            }
            let top = stack.pop().expect("non-empty stack");
            cur = Pool {
                first: top.first,
                last: cur.last,
                mass: top.mass + cur.mass,
                weighted_start: top.weighted_start + cur.weighted_start,
                momentum: top.momentum + cur.momentum,
            };
        }
        stack.push(cur);
    }

    let blocks = stack
        .iter()
        .map(|p| {
            let position = if p.first == p.last {
                a[p.first] + t * v[p.first]
            } else {
                mean(p)
            };
            Block {
                first: p.first,
                last: p.last,
                mass: p.mass,
                momentum: p.momentum,
                position,
                velocity: if p.first == p.last { v[p.first] } else { p.momentum / p.mass },
                alpha: a[p.first],
                beta: a[p.last],
            }
        })
        .collect();
    ClusterState::from_blocks(t, blocks)
}

/// Range of initial coordinates whose motion up to the state's time does
/// not depend on matter outside the discretized window.
///
/// A system built by [`crate::model::discretize`] stands for a larger
/// medium, so its first and last blocks may be touched by matter that was
/// cut away. A bare particle system is its own universe.
pub fn safe_lagrangian_range(sys: &ParticleSystem, state: &ClusterState) -> Option<(f64, f64)> {
    if sys.provenance().is_none() {
        let a = sys.positions();
        return Some((a[0], a[a.len() - 1]));
    }
    let k = state.blocks.len();
    if k < 3 {
        return None;
    }
    Some((state.blocks[1].alpha, state.blocks[k - 2].beta))
}

fn window_error(value: f64, range: Option<(f64, f64)>) -> Error {
    let (lo, hi) = range.unwrap_or((f64::NAN, f64::NAN));
    Error::Window { value, lo, hi }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time {t} must be finite and non-negative")))
    }
}

/// Position at time `s + t` of the matter found at `y` at time `s`.
pub fn flow_map(sys: &ParticleSystem, s: f64, t: f64, y: f64) -> Result<f64> {
    check_time(s)?;
    check_time(t)?;
    let at_s = cluster_at(sys, s);
    let at_end = cluster_at(sys, s + t);
    flow_between(sys, &at_s, &at_end, y)
}

/// [`flow_map`] with both states supplied by the caller.
pub fn flow_between(
    sys: &ParticleSystem,
    from: &ClusterState,
    to: &ClusterState,
    y: f64,
) -> Result<f64> {
    let range = safe_lagrangian_range(sys, to);
    let a = from
        .lagrangian(y, sys.position_tol())
        .ok_or_else(|| window_error(y, range.map(|(lo, hi)| (from.eulerian(lo), from.eulerian(hi)))))?;
    match range {
        Some((lo, hi)) if lo <= a && a <= hi => Ok(to.eulerian(a)),
        _ => Err(window_error(y, range.map(|(lo, hi)| (from.eulerian(lo), from.eulerian(hi))))),
    }
}

/// Initial positions `(alpha, beta)` of the matter found at `x` at time `t`.
pub fn cluster_bounds(sys: &ParticleSystem, t: f64, x: f64) -> Result<(f64, f64)> {
    check_time(t)?;
    bounds_in(sys, &cluster_at(sys, t), x)
}

pub fn bounds_in(sys: &ParticleSystem, state: &ClusterState, x: f64) -> Result<(f64, f64)> {
    let tol = sys.position_tol();
    if let Some(k) = state.block_at(x, tol) {
        let b = &state.blocks[k];
        return Ok((b.alpha, b.beta));
    }
    let a = state.lagrangian(x, tol).ok_or_else(|| Error::Window {
        value: x,
        lo: state.blocks[0].position,
        hi: state.blocks[state.blocks.len() - 1].position,
    })?;
    Ok((a, a))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocitySample {
    pub u: f64,
    pub u_minus: f64,
    pub u_plus: f64,
}

/// Velocity at `(x, t)` with its one-sided limits.
pub fn velocity_field(sys: &ParticleSystem, t: f64, x: f64) -> Result<VelocitySample> {
    check_time(t)?;
    velocity_in(sys, &cluster_at(sys, t), x)
}

/// At a block position the limits are the initial velocities of its end
/// particles. Between blocks the velocity is interpolated linearly in `x`
/// between the facing end particles, so both limits equal the value.
pub fn velocity_in(sys: &ParticleSystem, state: &ClusterState, x: f64) -> Result<VelocitySample> {
    let v = sys.velocities();
    if let Some(k) = state.block_at(x, sys.position_tol()) {
        let b = &state.blocks[k];
        return Ok(VelocitySample {
            u: b.velocity,
            u_minus: v[b.first],
            u_plus: v[b.last],
        });
    }
    let k = state.blocks.partition_point(|b| b.position < x);
    if k == 0 || k == state.blocks.len() {
        return Err(Error::Window {
            value: x,
            lo: state.blocks[0].position,
            hi: state.blocks[state.blocks.len() - 1].position,
        });
    }
    let left = &state.blocks[k - 1];
    let right = &state.blocks[k];
    let s = (x - left.position) / (right.position - left.position);
    let u = v[left.last] + s * (v[right.first] - v[left.last]);
    Ok(VelocitySample {
        u,
        u_minus: u,
        u_plus: u,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafeWindow {
    pub query: (f64, f64),
    pub horizon: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Initial interval that determines the motion of `query` up to `horizon`.
pub fn safe_window(sys: &ParticleSystem, query: (f64, f64), horizon: f64) -> Result<SafeWindow> {
    check_time(horizon)?;
    let a = sys.positions();
    let (qlo, qhi) = query;
    if !(qlo <= qhi) || qlo < a[0] || qhi > a[a.len() - 1] {
        return Err(Error::Window {
            value: if qlo < a[0] { qlo } else { qhi },
            lo: a[0],
            hi: a[a.len() - 1],
        });
    }
    let state = cluster_at(sys, horizon);
    let (lo, _) = bounds_in(sys, &state, state.eulerian(qlo))?;
    let (_, hi) = bounds_in(sys, &state, state.eulerian(qhi))?;
    Ok(SafeWindow {
        query,
        horizon,
        lo: lo.min(qlo),
        hi: hi.max(qhi),
    })
}

/// Source of cluster states; lets checks run against a perturbed flow.
pub trait StateProvider: Sync {
    fn system(&self) -> &ParticleSystem;
    fn state_at(&self, t: f64) -> ClusterState;
}

impl StateProvider for ParticleSystem {
    fn system(&self) -> &ParticleSystem {
        self
    }

    fn state_at(&self, t: f64) -> ClusterState {
        cluster_at(self, t)
    }
}

/// A deliberately wrong flow whose block velocities drift by `bias * t`.
#[derive(Debug, Clone, Copy)]
pub struct BiasedFlow<'a> {
    pub system: &'a ParticleSystem,
    pub bias: f64,
}

impl StateProvider for BiasedFlow<'_> {
    fn system(&self) -> &ParticleSystem {
        self.system
    }

    fn state_at(&self, t: f64) -> ClusterState {
        let mut state = cluster_at(self.system, t);
        for b in &mut state.blocks {
            b.velocity += self.bias * t;
        }
        state
    }
}
