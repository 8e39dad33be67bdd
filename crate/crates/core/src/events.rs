//! Event-driven simulation of the sticky dynamics.
//!
//! Clusters fly freely and merge at exact collision times taken from a
//! priority queue. Collisions closer together than [`SIMULTANEITY`] form one
//! event. This is an independent route to the same clusters as
//! [`crate::flow::cluster_at`] and the only source of first-shock times.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::flow::{Block, ClusterState};
use crate::model::ParticleSystem;

/// Collisions whose times differ by at most this much are one event.
pub const SIMULTANEITY: f64 = 1e-12;

/// One inelastic merge of several adjacent clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub time: f64,
    pub position: f64,
    pub first: usize,
    pub last: usize,
    /// Index ranges of the clusters that met, left to right.
    pub parts: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub horizon: f64,
    pub events: Vec<MergeEvent>,
    /// Clusters at the horizon.
    pub state: ClusterState,
}

impl EventLog {
    /// Time of each particle's first merge, infinite if none by the horizon.
    pub fn first_shock_times(&self) -> Vec<f64> {
        let n = self.state.block_ids().len();
        let mut tau = vec![f64::INFINITY; n];
        for e in &self.events {
            for &(f, l) in &e.parts {
                if f == l && tau[f].is_infinite() {
                    tau[f] = e.time;
                }
            }
        }
        tau
    }

    /// Index of the event in which particle `i` first merged.
    pub fn first_event_of(&self) -> Vec<Option<usize>> {
        let n = self.state.block_ids().len();
        let mut out = vec![None; n];
        for (k, e) in self.events.iter().enumerate() {
            for &(f, l) in &e.parts {
                if f == l && out[f].is_none() {
                    out[f] = Some(k);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
struct Cluster {
    last: usize,
    mass: f64,
    momentum: f64,
    ref_time: f64,
    ref_pos: f64,
}

impl Cluster {
    fn velocity(&self) -> f64 {
        self.momentum / self.mass
    }

    fn position(&self, t: f64) -> f64 {
        self.ref_pos + (t - self.ref_time) * self.velocity()
    }
}

fn meeting_time(l: &Cluster, r: &Cluster) -> Option<f64> {
    let (vl, vr) = (l.velocity(), r.velocity());
    if vl <= vr {
        return None;
    }
    Some((r.ref_pos - l.ref_pos - r.ref_time * vr + l.ref_time * vl) / (vl - vr))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    left: usize,
    right: usize,
    left_version: u64,
    right_version: u64,
}

impl Eq for Pending {}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.left.cmp(&self.left))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Engine {
    // Indexed by the first particle of a live cluster.
    clusters: Vec<Option<Cluster>>,
    next: Vec<Option<usize>>,
    prev: Vec<Option<usize>>,
    version: Vec<u64>,
    heap: BinaryHeap<Pending>,
}

impl Engine {
    fn new(sys: &ParticleSystem) -> Self {
        let n = sys.len();
        let (a, m, v) = (sys.positions(), sys.masses(), sys.velocities());
        let clusters = (0..n)
            .map(|i| {
                Some(Cluster {
                    last: i,
                    mass: m[i],
                    momentum: m[i] * v[i],
                    ref_time: 0.0,
                    ref_pos: a[i],
                })
            })
            .collect();
        let mut engine = Self {
            clusters,
            next: (0..n).map(|i| (i + 1 < n).then_some(i + 1)).collect(),
            prev: (0..n).map(|i| i.checked_sub(1)).collect(),
            version: vec![0; n],
            heap: BinaryHeap::new(),
        };
        for i in 0..n.saturating_sub(1) {
            engine.schedule(i, 0.0);
        }
        engine
    }

    fn cluster(&self, id: usize) -> &Cluster {
        self.clusters[id].as_ref().expect("live cluster")
    }

    fn schedule(&mut self, left: usize, now: f64) {
        let Some(right) = self.next[left] else { return };
        if let Some(t) = meeting_time(self.cluster(left), self.cluster(right)) {
            self.heap.push(Pending {
                time: t.max(now),
                left,
                right,
                left_version: self.version[left],
                right_version: self.version[right],
            });
        }
    }

    fn is_current(&self, p: &Pending) -> bool {
        self.clusters[p.left].is_some()
            && self.clusters[p.right].is_some()
            && self.next[p.left] == Some(p.right)
            && self.version[p.left] == p.left_version
            && self.version[p.right] == p.right_version
    }

    fn pop_current(&mut self) -> Option<Pending> {
        while let Some(p) = self.heap.pop() {
            if self.is_current(&p) {
                return Some(p);
            }
        }
        None
    }

    fn peek_time(&mut self) -> Option<f64> {
        while let Some(p) = self.heap.peek() {
            if self.is_current(p) {
                return Some(p.time);
            }
            self.heap.pop();
        }
        None
    }

    /// Absorbs the right neighbour of `left` at time `t`.
    fn merge(&mut self, left: usize, t: f64) -> usize {
        let right = self.next[left].expect("right neighbour");
        let l = *self.cluster(left);
        let r = self.clusters[right].take().expect("live cluster");
        let mass = l.mass + r.mass;
        let ref_pos = (l.mass * l.position(t) + r.mass * r.position(t)) / mass;
        self.clusters[left] = Some(Cluster {
            last: r.last,
            mass,
            momentum: l.momentum + r.momentum,
            ref_time: t,
            ref_pos,
        });
        self.version[left] += 1;
        self.next[left] = self.next[right];
        if let Some(nn) = self.next[right] {
            self.prev[nn] = Some(left);
        }
        self.next[right] = None;
        self.prev[right] = None;
        right
    }

    fn collides_by(&self, left: usize, limit: f64) -> bool {
        match self.next[left] {
            Some(right) => meeting_time(self.cluster(left), self.cluster(right))
                .is_some_and(|t| t <= limit),
            None => false,
        }
    }

    fn run(&mut self, horizon: f64) -> Vec<MergeEvent> {
        let mut events = Vec::new();
        while let Some(t0) = self.peek_time() {
            if t0 > horizon {
                break;
            }
            let limit = t0 + SIMULTANEITY;
            let mut work: Vec<usize> = Vec::new();
            while self.peek_time().is_some_and(|t| t <= limit) {
                let p = self.pop_current().expect("peeked event");
                work.push(p.left);
            }
            // Parts of every cluster formed in this batch, keyed by its id.
            let mut parts: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
            while let Some(left) = work.pop() {
                if self.clusters[left].is_none() || !self.collides_by(left, limit) {
                    continue;
                }
                let right = self.next[left].expect("right neighbour");
                let left_last = self.cluster(left).last;
                let right_last = self.cluster(right).last;
                let mut merged = parts.remove(&left).unwrap_or_else(|| vec![(left, left_last)]);
                merged.extend(parts.remove(&right).unwrap_or_else(|| vec![(right, right_last)]));
                self.merge(left, t0);
                parts.insert(left, merged);
                work.push(left);
                if let Some(p) = self.prev[left] {
                    work.push(p);
                }
            }
            for (id, parts) in parts {
                let c = *self.cluster(id);
                events.push(MergeEvent {
                    time: t0,
                    position: c.ref_pos,
                    first: id,
                    last: c.last,
                    parts,
                });
                self.schedule(id, t0);
                if let Some(p) = self.prev[id] {
                    self.schedule(p, t0);
                }
            }
        }
        events
    }

    fn state(&self, sys: &ParticleSystem, t: f64) -> ClusterState {
        let a = sys.positions();
        let mut blocks = Vec::new();
        let mut id = Some(0);
        while let Some(i) = id {
            let c = self.cluster(i);
            blocks.push(Block {
                first: i,
                last: c.last,
                mass: c.mass,
                momentum: c.momentum,
                position: c.position(t),
                velocity: c.velocity(),
                alpha: a[i],
                beta: a[c.last],
            });
            id = self.next[i];
        }
        ClusterState::from_blocks(t, blocks)
    }
}

/// Full merge history up to `horizon`.
pub fn run_events(sys: &ParticleSystem, horizon: f64) -> EventLog {
    let mut engine = Engine::new(sys);
    let events = engine.run(horizon);
    EventLog {
        horizon,
        events,
        state: engine.state(sys, horizon),
    }
}

/// Clusters at time `t` computed by explicit collision simulation.
pub fn event_driven_oracle(sys: &ParticleSystem, t: f64) -> ClusterState {
    run_events(sys, t).state
}
