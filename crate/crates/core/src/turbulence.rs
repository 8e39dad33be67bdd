//! First-shock times, turbulent intervals and the processes riding the
//! delta-shock that swallows a particle.
//!
//! A particle's first shock is the first merge event it takes part in. The
//! particles that enter one event as singletons, side by side, form a
//! turbulent interval `[A, B]`. Before the shock time `γ` each process moves
//! on a straight leg ending at the birth point of the shock; afterwards it
//! coincides with the particle's cluster.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{run_events, EventLog};
use crate::flow::{cluster_at, flow_between, velocity_in, ClusterState};
use crate::model::ParticleSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalKind {
    /// The interval is the whole cluster created at its birth.
    BornCluster,
    /// The interval was swallowed by an older cluster.
    Aggregation,
    /// A single particle, a negligibly short born cluster, or matter that
    /// never collides before the horizon.
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurbulentInterval {
    pub id: usize,
    pub first: usize,
    pub last: usize,
    /// Initial position of the left end.
    pub lo: f64,
    /// Initial position of the right end.
    pub hi: f64,
    pub birth_time: Option<f64>,
    pub birth_position: Option<f64>,
    pub kind: IntervalKind,
    /// Merge event in which the interval was born.
    pub event: Option<usize>,
}

impl TurbulentInterval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurbulenceReport {
    pub horizon: f64,
    /// First shock time per particle; infinite when none before the horizon.
    pub tau: Vec<f64>,
    pub intervals: Vec<TurbulentInterval>,
    interval_of: Vec<usize>,
    pub log: EventLog,
    /// Intervals and clusters no wider than this count as single points.
    pub point_width: f64,
}

/// First merge time of every particle up to `horizon`.
pub fn first_shock_times(sys: &ParticleSystem, horizon: f64) -> Vec<f64> {
    run_events(sys, horizon).first_shock_times()
}

/// Confirms event-driven shock times against the clusters computed
/// independently just before and at each of them. Quadratic; meant for
/// small systems.
pub fn cross_check_shock_times(sys: &ParticleSystem, tau: &[f64]) -> Result<()> {
    let mut times: Vec<f64> = tau.iter().copied().filter(|t| t.is_finite()).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for (k, &t) in times.iter().enumerate() {
        let before = if k == 0 { 0.5 * t } else { 0.5 * (times[k - 1] + t) };
        let at = cluster_at(sys, t);
        let prior = cluster_at(sys, before);
        for (i, &ti) in tau.iter().enumerate() {
            let merged_now = !at.blocks[at.block_of(i)].is_singleton();
            let merged_before = !prior.blocks[prior.block_of(i)].is_singleton();
            if ti == t && (!merged_now || merged_before) {
                return Err(Error::Invariant(format!(
                    "particle {i}: shock time {t} disagrees with the clusters"
                )));
            }
            if ti > t && merged_now {
                return Err(Error::Invariant(format!(
                    "particle {i} is clustered at {t} before its shock time {ti}"
                )));
            }
        }
    }
    Ok(())
}

/// Partitions the particles into turbulent intervals up to `horizon`.
pub fn turbulent_intervals(sys: &ParticleSystem, horizon: f64) -> TurbulenceReport {
    let log = run_events(sys, horizon);
    let tau = log.first_shock_times();
    let point_width = sys.position_tol();
    let a = sys.positions();
    let n = sys.len();

    let mut runs: Vec<TurbulentInterval> = Vec::new();
    for (k, e) in log.events.iter().enumerate() {
        let mut start: Option<usize> = None;
        let close = |runs: &mut Vec<TurbulentInterval>, first: usize, last: usize| {
            let whole = first == e.first && last == e.last;
            let kind = if !whole {
                IntervalKind::Aggregation
            } else if a[last] - a[first] <= point_width {
                IntervalKind::Point
            } else {
                IntervalKind::BornCluster
            };
            runs.push(TurbulentInterval {
                id: 0,
                first,
                last,
                lo: a[first],
                hi: a[last],
                birth_time: Some(e.time),
                birth_position: Some(e.position),
                kind,
                event: Some(k),
            });
        };
        let mut prev_single: Option<usize> = None;
        for &(f, l) in &e.parts {
            if f == l {
                if start.is_none() {
                    start = Some(f);
                }
                prev_single = Some(f);
            } else if let (Some(s), Some(p)) = (start.take(), prev_single.take()) {
                close(&mut runs, s, p);
            }
        }
        if let (Some(s), Some(p)) = (start, prev_single) {
            close(&mut runs, s, p);
        }
    }
    let mut covered = vec![false; n];
    for r in &runs {
        covered[r.first..=r.last].fill(true);
    }
    for i in (0..n).filter(|&i| !covered[i]) {
        runs.push(TurbulentInterval {
            id: 0,
            first: i,
            last: i,
            lo: a[i],
            hi: a[i],
            birth_time: None,
            birth_position: None,
            kind: IntervalKind::Point,
            event: None,
        });
    }
    runs.sort_by_key(|r| r.first);
    let mut interval_of = vec![0; n];
    for (id, r) in runs.iter_mut().enumerate() {
        r.id = id;
        interval_of[r.first..=r.last].fill(id);
    }
    TurbulenceReport {
        horizon,
        tau,
        intervals: runs,
        interval_of,
        log,
        point_width,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Process {
    X,
    Z1,
    Z2,
    Z3,
    Z4,
    Y,
}

impl Process {
    pub const ALL: [Process; 6] = [
        Process::X,
        Process::Z1,
        Process::Z2,
        Process::Z3,
        Process::Z4,
        Process::Y,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Process::X => "X",
            Process::Z1 => "Z1",
            Process::Z2 => "Z2",
            Process::Z3 => "Z3",
            Process::Z4 => "Z4",
            Process::Y => "Y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySide {
    Left,
    Right,
}

/// Side from which matter at `x0` enters its shock, judged from the
/// starting points of the four legs.
pub fn classify_entry_side(z0: [f64; 4], x0: f64, tol: f64) -> EntrySide {
    let same = |p: f64, q: f64| (p - q).abs() <= tol;
    let [z1, z2, z3, z4] = z0;
    let left = same(z1, z3) && ((same(z2, z4) && !same(x0, z2)) || !same(z2, z4));
    if left {
        EntrySide::Left
    } else {
        EntrySide::Right
    }
}

/// Trajectory of one process attached to one particle.
///
/// Before `gamma` it is the straight leg that reaches the birth point of the
/// particle's first shock with the initial velocity of its defining
/// particle; from `gamma` on it follows the particle's cluster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub process: Process,
    pub particle: usize,
    pub defining: usize,
    pub event: Option<usize>,
    pub gamma: f64,
    pub birth_position: f64,
    pub slope: f64,
}

impl Leg {
    fn on_leg(&self, t: f64) -> bool {
        self.process != Process::X && self.gamma.is_finite() && t < self.gamma
    }

    pub fn position(&self, state: &ClusterState) -> f64 {
        if self.on_leg(state.time) {
            self.birth_position - (self.gamma - state.time) * self.slope
        } else {
            state.particle_position(self.particle)
        }
    }

    pub fn velocity(&self, state: &ClusterState) -> f64 {
        if self.on_leg(state.time) {
            self.slope
        } else {
            state.particle_velocity(self.particle)
        }
    }

    /// Starting point; equals the initial position whenever the defining
    /// particle enters the shock as a singleton.
    pub fn start(&self, sys: &ParticleSystem) -> f64 {
        if self.process == Process::X || self.gamma.is_infinite() {
            sys.positions()[self.particle]
        } else {
            self.birth_position - self.gamma * self.slope
        }
    }

    /// Key of the atom of the initial σ-field this leg belongs to.
    pub fn group(&self) -> (Option<usize>, usize) {
        (self.event, self.defining)
    }

    /// The process is the particle's own path.
    pub fn is_own_path(&self) -> bool {
        self.defining == self.particle
    }
}

impl TurbulenceReport {
    pub fn interval_of(&self, i: usize) -> &TurbulentInterval {
        &self.intervals[self.interval_of[i]]
    }

    pub fn interval_ids(&self) -> &[usize] {
        &self.interval_of
    }

    pub fn max_width(&self) -> f64 {
        self.intervals.iter().map(TurbulentInterval::width).fold(0.0, f64::max)
    }

    /// Defining particle of `which` for particle `i`, ignoring `Y`.
    ///
    /// Intervals and birth clusters of negligible width stand for a single
    /// initial point, so their legs are the particle's own path.
    fn defining(&self, sys: &ParticleSystem, i: usize, which: Process) -> usize {
        let a = sys.positions();
        let iv = self.interval_of(i);
        let event = iv.event.map(|k| &self.log.events[k]);
        let narrow = |f: usize, l: usize| a[l] - a[f] <= self.point_width;
        match (which, event) {
            (_, None) | (Process::X | Process::Y, _) => i,
            (Process::Z1 | Process::Z2, _) if narrow(iv.first, iv.last) => i,
            (Process::Z3 | Process::Z4, Some(e)) if narrow(e.first, e.last) => i,
            (Process::Z1, _) => iv.first,
            (Process::Z2, _) => iv.last,
            (Process::Z3, Some(e)) => e.first,
            (Process::Z4, Some(e)) => e.last,
        }
    }

    fn raw_leg(&self, sys: &ParticleSystem, i: usize, which: Process) -> Leg {
        let iv = self.interval_of(i);
        let defining = self.defining(sys, i, which);
        Leg {
            process: which,
            particle: i,
            defining,
            event: iv.event,
            gamma: iv.birth_time.unwrap_or(f64::INFINITY),
            birth_position: iv.birth_position.unwrap_or(f64::NAN),
            slope: sys.velocities()[defining],
        }
    }

    pub fn entry_side(&self, sys: &ParticleSystem, i: usize) -> EntrySide {
        let z0 = [Process::Z1, Process::Z2, Process::Z3, Process::Z4]
            .map(|p| self.raw_leg(sys, i, p).start(sys));
        classify_entry_side(z0, sys.positions()[i], sys.position_tol())
    }

    pub fn leg(&self, sys: &ParticleSystem, i: usize, which: Process) -> Leg {
        match which {
            Process::Y => {
                let side = match self.entry_side(sys, i) {
                    EntrySide::Left => Process::Z3,
                    EntrySide::Right => Process::Z4,
                };
                Leg {
                    process: Process::Y,
                    ..self.raw_leg(sys, i, side)
                }
            }
            _ => self.raw_leg(sys, i, which),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessBundle {
    pub particle: usize,
    pub x0: f64,
    pub gamma: f64,
    pub interval: usize,
    pub entry_side: EntrySide,
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: Vec<f64>,
    pub z4: Vec<f64>,
    pub y: Vec<f64>,
}

impl ProcessBundle {
    pub fn path(&self, which: Process) -> &[f64] {
        match which {
            Process::X => &self.x,
            Process::Z1 => &self.z1,
            Process::Z2 => &self.z2,
            Process::Z3 => &self.z3,
            Process::Z4 => &self.z4,
            Process::Y => &self.y,
        }
    }
}

/// Trajectories of all six processes for the particle at `x0`.
///
/// `x0` must be a particle position; `states` must hold the clusters at the
/// grid times, in order.
pub fn build_bundle(
    sys: &ParticleSystem,
    report: &TurbulenceReport,
    x0: f64,
    states: &[ClusterState],
) -> Result<ProcessBundle> {
    let a = sys.positions();
    let i = sys.nearest_particle(x0);
    if (a[i] - x0).abs() > sys.position_tol() {
        return Err(Error::Window {
            value: x0,
            lo: a[0],
            hi: a[a.len() - 1],
        });
    }
    if let Some(s) = states.iter().find(|s| s.time > report.horizon) {
        return Err(Error::InvalidArgument(format!(
            "grid time {} is past the horizon {}",
            s.time, report.horizon
        )));
    }
    let path = |p: Process| {
        let leg = report.leg(sys, i, p);
        states.iter().map(|s| leg.position(s)).collect::<Vec<f64>>()
    };
    Ok(ProcessBundle {
        particle: i,
        x0: a[i],
        gamma: report.tau[i],
        interval: report.interval_ids()[i],
        entry_side: report.entry_side(sys, i),
        times: states.iter().map(|s| s.time).collect(),
        x: path(Process::X),
        z1: path(Process::Z1),
        z2: path(Process::Z2),
        z3: path(Process::Z3),
        z4: path(Process::Z4),
        y: path(Process::Y),
    })
}

/// Clusters at each grid time.
pub fn states_on(sys: &ParticleSystem, grid: &[f64]) -> Vec<ClusterState> {
    grid.iter().map(|&t| cluster_at(sys, t)).collect()
}

/// Left and right legs through the matter found at `a` at time `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockLegs {
    /// Backtracked with the left limit of the velocity.
    pub f: f64,
    /// Backtracked with the right limit of the velocity.
    pub g: f64,
    /// Position at time `t` of the left end of the cluster at time `r`.
    pub f_alpha: f64,
    /// Position at time `t` of the right end of the cluster at time `r`.
    pub g_beta: f64,
}

pub fn f_g_values(sys: &ParticleSystem, a: f64, t: f64, r: f64) -> Result<ShockLegs> {
    let start = cluster_at(sys, 0.0);
    let at_t = cluster_at(sys, t);
    let at_r = cluster_at(sys, r);
    if t >= r {
        let x = flow_between(sys, &start, &at_t, a)?;
        return Ok(ShockLegs {
            f: x,
            g: x,
            f_alpha: x,
            g_beta: x,
        });
    }
    let x = flow_between(sys, &start, &at_r, a)?;
    let u = velocity_in(sys, &at_r, x)?;
    let (alpha, beta) = crate::flow::bounds_in(sys, &at_r, x)?;
    Ok(ShockLegs {
        f: x - (r - t) * u.u_minus,
        g: x - (r - t) * u.u_plus,
        f_alpha: flow_between(sys, &start, &at_t, alpha)?,
        g_beta: flow_between(sys, &start, &at_t, beta)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub label: String,
    pub points: Vec<[f64; 2]>,
}

/// Space-time picture of one turbulent interval: the four legs up to the
/// birth point and the path of the cluster afterwards.
pub fn delta_shock_geometry(
    sys: &ParticleSystem,
    report: &TurbulenceReport,
    interval: usize,
    states: &[ClusterState],
) -> Result<Vec<Polyline>> {
    let iv = report
        .intervals
        .get(interval)
        .ok_or_else(|| Error::InvalidArgument(format!("no turbulent interval {interval}")))?;
    let i = iv.first;
    let mut out = Vec::with_capacity(5);
    for p in [Process::Z1, Process::Z2, Process::Z3, Process::Z4] {
        let leg = report.leg(sys, i, p);
        let mut points: Vec<[f64; 2]> = states
            .iter()
            .filter(|s| s.time < leg.gamma)
            .map(|s| [s.time, leg.position(s)])
            .collect();
        if leg.gamma.is_finite() {
            points.push([leg.gamma, leg.birth_position]);
        }
        out.push(Polyline {
            label: p.name().to_string(),
            points,
        });
    }
    if let (Some(t0), Some(x0)) = (iv.birth_time, iv.birth_position) {
        let mut points = vec![[t0, x0]];
        points.extend(
            states
                .iter()
                .filter(|s| s.time > t0)
                .map(|s| [s.time, s.particle_position(i)]),
        );
        out.push(Polyline {
            label: "shock".to_string(),
            points,
        });
    }
    Ok(out)
}
