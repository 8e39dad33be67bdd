//! Simulate, verify and sweep runs driven by a scenario.

use std::path::PathBuf;
use std::time::Instant;

use adhesion_core::{
    build_bundle, burgers_consistency, check_martingale_iff_degenerate, check_martingale_x,
    check_oracle_equivalence, check_semimartingale_z, check_velocity_conditional, cluster_at,
    delta_shock_geometry, dissipation_profile, turbulent_intervals, BiasedFlow, CheckReport,
    ClusterState, ConvexTestFunction, ParticleSystem, Process, StateProvider, TurbulenceReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliError;
use crate::export::{sha256_hex, Cell, Csv, OutputDir, RunManifest};
use crate::scenario::{SamplesConfig, Scenario, StateExport};

/// Command-line settings that override or extend the scenario.
#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Velocity drift injected into the flow seen by the checks.
    pub velocity_bias: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub requested: f64,
    pub particle: usize,
}

/// Draws `count` particle indices from the initial mass: each draw takes a
/// uniform double `u` from ChaCha8 seeded with `seed`, scales it by the total
/// mass and picks the first particle whose cumulative mass exceeds it.
pub fn sample_by_mass(sys: &ParticleSystem, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cum = Vec::with_capacity(sys.len());
    let mut acc = 0.0;
    for &m in sys.masses() {
        acc += m;
        cum.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cum.partition_point(|&c| c <= u).min(sys.len() - 1)
        })
        .collect()
}

fn resolve_seed(scenario: &Scenario, opts: &Options) -> Option<u64> {
    match &scenario.run.samples {
        Some(SamplesConfig::Random { seed, .. }) => opts.seed.or(*seed),
        _ => opts.seed,
    }
}

pub fn draw_samples(sys: &ParticleSystem, scenario: &Scenario, opts: &Options) -> Result<Vec<Sample>, CliError> {
    let a = sys.positions();
    Ok(match &scenario.run.samples {
        None => Vec::new(),
        Some(SamplesConfig::Positions { positions }) => positions
            .iter()
            .map(|&x| Sample {
                requested: x,
                particle: sys.nearest_particle(x),
            })
            .collect(),
        Some(SamplesConfig::Random { count, .. }) => {
            let seed = resolve_seed(scenario, opts).ok_or_else(|| {
                CliError::Config("random samples need a seed in run.samples.seed or --seed".into())
            })?;
            sample_by_mass(sys, *count, seed)
                .into_iter()
                .map(|i| Sample {
                    requested: a[i],
                    particle: i,
                })
                .collect()
        }
    })
}

/// Clusters at every grid time, each checked against the structural
/// identities.
pub fn states_checked(sys: &ParticleSystem, grid: &[f64]) -> Result<Vec<ClusterState>, CliError> {
    grid.par_iter()
        .map(|&t| {
            let s = cluster_at(sys, t);
            s.check_invariants(sys)?;
            Ok(s)
        })
        .collect()
}

fn scenario_digest(scenario: &Scenario) -> String {
    sha256_hex(&serde_json::to_vec(scenario).expect("scenario serializes"))
}

fn output_dir(scenario: &Scenario, opts: &Options) -> Result<OutputDir, CliError> {
    let dir = opts
        .out
        .clone()
        .or_else(|| scenario.output.dir.clone())
        .ok_or_else(|| CliError::Config("no output directory: pass --out or set output.dir".into()))?;
    OutputDir::create(&dir)
}

#[derive(Debug, Default, Serialize)]
struct Timing(Map<String, Value>);

impl Timing {
    fn lap(&mut self, key: &str, since: Instant) {
        self.0.insert(key.into(), json!(since.elapsed().as_secs_f64()));
    }

    fn write(&self, out: &OutputDir) -> Result<(), CliError> {
        let bytes = serde_json::to_vec_pretty(&self.0).map_err(|e| CliError::Invariant(e.to_string()))?;
        out.write_untracked("timing.json", &bytes)
    }
}

fn state_csv(state: &ClusterState, which: StateExport) -> Vec<u8> {
    let mut csv = Csv::new(&["block", "first", "last", "mass", "momentum", "position", "velocity", "alpha", "beta"]);
    for (k, b) in state.blocks.iter().enumerate() {
        if which == StateExport::Nontrivial && b.is_singleton() {
            continue;
        }
        csv.row(&[
            Cell::U(k as u64),
            Cell::U(b.first as u64),
            Cell::U(b.last as u64),
            Cell::F(b.mass),
            Cell::F(b.momentum),
            Cell::F(b.position),
            Cell::F(b.velocity),
            Cell::F(b.alpha),
            Cell::F(b.beta),
        ]);
    }
    csv.into_bytes()
}

fn turbulence_json(report: &TurbulenceReport) -> Value {
    json!({
        "horizon": report.horizon,
        "point_width": report.point_width,
        "max_width": report.max_width(),
        "events": report.log.events.len(),
        "intervals": report.intervals,
        "first_shock_times": report.tau,
    })
}

pub struct SimulateOutcome {
    pub manifest: RunManifest,
    pub samples: Vec<Sample>,
}

pub fn simulate(scenario: &Scenario, opts: &Options) -> Result<SimulateOutcome, CliError> {
    let mut out = output_dir(scenario, opts)?;
    let mut timing = Timing::default();
    let grid = scenario.grid()?;
    let seed = resolve_seed(scenario, opts);
    let mut samples = Vec::new();
    if !grid.is_empty() {
        let start = Instant::now();
        let sys = scenario.system()?;
        timing.lap("discretize", start);

        let start = Instant::now();
        let states = states_checked(&sys, &grid)?;
        timing.lap("states", start);
        let files: Vec<Vec<u8>> = states.par_iter().map(|s| state_csv(s, scenario.output.states)).collect();
        for (k, bytes) in files.iter().enumerate() {
            out.write(&format!("states/t{k:04}.csv"), bytes)?;
        }

        let start = Instant::now();
        let report = turbulent_intervals(&sys, scenario.run.horizon);
        timing.lap("turbulence", start);
        out.write_json("turbulence.json", &turbulence_json(&report))?;

        let start = Instant::now();
        samples = draw_samples(&sys, scenario, opts)?;
        let a = sys.positions();
        let bundles = samples
            .par_iter()
            .map(|s| build_bundle(&sys, &report, a[s.particle], &states))
            .collect::<Result<Vec<_>, _>>()?;
        let mut meta = Vec::with_capacity(bundles.len());
        for (j, (s, b)) in samples.iter().zip(&bundles).enumerate() {
            let mut csv = Csv::new(&["t", "X", "Z1", "Z2", "Z3", "Z4", "Y"]);
            for k in 0..b.times.len() {
                csv.row(&[
                    Cell::F(b.times[k]),
                    Cell::F(b.x[k]),
                    Cell::F(b.z1[k]),
                    Cell::F(b.z2[k]),
                    Cell::F(b.z3[k]),
                    Cell::F(b.z4[k]),
                    Cell::F(b.y[k]),
                ]);
            }
            let file = format!("bundles/sample{j:04}.csv");
            out.write(&file, &csv.into_bytes())?;
            meta.push(json!({
                "sample": j,
                "requested": s.requested,
                "particle": b.particle,
                "x0": b.x0,
                "gamma": b.gamma,
                "interval": b.interval,
                "entry_side": b.entry_side,
                "file": file,
            }));
        }
        out.write_json("bundles.json", &meta)?;

        let mut intervals: Vec<usize> = bundles.iter().map(|b| b.interval).collect();
        intervals.sort_unstable();
        intervals.dedup();
        let mut geometry = Vec::with_capacity(intervals.len());
        for id in intervals {
            let iv = &report.intervals[id];
            geometry.push(json!({
                "interval": id,
                "kind": iv.kind,
                "birth_time": iv.birth_time,
                "birth_position": iv.birth_position,
                "polylines": delta_shock_geometry(&sys, &report, id, &states)?,
            }));
        }
        out.write_json("geometry.json", &geometry)?;
        timing.lap("bundles", start);
    }
    timing.write(&out)?;
    let manifest = out.finish("simulate", scenario_digest(scenario), seed)?;
    Ok(SimulateOutcome { manifest, samples })
}

/// Single report for a family of evaluations, judged by the worst one.
fn worst_of(name: &str, reports: Vec<CheckReport>) -> Option<CheckReport> {
    let count = reports.len();
    let worst = reports.into_iter().max_by(|a, b| {
        let key = |r: &CheckReport| if r.residual.is_nan() { f64::INFINITY } else { r.residual };
        key(a).total_cmp(&key(b))
    })?;
    let mut d = Map::new();
    d.insert("evaluations".into(), json!(count));
    d.insert("worst".into(), json!(worst.name));
    d.extend(worst.diagnostics);
    Some(CheckReport::new(name, worst.residual, worst.tolerance, d))
}

fn structural_failure(name: &str, err: adhesion_core::Error) -> Result<CheckReport, CliError> {
    match err {
        adhesion_core::Error::Invariant(msg) => {
            let mut d = Map::new();
            d.insert("error".into(), json!(msg));
            Ok(CheckReport::new(name, f64::INFINITY, 0.0, d))
        }
        other => Err(other.into()),
    }
}

pub struct VerifyOutcome {
    pub reports: Vec<CheckReport>,
    /// A refinement violation or an oracle mismatch occurred.
    pub structural: bool,
    pub manifest: RunManifest,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.pass)
    }

    pub fn exit_code(&self) -> u8 {
        if self.structural {
            3
        } else if self.passed() {
            0
        } else {
            1
        }
    }
}

pub fn verify(scenario: &Scenario, opts: &Options) -> Result<VerifyOutcome, CliError> {
    let mut out = output_dir(scenario, opts)?;
    let mut timing = Timing::default();
    let grid = scenario.grid()?;
    let seed = resolve_seed(scenario, opts);
    let checks = &scenario.checks;
    let mut reports = Vec::new();
    let mut structural = false;

    if !checks.is_empty() {
        let start = Instant::now();
        let sys = scenario.system()?;
        timing.lap("discretize", start);
        let biased = opts.velocity_bias.map(|bias| BiasedFlow { system: &sys, bias });
        let flow: &dyn StateProvider = match &biased {
            Some(b) => b,
            None => &sys,
        };
        let exact = checks.exact_tolerance;
        let samples: Vec<usize> = draw_samples(&sys, scenario, opts)?.iter().map(|s| s.particle).collect();
        let sample_mask = (!samples.is_empty()).then_some(samples.as_slice());
        let needs_report = !checks.semimartingale.is_empty() || checks.iff.is_some();
        let report = needs_report.then(|| turbulent_intervals(&sys, scenario.run.horizon));

        if checks.velocity_conditional {
            let start = Instant::now();
            let all: Vec<CheckReport> = grid.par_iter().map(|&t| check_velocity_conditional(flow, t)).collect();
            reports.extend(worst_of("velocity_conditional", all).map(|r| r.with_tolerance(exact)));
            timing.lap("velocity_conditional", start);
        }
        if checks.martingale_x && grid.len() >= 2 {
            let start = Instant::now();
            let mut pairs: Vec<(f64, f64)> = grid.windows(2).map(|w| (w[0], w[1])).collect();
            pairs.push((grid[0], grid[grid.len() - 1]));
            let all = pairs
                .par_iter()
                .map(|&(s, t)| check_martingale_x(flow, s, t).or_else(|e| structural_failure("martingale_x", e)))
                .collect::<Result<Vec<_>, _>>()?;
            structural |= all.iter().any(|r| r.residual.is_infinite());
            reports.extend(worst_of("martingale_x", all).map(|r| r.with_tolerance(exact)));
            timing.lap("martingale_x", start);
        }
        if let Some(report) = &report {
            for &p in &checks.semimartingale {
                let start = Instant::now();
                let p = Process::from(p);
                let r = check_semimartingale_z(flow, report, p, sample_mask, &grid)
                    .or_else(|e| structural_failure(&format!("semimartingale_{}", p.name()), e))?;
                structural |= r.residual.is_infinite();
                reports.push(r.with_tolerance(exact));
                timing.lap(&format!("semimartingale_{}", p.name()), start);
            }
            if let Some(iff) = &checks.iff {
                for &p in &iff.processes {
                    let start = Instant::now();
                    let p = Process::from(p);
                    let r = check_martingale_iff_degenerate(flow, report, p, sample_mask, &grid, iff.tolerance)?;
                    reports.push(r.report());
                    timing.lap(&format!("iff_{}", p.name()), start);
                }
            }
        }
        for &psi in &checks.dissipation {
            let start = Instant::now();
            let f = ConvexTestFunction::new(psi.into())?;
            let (values, r) = dissipation_profile(flow, &f, &grid);
            let mut csv = Csv::new(&["t", "value"]);
            for (t, v) in values {
                csv.row(&[Cell::F(t), Cell::F(v)]);
            }
            out.write(&format!("dissipation/{}.csv", f.label()), &csv.into_bytes())?;
            reports.push(r.with_tolerance(exact));
            timing.lap(&format!("dissipation_{}", f.label()), start);
        }
        if checks.oracle_equivalence {
            let start = Instant::now();
            let all: Vec<CheckReport> = grid.par_iter().map(|&t| check_oracle_equivalence(&sys, t)).collect();
            structural |= all.iter().any(|r| !r.pass);
            reports.extend(worst_of("oracle_equivalence", all));
            timing.lap("oracle_equivalence", start);
        }
        if let Some(b) = &checks.burgers {
            let start = Instant::now();
            for &t in &b.times {
                let r = burgers_consistency(&sys, t, b.constant)?;
                reports.push(CheckReport {
                    name: format!("burgers_consistency_t{t}"),
                    ..r
                });
            }
            timing.lap("burgers", start);
        }
    }

    let pass = reports.iter().all(|r| r.pass);
    out.write_json(
        "report.json",
        &json!({
            "pass": pass,
            "structural_failure": structural,
            "velocity_bias": opts.velocity_bias,
            "checks": reports,
        }),
    )?;
    timing.write(&out)?;
    let manifest = out.finish("verify", scenario_digest(scenario), seed)?;
    Ok(VerifyOutcome {
        reports,
        structural,
        manifest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub particles: usize,
    pub max_width: f64,
    pub burgers_sup: Option<f64>,
    pub burgers_tolerance: Option<f64>,
    #[serde(skip)]
    pub seconds: f64,
}

/// Convergence table over the particle counts in `sweep.n`.
pub fn sweep(scenario: &Scenario, opts: &Options) -> Result<(Vec<SweepRow>, RunManifest), CliError> {
    let sizes = scenario
        .sweep
        .as_ref()
        .map(|s| s.n.clone())
        .ok_or_else(|| CliError::Config("the scenario has no sweep section".into()))?;
    let mut out = output_dir(scenario, opts)?;
    let horizon = scenario.run.horizon;
    let constant = scenario.checks.burgers.as_ref().map_or(1.0, |b| b.constant);
    let rows = sizes
        .par_iter()
        .map(|&n| {
            let start = Instant::now();
            let sys = scenario.system_with(n)?;
            let max_width = turbulent_intervals(&sys, horizon).max_width();
            let burgers = if sys.provenance().is_some_and(|p| p.is_lebesgue()) && horizon > 0.0 {
                burgers_consistency(&sys, horizon, constant).ok()
            } else {
                None
            };
            Ok(SweepRow {
                n,
                particles: sys.len(),
                max_width,
                burgers_sup: burgers.as_ref().map(|r| r.residual),
                burgers_tolerance: burgers.as_ref().map(|r| r.tolerance),
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut csv = Csv::new(&["n", "particles", "max_width", "burgers_sup", "burgers_tolerance"]);
    let mut timing = Timing::default();
    for r in &rows {
        let opt = |x: Option<f64>| x.map_or(Cell::Empty, Cell::F);
        csv.row(&[
            Cell::U(r.n as u64),
            Cell::U(r.particles as u64),
            Cell::F(r.max_width),
            opt(r.burgers_sup),
            opt(r.burgers_tolerance),
        ]);
        timing.0.insert(format!("n{}", r.n), json!(r.seconds));
    }
    out.write("sweep.csv", &csv.into_bytes())?;
    timing.write(&out)?;
    let manifest = out.finish("sweep", scenario_digest(scenario), resolve_seed(scenario, opts))?;
    Ok((rows, manifest))
}
