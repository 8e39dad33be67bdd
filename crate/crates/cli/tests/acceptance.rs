//! One line per acceptance criterion, with measured values and the pinned
//! tolerances. Failures are reported, and only abort the run when
//! `ADHESION_ACCEPTANCE_STRICT` is set.

use std::path::Path;
use std::time::Instant;

use adhesion_cli::{simulate, verify, Options, Scenario};
use adhesion_core::fixtures::{neg_arctan, single_shock, smooth_compression, two_density_shock};
use adhesion_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Line {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn max_err(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    pairs.into_iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn shock_block(state: &ClusterState) -> Block {
    *state
        .nontrivial()
        .max_by(|a, b| a.mass.total_cmp(&b.mass))
        .expect("a nontrivial block")
}

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    Scenario::load(&path).expect("bundled scenario")
}

fn grid(end: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| end * k as f64 / (count - 1) as f64).collect()
}

fn random_system(rng: &mut ChaCha8Rng, n: usize) -> ParticleSystem {
    let mut a = Vec::with_capacity(n);
    let mut x = rng.random_range(-1.0..1.0);
    for _ in 0..n {
        a.push(x);
        x += rng.random_range(0.05..1.0);
    }
    let m = (0..n).map(|_| rng.random_range(0.1..2.0)).collect();
    let v = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    ParticleSystem::new(a, m, v).expect("valid random system")
}

/// Block position, velocity and cluster bounds against closed forms.
fn shock_reproduction(sys: &ParticleSystem, times: &[f64], speed: f64, left_speed: f64) -> (f64, f64, f64) {
    let (mut pos, mut vel, mut bounds) = (0.0f64, 0.0f64, 0.0f64);
    for &t in times {
        let b = shock_block(&cluster_at(sys, t));
        let (lo, hi) = cluster_bounds(sys, t, b.position).expect("bounds at the shock");
        pos = pos.max((b.position - speed * t).abs());
        vel = vel.max((b.velocity - speed).abs());
        bounds = bounds.max(max_err([(lo, left_speed * t), (hi, speed * t)]));
    }
    (pos, vel, bounds)
}

fn ac1() -> Line {
    let start = Instant::now();
    let sys = single_shock(10_000, 2.0).unwrap();
    let (pos, vel, bounds) = shock_reproduction(&sys, &[0.5, 1.0, 2.0], 0.5, -0.5);
    let secs = start.elapsed().as_secs_f64();
    Line {
        id: "AC1",
        title: "single shock reproduction",
        pass: pos <= 1e-3 && bounds <= 1e-3 && vel <= 1e-6 && secs < 1.0,
        detail: format!(
            "position err {pos:.3e} (tol 1e-3), bounds err {bounds:.3e} (tol 1e-3), velocity err {vel:.3e} (tol 1e-6), {secs:.3}s (limit 1s)"
        ),
    }
}

fn ac2() -> Line {
    let c = 2.0 - 2f64.sqrt();
    let sys = two_density_shock(10_000).unwrap();
    let (pos, vel, bounds) = shock_reproduction(&sys, &[0.5, 1.0], c, 1.0 - 2f64.sqrt());
    Line {
        id: "AC2",
        title: "two-density shock reproduction",
        pass: pos <= 1e-3 && bounds <= 1e-3 && vel <= 1e-6,
        detail: format!(
            "position err {pos:.3e} (tol 1e-3), bounds err {bounds:.3e} (tol 1e-3), velocity err {vel:.3e} (tol 1e-6)"
        ),
    }
}

fn ac3() -> Line {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut mismatches) = (0.0f64, 0usize);
    for _ in 0..1000 {
        let n = rng.random_range(1..=12);
        let sys = random_system(&mut rng, n);
        for _ in 0..5 {
            let t = rng.random_range(0.0..5.0);
            let r = check_oracle_equivalence(&sys, t);
            if r.residual.is_infinite() {
                mismatches += 1;
            } else {
                worst = worst.max(r.residual);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Line {
        id: "AC3",
        title: "oracle equivalence",
        pass: mismatches == 0 && worst <= 1e-9 && secs < 10.0,
        detail: format!(
            "5000 comparisons, {mismatches} partition mismatches, position err {worst:.3e} (tol 1e-9), {secs:.3}s (limit 10s)"
        ),
    }
}

/// Largest residual of the exact martingale identities on one system.
fn exact_suite(sys: &ParticleSystem, times: &[f64]) -> f64 {
    let horizon = times[times.len() - 1];
    let report = turbulent_intervals(sys, horizon);
    let mut worst = 0.0f64;
    for &t in times {
        worst = worst.max(check_velocity_conditional(sys, t).residual);
    }
    for w in times.windows(2) {
        worst = worst.max(check_martingale_x(sys, w[0], w[1]).map_or(f64::INFINITY, |r| r.residual));
    }
    worst = worst.max(check_martingale_x(sys, 0.0, horizon).map_or(f64::INFINITY, |r| r.residual));
    for p in [Process::Z1, Process::Z2, Process::Z3, Process::Z4, Process::Y] {
        let r = check_semimartingale_z(sys, &report, p, None, times).map_or(f64::INFINITY, |r| r.residual);
        worst = worst.max(r);
    }
    worst
}

fn ac4() -> Line {
    let ex1 = exact_suite(&single_shock(10_000, 2.0).unwrap(), &grid(2.0, 100));
    let ex2 = exact_suite(&two_density_shock(10_000).unwrap(), &grid(1.0, 100));
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let mut random = 0.0f64;
    for _ in 0..100 {
        let sys = random_system(&mut rng, 64);
        random = random.max(exact_suite(&sys, &grid(4.0, 41)));
    }
    Line {
        id: "AC4",
        title: "exact martingale suite",
        pass: ex1.max(ex2).max(random) <= 1e-12,
        detail: format!(
            "max residual: single shock {ex1:.3e}, two-density {ex2:.3e}, 100 random n=64 {random:.3e} (tol 1e-12)"
        ),
    }
}

fn ac5() -> Line {
    let ex1 = single_shock(10_000, 2.0).unwrap();
    let g1 = grid(2.0, 100);
    let r1 = turbulent_intervals(&ex1, 2.0);
    let samples: Vec<usize> = adhesion_cli::sample_by_mass(&ex1, 100, 42);
    let iff1 = check_martingale_iff_degenerate(&ex1, &r1, Process::Z3, Some(&samples), &g1, 1e-3).unwrap();
    let wide = r1.max_width() > r1.point_width;
    let shock_side = iff1.driftless.residual > 1e-3 && wide;

    let smooth = smooth_compression(10_000).unwrap();
    let g2 = grid(2.0, 21);
    let r2 = turbulent_intervals(&smooth, 2.0);
    let driftless = |p: Process| {
        check_martingale_iff_degenerate(&smooth, &r2, p, None, &g2, 1e-3)
            .unwrap()
            .driftless
            .residual
    };
    let (z3, z1, y) = (driftless(Process::Z3), driftless(Process::Z1), driftless(Process::Y));
    let widths: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&n| turbulent_intervals(&smooth_compression(n).unwrap(), 2.0).max_width())
        .collect();
    let shrinking = widths.windows(2).all(|w| w[1] < w[0]);
    Line {
        id: "AC5",
        title: "martingale-iff criterion",
        pass: shock_side && z3 <= 1e-3 && shrinking,
        detail: format!(
            "single shock Z3 driftless {:.3e} (need > 1e-3, widest interval {:.3e}); smooth n=1e4 Z3 driftless {z3:.3e} (tol 1e-3) [Z1 {z1:.3e}, Y {y:.3e}]; widths {:?} decreasing: {shrinking}",
            iff1.driftless.residual,
            r1.max_width(),
            widths.iter().map(|w| format!("{w:.2e}")).collect::<Vec<_>>(),
        ),
    }
}

fn ac6() -> Line {
    let psis = [PsiKind::Square, PsiKind::Abs, PsiKind::Hinge(0.3)];
    let mut rise = 0.0f64;
    for (sys, end) in [(single_shock(10_000, 2.0).unwrap(), 2.0), (two_density_shock(10_000).unwrap(), 1.0)] {
        for kind in &psis {
            let psi = ConvexTestFunction::new(kind.clone()).unwrap();
            let (_, r) = dissipation_profile(&sys, &psi, &grid(end, 100));
            rise = rise.max(r.residual);
        }
    }
    let pair = ParticleSystem::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]).unwrap();
    let times = [0.0, 0.5, 0.999_999, 1.0, 1.5, 4.0];
    let (values, _) = dissipation_profile(&pair, &ConvexTestFunction::new(PsiKind::Square).unwrap(), &times);
    let exact = values.iter().all(|&(t, v)| v == if t < 1.0 { 1.0 } else { 0.5 });
    Line {
        id: "AC6",
        title: "dissipativity",
        pass: rise <= 1e-12 && exact,
        detail: format!("largest step increase {rise:.3e} (slack 1e-12); two-particle values exact: {exact}"),
    }
}

fn ac7() -> Line {
    let n = 10_000;
    let sys = single_shock(n, 2.0).unwrap();
    let (predicted, mass) = burgers_atom(&sys, 1.0, 0.5).unwrap();
    let atom_err = (predicted - 1.0).abs().max((mass - predicted).abs());
    let atom_ok = atom_err <= 2.0 / n as f64;

    let sups: Vec<f64> = [1000, 2000, 4000, 8000]
        .iter()
        .map(|&k| burgers_consistency(&single_shock(k, 2.0).unwrap(), 1.0, 4.0).unwrap().residual)
        .collect();
    let ratios: Vec<f64> = sups.windows(2).map(|w| w[0] / w[1]).collect();
    let halves = ratios.iter().all(|r| (2.0 / 1.5..=2.0 * 1.5).contains(r));

    // Continuity points stay 1e-2 away from the shocks of the continuum flow.
    let tol = (10.0 / n as f64).max(1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let step = fixtures::unit_step();
    let mut lo_err = 0.0f64;
    let state = cluster_at(&sys, 1.0);
    let (a, b) = safe_lagrangian_range(&sys, &state).unwrap();
    let (xlo, xhi) = (state.eulerian(a), state.eulerian(b));
    let mut points = 0;
    while points < 500 {
        let x = rng.random_range(xlo..xhi);
        if (x - 0.5).abs() < 1e-2 {
            continue;
        }
        let u = velocity_in(&sys, &state, x).unwrap().u;
        lo_err = lo_err.max((u - lax_oleinik_oracle(&step, x, 1.0, 4001)).abs());
        points += 1;
    }
    let smooth = smooth_compression(n).unwrap();
    let prof = neg_arctan(-4.0, 4.0, 2 * n + 1).unwrap();
    let state = cluster_at(&smooth, 2.0);
    let (a, b) = safe_lagrangian_range(&smooth, &state).unwrap();
    let (xlo, xhi) = (state.eulerian(a), state.eulerian(b));
    while points < 1000 {
        let x = rng.random_range(xlo..xhi);
        if x.abs() < 1e-2 {
            continue;
        }
        let u = velocity_in(&smooth, &state, x).unwrap().u;
        lo_err = lo_err.max((u - lax_oleinik_oracle(&prof, x, 2.0, 4001)).abs());
        points += 1;
    }
    Line {
        id: "AC7",
        title: "Burgers link",
        pass: atom_ok && halves && lo_err <= tol,
        detail: format!(
            "atom mass {mass:.12} vs predicted {predicted:.12} (tol 2/n = {:.1e}); sup distance {:?} ratios {:?} (need 2 within factor 1.5); Lax-Oleinik err {lo_err:.3e} at 1000 points (tol {tol:.1e})",
            2.0 / n as f64,
            sups.iter().map(|s| format!("{s:.3e}")).collect::<Vec<_>>(),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>(),
        ),
    }
}

fn ac8() -> Line {
    let sys = single_shock(100_000, 2.0).unwrap();
    let start = Instant::now();
    let state = cluster_at(&sys, 1.0);
    let cluster_secs = start.elapsed().as_secs_f64();
    assert!(!state.blocks.is_empty());

    let tmp = tempfile::tempdir().unwrap();
    let opts = Options {
        out: Some(tmp.path().to_path_buf()),
        ..Options::default()
    };
    let start = Instant::now();
    let outcome = verify(&scenario("example1.json"), &opts).expect("verify runs");
    let verify_secs = start.elapsed().as_secs_f64();
    Line {
        id: "AC8",
        title: "performance",
        pass: cluster_secs < 1.0 && verify_secs < 30.0 && outcome.passed(),
        detail: format!(
            "cluster_at n=1e5 {cluster_secs:.4}s (limit 1s); single-shock verify pipeline, 100 times x 100 samples, {verify_secs:.2}s (limit 30s), all checks pass: {}",
            outcome.passed()
        ),
    }
}

fn ac9() -> Line {
    let names = ["example1.json", "example2.json", "smooth.json", "constant.json"];
    let mut identical = 0;
    for name in names {
        let sc = scenario(name);
        let manifests: Vec<Vec<u8>> = (0..2)
            .map(|_| {
                let tmp = tempfile::tempdir().unwrap();
                let opts = Options {
                    out: Some(tmp.path().to_path_buf()),
                    ..Options::default()
                };
                simulate(&sc, &opts).expect("simulate runs");
                std::fs::read(tmp.path().join("manifest.json")).unwrap()
            })
            .collect();
        identical += usize::from(manifests[0] == manifests[1]);
    }
    Line {
        id: "AC9",
        title: "determinism",
        pass: identical == names.len(),
        detail: format!("{identical}/{} bundled scenarios gave byte-identical manifests", names.len()),
    }
}

fn main() {
    let criteria: [fn() -> Line; 9] = [ac1, ac2, ac3, ac4, ac5, ac6, ac7, ac8, ac9];
    let mut failed = 0;
    for run in criteria {
        let line = run();
        let status = if line.pass { "PASS" } else { "FAIL" };
        println!("{} {status} {}: {}", line.id, line.title, line.detail);
        failed += usize::from(!line.pass);
    }
    println!("{}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var_os("ADHESION_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
