use adhesion_core::fixtures::neg_arctan;
use adhesion_core::*;
use proptest::prelude::*;

fn piecewise_constant(bps: &[f64], levels: &[f64]) -> VelocityProfile {
    let segs = levels
        .iter()
        .map(|&c| Affine {
            slope: 0.0,
            intercept: c,
        })
        .collect();
    VelocityProfile::new(bps.to_vec(), segs).unwrap()
}

prop_compose! {
    fn arb_steps()(k in 1usize..6)(
        gaps in prop::collection::vec(0.2f64..1.0, k),
        levels in prop::collection::vec(-2.0f64..2.0, k + 1),
    ) -> (Vec<f64>, Vec<f64>) {
        let mut bps = Vec::with_capacity(gaps.len());
        let mut x = -2.0;
        for g in gaps {
            x += g;
            bps.push(x);
        }
        (bps, levels)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn discretization_is_deterministic(n in 1usize..400) {
        let dist = MassDistribution::lebesgue(-4.0, 4.0).unwrap();
        let prof = neg_arctan(-4.0, 4.0, 33).unwrap();
        let a = discretize(&dist, &prof, n, (-4.0, 4.0)).unwrap();
        let b = discretize(&dist, &prof, n, (-4.0, 4.0)).unwrap();
        prop_assert_eq!(a.positions(), b.positions());
        prop_assert_eq!(a.masses(), b.masses());
        prop_assert_eq!(a.velocities(), b.velocities());
    }

    #[test]
    fn discretization_keeps_the_mass(n in 1usize..400, atom in 0.0f64..3.0, at in -1.5f64..1.5) {
        let dist = MassDistribution::new(
            vec![DensityPiece { lo: -2.0, hi: 2.0, density: 1.0 }],
            vec![Atom { position: at, mass: atom }],
            (-2.0, 2.0),
        ).unwrap();
        let sys = discretize(&dist, &VelocityProfile::constant(0.5), n, (-2.0, 2.0)).unwrap();
        let total = 4.0 + atom;
        prop_assert!((sys.total_mass() - total).abs() <= 1e-12 * total);
        prop_assert!(sys.len() <= n + 1);
    }

    #[test]
    fn quantiles_nest_under_doubling(n in 1usize..300) {
        let dist = MassDistribution::lebesgue(-4.0, 4.0).unwrap();
        let prof = neg_arctan(-4.0, 4.0, 17).unwrap();
        let coarse = discretize(&dist, &prof, n, (-4.0, 4.0)).unwrap();
        let fine = discretize(&dist, &prof, 2 * n, (-4.0, 4.0)).unwrap();
        let (c, f) = (coarse.positions(), fine.positions());
        prop_assert_eq!(f.len(), 2 * c.len());
        for (k, &x) in c.iter().enumerate() {
            prop_assert!(f[2 * k] < x && x < f[2 * k + 1]);
        }
    }

    #[test]
    fn negative_jump_check_ignores_refinement((bps, levels) in arb_steps(), cut in 0.1f64..0.9, seg in 0usize..6) {
        let dist = MassDistribution::lebesgue(-2.0, 4.0).unwrap();
        let coarse = piecewise_constant(&bps, &levels);
        // Split one interior segment without changing the function.
        let j = 1 + seg % bps.len().max(1);
        let mut fine_bps = bps.clone();
        let mut fine_levels = levels.clone();
        if j < bps.len() {
            fine_bps.insert(j, bps[j - 1] + cut * (bps[j] - bps[j - 1]));
            fine_levels.insert(j, levels[j]);
        }
        let fine = piecewise_constant(&fine_bps, &fine_levels);
        let want = levels.windows(2).all(|w| w[0] >= w[1]);
        prop_assert_eq!(validate_njc(&dist, &coarse).ok, want);
        prop_assert_eq!(validate_njc(&dist, &fine).ok, want);
    }
}
