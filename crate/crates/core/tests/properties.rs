use proptest::prelude::*;

use greenwalk::green::{cl_norm, evolve_semigroup, green_regular_fourier, CLFunction};
use greenwalk::renorm::{mc_time_changed_expectation, normalization_n};
use greenwalk::simulate::{empirical_random_green_measure, sample_cpp_path, substream, OccupationBins};
use greenwalk::subordinate::{gfd_apply, RhoDensity, SampledKernel, SubordinatorSpec};
use greenwalk::{GridSpec, JumpKernel};

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn semigroup_conserves_mass_and_contracts(
        center in -3.0f64..3.0,
        width in 0.5f64..3.0,
        t in 0.0f64..20.0,
    ) {
        let k = JumpKernel::gaussian(1).unwrap();
        let grid = GridSpec::new(1, 256, 32.0).unwrap();
        let f = CLFunction::gaussian_bump(vec![center], width, 1.0).unwrap().sample(&grid);
        let u = evolve_semigroup(&k, &f, t, 1e-13).unwrap();
        prop_assert!((u.integral() - f.integral()).abs() <= 1e-9 * f.integral());
        prop_assert!(u.sup_norm() <= f.sup_norm() * (1.0 + 1e-12));
        prop_assert!(u.values().iter().all(|&v| v >= -1e-14));
    }

    #[test]
    fn green_kernel_decreases_in_lambda_and_radius(r in 0.0f64..4.0, lambda in 0.0f64..2.0) {
        let k = JumpKernel::gaussian(3).unwrap();
        let g = green_regular_fourier(&k, &[r, 0.0, 0.0], lambda).unwrap();
        let g_lambda = green_regular_fourier(&k, &[r, 0.0, 0.0], lambda + 0.5).unwrap();
        let g_far = green_regular_fourier(&k, &[r + 0.5, 0.0, 0.0], lambda).unwrap();
        prop_assert!(g > 0.0);
        prop_assert!(g_lambda < g);
        prop_assert!(g_far < g);
    }

    #[test]
    fn cl_norm_is_homogeneous(c in -5.0f64..5.0, width in 0.3f64..2.0) {
        let f = CLFunction::gaussian_bump(vec![0.0, 0.0], width, 1.0).unwrap();
        let n = cl_norm(&f).unwrap();
        prop_assert!((cl_norm(&f.scaled(c)).unwrap() - c.abs() * n).abs() <= 1e-12 * n.max(1.0));
    }

    #[test]
    fn inverse_subordinator_law_is_ordered(t in 0.1f64..10.0, tau in 0.0f64..5.0, dtau in 0.01f64..2.0) {
        for spec in [SubordinatorSpec::stable(0.5).unwrap(), SubordinatorSpec::stable(0.7).unwrap()] {
            let rho = RhoDensity::new(&spec);
            let c0 = rho.cdf(t, tau).unwrap();
            let c1 = rho.cdf(t, tau + dtau).unwrap();
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&c0));
            prop_assert!(c1 >= c0 - 1e-9);
            // D(t) grows with t, so its CDF at fixed τ falls.
            prop_assert!(rho.cdf(2.0 * t, tau).unwrap() <= c0 + 1e-9);
            prop_assert!(rho.density(t, tau).unwrap() >= -1e-9);
        }
    }

    #[test]
    fn normalization_is_increasing(a in 1e-3f64..1e4, q in 1.001f64..10.0, alpha in 0.1f64..0.9) {
        let s = SubordinatorSpec::stable(alpha).unwrap();
        prop_assert!(normalization_n(&s, a * q) > normalization_n(&s, a));
        // Gamma's N(T) saturates at b/a; beyond T ≈ 40 the increments are below rounding.
        let g = SubordinatorSpec::gamma(1.0, 2.0).unwrap();
        prop_assert!(normalization_n(&g, a * q) >= normalization_n(&g, a));
        prop_assert!(normalization_n(&g, a * q) <= 2.0);
    }

    #[test]
    fn gfd_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, w in 0.5f64..5.0) {
        let s = SubordinatorSpec::stable(0.5).unwrap();
        let n = 200;
        let k = SampledKernel::from_subordinator(&s, 0.01, n).unwrap();
        let f: Vec<f64> = (0..=n).map(|j| (w * j as f64 * 0.01).sin()).collect();
        let g: Vec<f64> = (0..=n).map(|j| (j as f64 * 0.01).powi(2)).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let (df, dg, dm) = (gfd_apply(&k, &f).unwrap(), gfd_apply(&k, &g).unwrap(), gfd_apply(&k, &mix).unwrap());
        for j in 1..=n {
            let expect = a * df[j] + b * dg[j];
            prop_assert!((dm[j] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn paths_are_reproducible_and_well_formed(seed in any::<u64>(), horizon in 0.5f64..50.0) {
        let k = JumpKernel::gaussian(2).unwrap();
        let p = sample_cpp_path(&k, &[0.5, -0.5], horizon, &mut substream(seed, 3)).unwrap();
        let q = sample_cpp_path(&k, &[0.5, -0.5], horizon, &mut substream(seed, 3)).unwrap();
        prop_assert_eq!(&p, &q);
        prop_assert!(p.jump_times.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(p.jump_times.iter().all(|&t| t > 0.0 && t <= horizon));
        prop_assert_eq!(p.state_at(0.0), &[0.5, -0.5][..]);
    }

    #[test]
    fn occupation_mass_identity(seed in any::<u64>(), horizon in 0.5f64..200.0) {
        let k = JumpKernel::gaussian(3).unwrap();
        let bins = OccupationBins::cube(3, 2.0, 4).unwrap();
        let h = empirical_random_green_measure(&k, &[0.1; 3], horizon, &bins, &mut substream(seed, 0)).unwrap();
        prop_assert!((h.total_mass() + h.escaped - horizon).abs() <= 1e-11 * horizon);
        prop_assert!(h.masses.iter().all(|&m| m >= 0.0));
    }
}

proptest! {
    #![proptest_config(config(8))]

    #[test]
    fn time_changed_estimates_are_seed_deterministic(seed in any::<u64>(), t in 0.1f64..3.0) {
        let k = JumpKernel::gaussian(1).unwrap();
        let s = SubordinatorSpec::stable(0.5).unwrap();
        let f = CLFunction::kernel_density(&k);
        let a = mc_time_changed_expectation(&k, &s, &f, &[0.0], t, 64, seed).unwrap();
        let b = mc_time_changed_expectation(&k, &s, &f, &[0.0], t, 64, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
