use proptest::prelude::*;

use slab_core::free_energy::{
    delta_rate, exact_m_marginal_lambdas, f_band, f_spiked, overlap_grid, semicircle_funcs,
};
use slab_core::matrix_model::sample_spiked_instance;
use slab_core::thresholds::{bump_f, compute_thresholds, m_pi, theta_0l, EigenTriple};
use slab_core::PhasePoint;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn thresholds_ordered_above_theta_0l(alpha in 1.2f64..100.0, lift in 1.001f64..3.0) {
        let theta = theta_0l(alpha).unwrap() * lift;
        let p = PhasePoint::new(alpha, theta, 1000).unwrap();
        let t = compute_thresholds(&p, &EigenTriple::limiting(theta).unwrap()).unwrap();
        prop_assert!(t.valid);
        prop_assert!(t.m_be < t.m1 && t.m1 < t.m2 && t.m2 < t.m3 && t.m3 < t.m_e && t.m_e < 1.0);
        prop_assert!(t.c_e > 0.0 && t.kappa_be > 0.0);
    }

    #[test]
    fn m_pi_is_a_cosine(alpha in 0.01f64..50.0, theta in 0.1f64..50.0) {
        let m = m_pi(&PhasePoint::new(alpha, theta, 10).unwrap());
        prop_assert!((0.0..1.0).contains(&m));
    }

    #[test]
    fn bump_is_negative_decreasing_concave(x in 0.01f64..0.99) {
        let b = bump_f(x).unwrap();
        prop_assert!(b.f < 0.0 && b.df < 0.0 && b.d2f < 0.0);
    }

    #[test]
    fn band_profile_never_exceeds_free_energy(alpha in 0.1f64..30.0, theta in 1.01f64..30.0, q in 0.0f64..0.999) {
        let p = PhasePoint::new(alpha, theta, 1000).unwrap();
        prop_assert!(f_band(q, &p).unwrap() <= f_spiked(&p).unwrap() + 1e-12);
    }

    #[test]
    fn delta_is_nonnegative(alpha in 1.0001f64..50.0, theta in 1.01f64..50.0) {
        prop_assert!(delta_rate(&PhasePoint::new(alpha, theta, 1000).unwrap()).unwrap() >= -1e-15);
    }

    #[test]
    fn semicircle_transforms_are_positive_and_ordered(z in 2.0001f64..50.0) {
        let s = semicircle_funcs(z).unwrap();
        prop_assert!(s.s1 > 0.0 && s.s2 > 0.0);
        // Cauchy–Schwarz: s1² ≤ s2.
        prop_assert!(s.s1 * s.s1 <= s.s2 * (1.0 + 1e-12));
    }

    #[test]
    fn instances_are_symmetric_with_spike_on_the_sphere(seed in any::<u64>(), n in 4usize..30, theta in 0.1f64..6.0) {
        let p = PhasePoint::new(1.0, theta, n).unwrap();
        let inst = sample_spiked_instance(&p, seed).unwrap();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(inst.entry(i, j), inst.entry(j, i));
            }
        }
        let v2: f64 = inst.spike().iter().map(|x| x * x).sum();
        prop_assert!((v2 - n as f64).abs() < 1e-9 * n as f64);
    }

    #[test]
    fn marginal_is_a_symmetric_density(seed in any::<u64>(), n in 6usize..40, beta in 0.05f64..4.0) {
        let p = PhasePoint::new(2.0, 3.0, n).unwrap();
        let s = slab_core::experiments::instance_spectrum(&p, seed).unwrap();
        let d = exact_m_marginal_lambdas(s.lambdas(), beta, &overlap_grid(400)).unwrap();
        prop_assert!((d.mass_between(-1.0, 1.0) - 1.0).abs() < 1e-10);
        prop_assert!((d.mass_between(-1.0, 0.0) - 0.5).abs() < 1e-10);
    }
}
