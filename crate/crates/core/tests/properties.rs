//! Property tests for the stated invariants, over randomly drawn parameters.

use nht_core::bridge_mc::{trace_mc, TraceEstimate};
use nht_core::inequality_harness::{check_3p, check_5p, check_scalar_inequality};
use nht_core::levy_kernels::{eval_kernel, kernel_at_zero, KernelSpec};
use nht_core::potentials::{exact_norms, PotentialSpec};
use nht_core::quadrature::integrate_log;
use nht_core::subordinators::{eta_density, SubordinatorSpec};
use nht_core::trace_engine::{general_bound, spectral_oracle_trace, theorem1_sandwich, SpectralGrid};
use nht_core::{QuadratureConfig, SeedStream};
use proptest::prelude::*;

fn cfg() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn stable_scaling(alpha in 0.5f64..1.95, d in 1usize..=3, t in 0.05f64..3.0, r in 0.0f64..4.0) {
        let s = KernelSpec::stable(alpha, d).unwrap();
        let lhs = eval_kernel(&s, t, r, &cfg()).unwrap();
        let rhs = t.powf(-(d as f64) / alpha) * eval_kernel(&s, 1.0, t.powf(-1.0 / alpha) * r, &cfg()).unwrap();
        prop_assert!(rel(lhs, rhs) < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn relativistic_scaling(alpha in 0.6f64..1.9, m in 0.2f64..3.0, t in 0.05f64..1.0, r in 0.0f64..3.0) {
        let s = KernelSpec::relativistic(alpha, m, 1).unwrap();
        let unit = KernelSpec::relativistic(alpha, 1.0, 1).unwrap();
        let lhs = eval_kernel(&s, t, r, &cfg()).unwrap();
        let rhs = m.powf(1.0 / alpha) * eval_kernel(&unit, m * t, m.powf(1.0 / alpha) * r, &cfg()).unwrap();
        prop_assert!(rel(lhs, rhs) < 1e-8, "{lhs} vs {rhs}");
    }

    #[test]
    fn kernel_is_radially_decreasing_and_peaks_at_zero(
        alpha in 0.5f64..2.0,
        d in 1usize..=3,
        t in 0.05f64..2.0,
        r1 in 0.0f64..5.0,
        dr in 0.001f64..5.0,
    ) {
        let s = KernelSpec::stable(alpha, d).unwrap();
        let p0 = kernel_at_zero(&s, t, &cfg()).unwrap();
        let a = eval_kernel(&s, t, r1, &cfg()).unwrap();
        let b = eval_kernel(&s, t, r1 + dr, &cfg()).unwrap();
        prop_assert!(a <= p0 * (1.0 + 1e-9));
        prop_assert!(b <= a * (1.0 + 1e-9));
    }

    #[test]
    fn subordinator_laplace_transform(q in 0.2f64..0.95, lambda in 0.3f64..3.0) {
        let sub = SubordinatorSpec::stable(q).unwrap();
        let f = |s: f64| (-lambda * s).exp() * eta_density(&sub, 1.0, s, &cfg()).map(|v| v.value).unwrap_or(f64::NAN);
        let mut total = 0.0;
        let mut u = -40.0;
        while u < 12.0 {
            total += integrate_log(f, u, u + 4.0, 1e-18, 1e-10, 400).unwrap().value;
            u += 4.0;
        }
        prop_assert!((total - (-lambda.powf(q)).exp()).abs() < 1e-4, "{total}");
    }

    #[test]
    fn stable_subordination_round_trip(alpha in 0.5f64..1.9, t in 0.1f64..1.5, r in 0.0f64..2.0) {
        let sub = SubordinatorSpec::stable(alpha / 2.0).unwrap();
        let g = |s: f64| {
            let eta = eta_density(&sub, t, s, &cfg()).map(|v| v.value).unwrap_or(f64::NAN);
            (4.0 * std::f64::consts::PI * s).powf(-0.5) * (-r * r / (4.0 * s)).exp() * eta
        };
        let c = (2.0 / alpha) * t.ln();
        let mut total = 0.0;
        let mut u = c - 25.0;
        while u < c + 60.0 {
            total += integrate_log(g, u, u + 5.0, 1e-18, 1e-10, 400).unwrap().value;
            u += 5.0;
        }
        let exact = eval_kernel(&KernelSpec::stable(alpha, 1).unwrap(), t, r, &cfg()).unwrap();
        prop_assert!(rel(total, exact) < 1e-4, "{total} vs {exact}");
    }

    #[test]
    fn point_witnesses_scale_covariant(alpha in 0.6f64..1.9, frac in 0.1f64..0.9, lambda in 0.2f64..5.0) {
        let s = KernelSpec::stable(alpha, 1).unwrap();
        let (t, r) = (0.5, [0.0, 0.2, 0.7, 1.5]);
        let rl: Vec<f64> = r.iter().map(|x| x * lambda.powf(1.0 / alpha)).collect();
        let a3 = check_3p(&s, t, frac * t, &r, &cfg()).unwrap().max_ratio;
        let b3 = check_3p(&s, lambda * t, lambda * frac * t, &rl, &cfg()).unwrap().max_ratio;
        let a5 = check_5p(&s, t, frac * t, &r, &cfg()).unwrap().max_ratio;
        let b5 = check_5p(&s, lambda * t, lambda * frac * t, &rl, &cfg()).unwrap().max_ratio;
        prop_assert!(rel(b3, a3) < 1e-8 && rel(b5, a5) < 1e-8);
    }

    #[test]
    fn scalar_inequality_holds(b in 0.0f64..8.0, f in 0.0f64..=1.0) {
        let c = check_scalar_inequality(&[-f * b], &[b]);
        prop_assert_eq!((c.checked, c.violations), (1, 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn spectral_trace_respects_general_bound_and_sign(
        alpha in 0.8f64..1.9,
        depth in -1.5f64..1.5,
        width in 0.5f64..1.5,
        t in 0.02f64..0.5,
    ) {
        prop_assume!(depth.abs() > 0.05);
        let s = KernelSpec::stable(alpha, 1).unwrap();
        let v = PotentialSpec::gaussian_well(depth, width, vec![0.0]).unwrap();
        let grid = SpectralGrid::for_potential(&v).unwrap();
        let e = spectral_oracle_trace(&s, &v, t, &grid, &cfg()).unwrap();
        let bound = general_bound(&s, &v, t, &cfg()).unwrap();
        prop_assert!(e.value.abs() <= bound + e.budget.unwrap());
        if v.is_nonpositive() {
            prop_assert!(e.value > 0.0);
            let w = theorem1_sandwich(&s, &v, t, &cfg()).unwrap();
            let b = e.budget.unwrap();
            prop_assert!(e.value >= w.lower - b && e.value <= w.upper + b);
        } else {
            prop_assert!(e.value < 0.0);
        }
    }

    #[test]
    fn mc_trace_nonnegative_for_wells_and_seed_deterministic(
        alpha in 0.8f64..1.9,
        depth in 0.2f64..2.0,
        t in 0.05f64..0.3,
        seed in any::<u64>(),
    ) {
        let s = KernelSpec::stable(alpha, 1).unwrap();
        let v = PotentialSpec::gaussian_well(depth, 1.0, vec![0.0]).unwrap();
        let run = || -> TraceEstimate {
            trace_mc(&s, &v, t, 8, 10, 200, &SeedStream::new(seed), &cfg()).unwrap()
        };
        let a = run();
        prop_assert!(a.value >= 0.0);
        prop_assert_eq!(a, run());
        let n = exact_norms(&v).unwrap();
        prop_assert!(n.int_v < 0.0);
    }
}
