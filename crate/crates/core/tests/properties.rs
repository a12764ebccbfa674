use kdvlab::coefficients::presets;
use kdvlab::gauge::{build_gauge, gauge_ode_residual};
use kdvlab::grid::{inner, l2_norm};
use kdvlab::solver::{absorbing_profile, apply_l, step, torus_defect, ABSORPTION_SLACK};
use kdvlab::transform::{adjoint, pullback, pushforward, reflect_field, space_reflection, straightening_map, time_reversal};
use kdvlab::{Coefficient, CoefficientSet, Field, SpatialGrid};
use num_complex::Complex64;
use proptest::prelude::*;

fn packet(grid: SpatialGrid, centre: f64, width: f64, xi: f64) -> Field {
    Field::from_fn(grid, 0.0, |x| Complex64::from_polar((-((x - centre) / width).powi(2)).exp(), xi * x))
}

fn variable(mean: f64, amp: f64, a2: f64, a1: f64, a0: f64) -> CoefficientSet {
    CoefficientSet::new(
        "random",
        Coefficient::trig(mean, amp, 1.0, 0.0, 0.0),
        Coefficient::trig(0.0, a2, 1.0, 0.0, 0.5),
        Coefficient::trig(a1, 0.3, 0.5, 0.0, 0.0),
        Coefficient::constant(a0),
    )
}

fn grid() -> SpatialGrid {
    SpatialGrid::new(20.0, 1024).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn one_step_is_linear(
        mean in 1.5f64..3.0, amp in -1.0f64..1.0, a2 in -1.0f64..1.0,
        c in -4.0f64..4.0, xi in -2.0f64..2.0,
        ar in -2.0f64..2.0, ai in -2.0f64..2.0,
    ) {
        let set = variable(mean, amp, a2, 0.2, 0.1);
        let g = grid();
        let (u, w) = (packet(g, c, 1.5, xi), packet(g, -c, 2.0, -xi));
        let (alpha, beta) = (Complex64::new(ar, ai), Complex64::new(ai, -ar));
        let lhs = step(&u.combine(alpha, &w, beta).unwrap(), &set, None, 1e-2).unwrap();
        let rhs = step(&u, &set, None, 1e-2).unwrap().combine(alpha, &step(&w, &set, None, 1e-2).unwrap(), beta).unwrap();
        let d = lhs.combine(Complex64::new(1.0, 0.0), &rhs, Complex64::new(-1.0, 0.0)).unwrap();
        prop_assert!(l2_norm(&d) <= 1e-12 * (1.0 + l2_norm(&rhs)));
    }

    #[test]
    fn skew_constant_flows_preserve_the_norm(a3 in -3.0f64..3.0, a1 in -3.0f64..3.0, xi in -3.0f64..3.0) {
        let set = CoefficientSet::new(
            "skew",
            Coefficient::constant(a3),
            Coefficient::zero(),
            Coefficient::constant(a1),
            Coefficient::zero(),
        );
        let u = packet(grid(), 0.0, 2.0, xi);
        let v = step(&u, &set, None, 5e-2).unwrap();
        prop_assert!((l2_norm(&v) / l2_norm(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_duality(mean in 1.5f64..3.0, amp in -1.0f64..1.0, a2 in -1.0f64..1.0, a0 in -1.0f64..1.0, t in 0.0f64..1.0) {
        let set = variable(mean, amp, a2, -0.4, a0);
        let g = SpatialGrid::new(20.0, 2048).unwrap();
        let (u, w) = (packet(g, 1.0, 2.0, 1.0), packet(g, -1.0, 1.5, -0.5));
        let lhs = inner(&apply_l(&u, &set, t), &w).unwrap();
        let rhs = inner(&u, &apply_l(&w, &adjoint(&set), t)).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-6 * (1.0 + lhs.norm()));
    }

    #[test]
    fn reflections_and_reversals_are_involutions(x in -10.0f64..10.0, t in 0.0f64..2.0, horizon in 0.5f64..3.0) {
        for p in presets() {
            let set = p.build().unwrap();
            let twice = space_reflection(&space_reflection(&set));
            let back = time_reversal(&time_reversal(&set, horizon), horizon);
            for j in 0..4 {
                prop_assert_eq!(twice.eval(j, t, x, 1, 0), set.eval(j, t, x, 1, 0));
                prop_assert!((back.eval(j, t, x, 0, 0) - set.eval(j, t, x, 0, 0)).abs() < 1e-12);
            }
        }
        let u = packet(grid(), x, 1.0, t);
        prop_assert_eq!(reflect_field(&reflect_field(&u)).values, u.values);
    }

    #[test]
    fn straightening_round_trip(mean in 1.5f64..4.0, ratio in -0.6f64..0.6, c in -3.0f64..3.0) {
        let set = variable(mean, ratio * mean, 0.0, 0.0, 0.0);
        let g = SpatialGrid::new(20.0, 2048).unwrap();
        let vc = straightening_map(&set, 0.0, &g).unwrap();
        prop_assert!(vc.composition_error(&set) < 1e-8);
        let u = packet(g, c, 1.5, 1.0);
        let back = pullback(&pushforward(&u, &vc).unwrap(), &vc).unwrap();
        let d = back.combine(Complex64::new(1.0, 0.0), &u, Complex64::new(-1.0, 0.0)).unwrap();
        prop_assert!(l2_norm(&d) < 1e-6 * l2_norm(&u));
    }

    #[test]
    fn absorbing_layer_cancels_any_loop_integral(mean in 1.5f64..3.0, amp in -1.0f64..1.0, a2 in -2.0f64..2.0, margin in 0.05f64..0.3) {
        let set = CoefficientSet::new(
            "layer",
            Coefficient::trig(mean, amp, 1.0, 0.0, 0.0),
            Coefficient::constant(a2),
            Coefficient::zero(),
            Coefficient::zero(),
        );
        let g = grid();
        let sigma = absorbing_profile(&set, 0.0, &g, margin);
        prop_assert!(sigma.iter().all(|s| *s >= 0.0));
        let a3 = set.a(3).sample(0.0, &g, 0);
        let loop_sigma: f64 = sigma.iter().zip(&a3).map(|(s, c)| s / c.abs()).sum::<f64>() * g.spacing();
        let remaining = torus_defect(&set, 0.0, &g) - loop_sigma;
        prop_assert!(remaining <= -ABSORPTION_SLACK + 1e-9);
    }

    #[test]
    fn gauge_solves_its_ode(delta in 0.55f64..1.5, t in 0.0f64..1.0) {
        let g = SpatialGrid::new(20.0, 2048).unwrap();
        for p in presets() {
            let set = p.build().unwrap();
            let gauge = build_gauge(&set, t, &g, delta, 1).unwrap();
            prop_assert!(gauge_ode_residual(&gauge, &set) < 1e-8, "{}", p.name);
        }
    }
}
