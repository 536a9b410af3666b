use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use warpmms::dsolver::{oracle_d, solve_d, GeodesicQuery, OracleKind, Resolution};
use warpmms::energy::{
    calculus_checks, gradient_field, log_eta, slopes, time_discretize, FunctionSpec, GridFunction,
};
use warpmms::product::{build_warped, Stencil};
use warpmms::profile::{WarpFn, WarpProfile};
use warpmms::space::{generate, Generator};
use warpmms::verify::{random_smooth_function, Check, Fixture};

fn small_config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

fn fixture() -> impl Strategy<Value = Fixture> {
    prop_oneof![
        Just(Fixture::Square),
        Just(Fixture::Cylinder),
        Just(Fixture::Cone),
        Just(Fixture::Suspension),
    ]
}

fn stencil() -> impl Strategy<Value = Stencil> {
    prop_oneof![Just(Stencil::Axis), Just(Stencil::Diagonal), Just(Stencil::DISTANCE)]
}

proptest! {
    #![proptest_config(small_config())]

    #[test]
    fn random_geometric_distances_form_a_metric(n in 5usize..30, seed in 0u64..1000) {
        let space = generate(&Generator::RandomGeometric { n, radius: 0.6, seed });
        prop_assume!(space.is_ok());
        let space = space.unwrap();
        prop_assert_eq!(space.distances().invariant_violations(1e-12), 0);
    }

    #[test]
    fn scaling_edges_scales_distances(n in 3usize..20, factor in 0.1f64..10.0) {
        let space = generate(&Generator::Circle { n, circumference: 1.0 }).unwrap();
        let scaled = space.scaled(factor).unwrap();
        for j in 0..n {
            let (a, b) = (space.distances().get(0, j), scaled.distances().get(0, j));
            prop_assert!((b - factor * a).abs() <= 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn product_mass_factorises(fx in fixture(), res in 4usize..20, st in stencil()) {
        let p = fx.build(res, res, st).unwrap();
        let prof = p.profile();
        let h = prof.step();
        let wm = prof.samples_wm();
        let integral: f64 = (0..wm.len() - 1).map(|i| 0.5 * h * (wm[i] + wm[i + 1])).sum();
        let want = integral * p.base().total_measure();
        prop_assert!((p.total_measure() - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn graph_distance_dominates_time_gap(fx in fixture(), res in 4usize..16, st in stencil(), src in 0usize..1000) {
        let p = fx.build(res, res, st).unwrap();
        let s = src % p.node_count();
        let d = p.graph().single_source(s);
        for v in 0..p.node_count() {
            prop_assert!(d[v] >= (p.node_t(v) - p.node_t(s)).abs() - 1e-12);
        }
    }

    #[test]
    fn time_coordinate_has_unit_slope(fx in fixture(), res in 4usize..20, st in stencil()) {
        let p = fx.build(res, res, st).unwrap();
        let f = GridFunction::from_spec(&p, &FunctionSpec::T).unwrap();
        for s in slopes(&f) {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn combined_gradient_identity_and_calculus_rules(
        fx in fixture(), res in 4usize..14, seed in 0u64..1000,
        alpha in -4.0f64..4.0, beta in -4.0f64..4.0, scale in 0.25f64..4.0,
    ) {
        let p = fx.build(res, res, Stencil::Diagonal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_smooth_function(&p, &mut rng, None).unwrap();
        let g = random_smooth_function(&p, &mut rng, None).unwrap();
        prop_assert!(gradient_field(&f).identity_violations().is_empty());
        let report = calculus_checks(&f, &g, alpha, beta, scale, None).unwrap();
        prop_assert_eq!(report.violation_count(), 0);
    }

    #[test]
    fn time_discretization_is_linear_and_keeps_constants(
        fx in fixture(), n in 1usize..6, seed in 0u64..1000, c in -5.0f64..5.0, k in -3.0f64..3.0,
    ) {
        let p = fx.build(9, 4 * n + 1, Stencil::Diagonal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_smooth_function(&p, &mut rng, None).unwrap();
        let g = random_smooth_function(&p, &mut rng, None).unwrap();
        let lhs = time_discretize(&f.zip_with(&g, |x, y| x + k * y), n).unwrap();
        let (tf, tg) = (time_discretize(&f, n).unwrap(), time_discretize(&g, n).unwrap());
        for v in 0..p.node_count() {
            let want = tf.value(v) + k * tg.value(v);
            prop_assert!((lhs.value(v) - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
        let constant = GridFunction::from_spec(&p, &FunctionSpec::Constant { value: c }).unwrap();
        let tc = time_discretize(&constant, n).unwrap();
        for v in 0..p.node_count() {
            prop_assert!((tc.value(v) - c).abs() <= 1e-14 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn time_discretization_contracts_compactly_supported_functions(n in prop::sample::select(vec![2usize, 4, 8]), seed in 0u64..1000) {
        let p = Fixture::Square.build(9, 8 * 8 + 1, Stencil::Diagonal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_smooth_function(&p, &mut rng, Some(1.0 - 1.0 / n as f64)).unwrap();
        let g = time_discretize(&f, n).unwrap();
        prop_assert!(g.l2_norm_sq() <= f.l2_norm_sq() * (1.0 + 1e-12));
        let (ef, eg) = (gradient_field(&f), gradient_field(&g));
        prop_assert!(eg.e_partial_x <= ef.e_partial_x + 1e-9);
    }

    #[test]
    fn log_eta_is_a_monotone_cutoff(d0 in 1e-6f64..2.0, d1 in 1e-6f64..2.0, n in 2.0f64..1e5) {
        let (lo, hi) = if d0 <= d1 { (d0, d1) } else { (d1, d0) };
        let (a, b) = (log_eta(lo, n), log_eta(hi, n));
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(a <= b);
        prop_assert_eq!(log_eta(0.0, n), 0.0);
    }

    #[test]
    fn flat_solver_is_euclidean(t0 in 0.0f64..1.0, t1 in 0.0f64..1.0, ell in 0.0f64..2.0) {
        let prof = WarpProfile::flat((0.0, 1.0), 33).unwrap();
        let q = GeodesicQuery::new(t0, t1, ell).with_resolution(Resolution::square(32));
        let got = solve_d(&prof, &q).unwrap().value;
        let want = oracle_d(OracleKind::Flat, t0, t1, ell);
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want));
    }

    #[test]
    fn solver_is_symmetric_and_bounded(t0 in 0.0f64..1.0, t1 in 0.0f64..1.0, ell in 0.0f64..3.0) {
        let prof = WarpProfile::cone(65).unwrap();
        let res = Resolution::square(48);
        let d01 = solve_d(&prof, &GeodesicQuery::new(t0, t1, ell).with_resolution(res)).unwrap().value;
        let d10 = solve_d(&prof, &GeodesicQuery::new(t1, t0, ell).with_resolution(res)).unwrap().value;
        prop_assert!((d01 - d10).abs() <= 1e-9 * (1.0 + d01));
        prop_assert!(d01 >= (t1 - t0).abs() - 1e-12);
        // through the apex
        prop_assert!(d01 <= t0 + t1 + 1e-12);
    }

    #[test]
    fn checks_evaluate_their_relation(observed in -10.0f64..10.0, limit in -10.0f64..10.0) {
        prop_assert_eq!(Check::at_most("x", observed, limit).passed, observed <= limit);
        prop_assert_eq!(Check::at_least("x", observed, limit).passed, observed >= limit);
    }
}

#[test]
fn tabulated_profile_matches_analytic_product() {
    let base = generate(&Generator::Circle { n: 8, circumference: 1.0 }).unwrap();
    let levels: Vec<f64> = (0..17).map(|i| i as f64 / 16.0).collect();
    let table = WarpProfile::new((0.0, 1.0), 17, WarpFn::Table(levels.clone()), WarpFn::Table(levels)).unwrap();
    let analytic = WarpProfile::new((0.0, 1.0), 17, WarpFn::identity(), WarpFn::identity()).unwrap();
    let (a, b) = (
        build_warped(&base, &table, Stencil::Diagonal).unwrap(),
        build_warped(&base, &analytic, Stencil::Diagonal).unwrap(),
    );
    assert_eq!(a.node_count(), b.node_count());
    assert!((a.total_measure() - b.total_measure()).abs() < 1e-14);
}
