mod common;

use bstable::analytic::{c_alpha_const, in_region_c_alpha, legendre_kappa_star, wright_phi, Region};
use bstable::hull::{convex_hull, hull_contains};
use bstable::measure::{c_lambda, first_atom_rate, lp_condition_integral, normalize_lambda};
use bstable::sim::{simulate_generation, simulate_population};
use bstable::stats::{ks_two_sample, summarize};
use bstable::{Alpha, Caps, LambdaSpec, ShapePoint, Window};
use proptest::prelude::*;

fn spec_strategy() -> impl Strategy<Value = LambdaSpec> {
    prop::collection::vec(
        (0.1f64..5.0, prop::collection::vec(0.05f64..4.0, 1..4)),
        1..4,
    )
    .prop_map(|pairs| LambdaSpec::from_pairs(pairs).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn c_lambda_dilation_covariance(spec in spec_strategy(), alpha in 0.2f64..3.0, c in 0.1f64..10.0) {
        let a = Alpha::new(alpha).unwrap();
        let lhs = c_lambda(&spec.dilate(c), a);
        let rhs = c.powf(-alpha) * c_lambda(&spec, a);
        prop_assert!(rel(lhs, rhs) < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn normalization_is_idempotent(spec in spec_strategy(), alpha in 0.2f64..3.0) {
        let a = Alpha::new(alpha).unwrap();
        let once = normalize_lambda(&spec, a);
        let c = c_lambda(&once.spec, a) * statrs::function::gamma::gamma(alpha);
        prop_assert!((c - 1.0).abs() < 1e-12, "c Γ = {c}");
        let twice = normalize_lambda(&once.spec, a);
        prop_assert!((twice.dilation_applied - 1.0).abs() < 1e-12);
    }

    #[test]
    fn first_atom_rate_is_at_most_c_lambda(spec in spec_strategy(), alpha in 0.2f64..3.0) {
        let a = Alpha::new(alpha).unwrap();
        prop_assert!(first_atom_rate(&spec, a) <= c_lambda(&spec, a) * (1.0 + 1e-15));
    }

    #[test]
    fn lp_integral_scales_under_dilation(spec in spec_strategy(), alpha in 0.3f64..2.5, p in 1.05f64..2.0, c in 0.3f64..3.0) {
        let a = Alpha::new(alpha).unwrap();
        let base = lp_condition_integral(&spec, a, p).unwrap();
        let dil = lp_condition_integral(&spec.dilate(c), a, p).unwrap();
        let want = c.powf(-alpha) * base.value;
        prop_assert!(rel(dil.value, want) < 1e-6, "{} vs {want}", dil.value);
    }

    #[test]
    fn lp_integral_grows_with_weights(spec in spec_strategy(), alpha in 0.3f64..2.5, p in 1.05f64..2.0, extra in 0.1f64..3.0) {
        let a = Alpha::new(alpha).unwrap();
        let mut pairs: Vec<(f64, Vec<f64>)> = spec
            .entries()
            .iter()
            .map(|e| (e.weight, e.offsets.offsets().to_vec()))
            .collect();
        let base = lp_condition_integral(&spec, a, p).unwrap().value;
        pairs[0].0 += extra;
        let more = lp_condition_integral(&LambdaSpec::from_pairs(pairs).unwrap(), a, p).unwrap().value;
        prop_assert!(more > base);
    }

    #[test]
    fn kappa_star_matches_numeric_infimum(alpha in 0.2f64..3.0, p in 0.05f64..5.0, q in 0.05f64..5.0) {
        let exact = legendre_kappa_star(Alpha::new(alpha).unwrap(), p, q);
        let num = common::kappa_star_numeric(alpha, p, q);
        prop_assert!((exact - num).abs() < 1e-8, "{exact} vs {num}");
    }

    #[test]
    fn region_agrees_with_kappa_star_sign(alpha in 0.2f64..3.0, p in 0.05f64..5.0, q in 0.05f64..5.0) {
        let a = Alpha::new(alpha).unwrap();
        let k = legendre_kappa_star(a, p, q);
        prop_assume!(k.abs() > 1e-9);
        let r = in_region_c_alpha(a, ShapePoint { p, q });
        prop_assert_eq!(r == Region::Outside, k < 0.0);
    }

    #[test]
    fn c_alpha_lies_on_the_boundary(alpha in 0.2f64..3.0) {
        let a = Alpha::new(alpha).unwrap();
        prop_assert!(legendre_kappa_star(a, 1.0, c_alpha_const(a)).abs() < 1e-12);
    }

    #[test]
    fn wright_is_increasing_in_z(alpha in 0.2f64..3.0, z in 0.0f64..50.0, dz in 0.01f64..5.0) {
        let lo = wright_phi(alpha, 1.0, z).unwrap().value;
        let hi = wright_phi(alpha, 1.0, z + dz).unwrap().value;
        prop_assert!(hi > lo);
    }

    #[test]
    fn hull_contains_its_points(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40)) {
        let hull = convex_hull(&pts);
        for &p in &pts {
            prop_assert!(hull_contains(&hull, p), "{p:?} not in {hull:?}");
        }
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        if pts.len() >= 3 && hull.len() >= 3 {
            prop_assert!(hull_contains(&hull, (cx, cy)));
        }
        let far = pts.iter().map(|p| p.0).fold(f64::MIN, f64::max) + 1.0;
        prop_assert!(!hull_contains(&hull, (far, cy)));
    }

    #[test]
    fn estimate_is_shift_equivariant(xs in prop::collection::vec(-100.0f64..100.0, 2..50), shift in -50.0f64..50.0) {
        let a = summarize(&xs, 0).unwrap();
        let shifted: Vec<f64> = xs.iter().map(|x| x + shift).collect();
        let b = summarize(&shifted, 0).unwrap();
        prop_assert!((b.mean - a.mean - shift).abs() < 1e-9);
        prop_assert!((b.std_error - a.std_error).abs() < 1e-9);
    }

    #[test]
    fn ks_two_sample_of_identical_samples(xs in prop::collection::vec(-100.0f64..100.0, 10..60)) {
        let r = ks_two_sample(&xs, &xs).unwrap();
        prop_assert_eq!(r.statistic, 0.0);
        prop_assert!((r.p_value - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn populations_are_well_formed(spec in spec_strategy(), alpha in 0.3f64..2.5, seed in any::<u64>(), t in 0.2f64..2.0, x in 0.2f64..1.5) {
        let model = normalize_lambda(&spec, Alpha::new(alpha).unwrap());
        let window = Window::new(t, x).unwrap();
        let caps = Caps::default().with_max_atoms(200_000);
        let pop = simulate_population(&model, window, seed, caps);
        prop_assume!(!pop.truncated);
        prop_assert_eq!(pop.validate(), Ok(()));
        prop_assert_eq!(pop.atoms.iter().filter(|a| a.position == 0.0).count(), 1);
        let again = simulate_population(&model, window, seed, caps);
        prop_assert_eq!(&pop.atoms, &again.atoms);
    }

    #[test]
    fn generation_sampler_agrees_with_population(alpha in 0.3f64..2.5, seed in any::<u64>(), n in 1u32..5) {
        let model = normalize_lambda(&LambdaSpec::single(vec![1.0, 2.0]).unwrap(), Alpha::new(alpha).unwrap());
        let window = Window::new(1.5, 1.5).unwrap();
        let pop = simulate_population(&model, window, seed, Caps::default().with_max_generation(n));
        let mut want: Vec<(f64, f64)> = pop
            .atoms
            .iter()
            .filter(|a| a.generation == n)
            .map(|a| (a.birth_time, a.position))
            .collect();
        let mut got = simulate_generation(&model, window, seed, n, 0.0, Caps::default()).unwrap().points;
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(got, want);
    }
}
