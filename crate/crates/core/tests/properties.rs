use std::sync::Arc;

use nehari::domain::{count_nodal_domains, default_zero_tol};
use nehari::eigen::{default_init, minimize_rayleigh, rayleigh};
use nehari::functional::{energy, norm_equivalence_constants, norm_lambda, norm_wa};
use nehari::nehari::{fiber_phi, membership, project, project_nodal};
use nehari::optimize::{solve_constant_sign, SolverConfig};
use nehari::sampling::{random_smooth_field, Sign};
use nehari::{Domain, Field, Geometry, PowerLaw, ProblemSpec, Profile, WeightField, WeightRole};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn radial() -> Domain<f64> {
    Domain::new(Geometry::radial(3, 5.0, 80)).unwrap()
}

fn cartesian() -> Domain<f64> {
    Domain::new(Geometry::cartesian(3.0, 17, 17)).unwrap()
}

fn spec(d: &Domain<f64>, p: f64, q: f64, lambda: f64) -> ProblemSpec<f64> {
    let a = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.5 }, WeightRole::Linear, d).unwrap();
    let b = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, WeightRole::Nonlinear, d).unwrap();
    ProblemSpec::relaxed(p, lambda, a, Arc::new(PowerLaw::new(q, b).unwrap()), d).unwrap()
}

fn field(d: &Domain<f64>, seed: u64, sign: Option<Sign>) -> Field<f64> {
    random_smooth_field(d, &mut ChaCha8Rng::seed_from_u64(seed), sign)
}

fn domain(cart: bool) -> Domain<f64> {
    if cart {
        cartesian()
    } else {
        radial()
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn signed_parts_recombine(seed in any::<u64>(), cart in any::<bool>()) {
        let d = domain(cart);
        let u = field(&d, seed, None);
        let (plus, minus) = (u.positive_part(), u.negative_part());
        prop_assert!(plus.values().iter().all(|&v| v >= 0.0));
        prop_assert!(minus.values().iter().all(|&v| v <= 0.0));
        prop_assert_eq!(plus.add_scaled(&minus, 1.0), u);
    }

    #[test]
    fn projection_idempotent_and_scale_invariant(
        seed in any::<u64>(),
        cart in any::<bool>(),
        p in 1.5f64..2.5,
        gap in 0.5f64..2.0,
        c in 0.01f64..100.0,
    ) {
        let d = domain(cart);
        let s = spec(&d, p, p + gap, -0.5);
        let u = field(&d, seed, None);
        let once = project(&s, &d, &u, 1e-12).unwrap();
        let twice = project(&s, &d, &once.field, 1e-12).unwrap();
        prop_assert!(close(twice.scale, 1.0, 1e-9), "second scale {}", twice.scale);
        let scaled = project(&s, &d, &u.scaled(c), 1e-12).unwrap();
        prop_assert!(close(scaled.scale * c, once.scale, 1e-9));
        let diff = scaled.field.add_scaled(&once.field, -1.0).max_abs();
        prop_assert!(diff <= 1e-9 * once.field.max_abs());
    }

    #[test]
    fn fiber_phi_strictly_decreasing(
        seed in any::<u64>(),
        p in 1.5f64..2.5,
        gap in 0.5f64..2.0,
        t0 in 0.01f64..10.0,
        ratio in 1.01f64..5.0,
    ) {
        let d = radial();
        let s = spec(&d, p, p + gap, 0.0);
        let u = field(&d, seed, None);
        let a = fiber_phi(&s, &d, &u, t0).unwrap();
        let b = fiber_phi(&s, &d, &u, t0 * ratio).unwrap();
        prop_assert!(b < a, "φ({t0}) = {a}, φ({}) = {b}", t0 * ratio);
    }

    #[test]
    fn rayleigh_homogeneous(seed in any::<u64>(), cart in any::<bool>(), p in 1.5f64..2.5, c in 0.01f64..100.0) {
        let d = domain(cart);
        let s = spec(&d, p, p + 1.0, 0.0);
        let u = field(&d, seed, None);
        let r = rayleigh(&s, &d, &u).unwrap();
        prop_assert!(r > 0.0);
        prop_assert!(close(rayleigh(&s, &d, &u.scaled(c)).unwrap(), r, 1e-11));
        prop_assert!(close(rayleigh(&s, &d, &u.scaled(-1.0)).unwrap(), r, 1e-14));
    }

    #[test]
    fn action_equals_integral_of_h_on_nehari_set(seed in any::<u64>(), p in 1.5f64..2.5, gap in 0.5f64..2.0) {
        let d = radial();
        let s = spec(&d, p, p + gap, -1.0);
        let w = project(&s, &d, &field(&d, seed, None), 1e-12).unwrap().field;
        let e = energy(&s, &d, &w).unwrap();
        let h_integral = e.nonlinear_work / p - e.potential;
        prop_assert!(close(e.action, h_integral, 1e-10), "S = {}, ∫h = {h_integral}", e.action);
        prop_assert!(e.action > 0.0);
        prop_assert!(membership(&s, &d, &w, 1e-8).unwrap().in_nehari);
    }

    #[test]
    fn norm_sandwich(seed in any::<u64>(), cart in any::<bool>(), lambda in -5.0f64..0.3) {
        let d = domain(cart);
        let base = spec(&d, 2.0, 4.0, 0.0);
        let est = minimize_rayleigh(&base, &d, &default_init(&base, &d), 1e-10, 10_000).unwrap().lambda_a;
        prop_assume!(lambda < 0.99 * est);
        let s = base.with_lambda(lambda);
        let c = norm_equivalence_constants(&s, 0.99 * est).unwrap();
        let u = field(&d, seed, None);
        let (nl, nw) = (norm_lambda(&s, &d, &u).unwrap(), norm_wa(&s, &d, &u).unwrap());
        prop_assert_eq!(c.c2, 1f64.max(lambda.abs()).powf(0.5));
        prop_assert!(nl <= c.c2 * nw * (1.0 + 1e-12));
        prop_assert!(c.c1 * nw <= nl * (1.0 + 1e-12));
    }

    #[test]
    fn nodal_count_invariant_under_negation(seed in any::<u64>(), cart in any::<bool>()) {
        let d = domain(cart);
        let u = field(&d, seed, None);
        let tol = default_zero_tol(&u);
        let n = count_nodal_domains(&d, &u, tol).unwrap();
        prop_assert_eq!(count_nodal_domains(&d, &u.scaled(-1.0), tol).unwrap(), n);
    }

    #[test]
    fn nodal_projection_puts_both_parts_on_nehari(seed in any::<u64>(), p in 1.5f64..2.5) {
        let d = radial();
        let s = spec(&d, p, p + 1.5, 0.0);
        let u = field(&d, seed, None);
        prop_assume!(!u.positive_part().is_zero() && !u.negative_part().is_zero());
        let pr = project_nodal(&s, &d, &u, 1e-12).unwrap();
        prop_assert!(pr.scale_plus > 0.0 && pr.scale_minus > 0.0);
        let scale = norm_lambda(&s, &d, &pr.field).unwrap().powf(p);
        prop_assert!(pr.residual <= 1e-9 * scale, "residual {} vs ‖w‖^p {scale}", pr.residual);
    }

    #[test]
    fn sampling_reproducible(seed in any::<u64>(), cart in any::<bool>()) {
        let d = domain(cart);
        prop_assert_eq!(field(&d, seed, None), field(&d, seed, None));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn solver_reproducible(seed in any::<u64>()) {
        let d = Domain::new(Geometry::radial(3, 6.0, 60)).unwrap();
        let s = spec(&d, 2.0, 4.0, 0.0);
        let cfg = SolverConfig { seed, ..SolverConfig::default() };
        let a = solve_constant_sign(&s, &d, &cfg, Sign::Positive).unwrap();
        let b = solve_constant_sign(&s, &d, &cfg, Sign::Positive).unwrap();
        prop_assert_eq!(a.field, b.field);
        prop_assert_eq!(a.energy.action.to_bits(), b.energy.action.to_bits());
        prop_assert_eq!(a.history, b.history);
    }
}
