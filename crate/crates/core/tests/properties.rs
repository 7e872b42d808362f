use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riebo::manifold::*;
use riebo::random::{random_spd, random_symmetric};
use riebo::solvers::project_simplex;
use riebo::spd::frechet_log;

fn spd(d: usize, rng: &mut ChaCha8Rng) -> Point {
    Point::spd(random_spd(d, 10.0, rng)).unwrap()
}

fn bounded_tangent(p: &Point, rng: &mut ChaCha8Rng) -> Tangent {
    let v = random_tangent(p, rng);
    let n = norm(&v).unwrap();
    v.scale(rng.random_range(0.0..1.5) / n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn log_inverts_exp(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = spd(d, &mut rng);
        let v = bounded_tangent(&p, &mut rng);
        let back = log_map(&p, &exp_map(&p, &v).unwrap()).unwrap();
        prop_assert!(norm(&back.sub(&v).unwrap()).unwrap() <= 1e-9 * (1.0 + norm(&v).unwrap()));
    }

    #[test]
    fn geodesics_have_unit_speed(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = spd(d, &mut rng);
        let v = bounded_tangent(&p, &mut rng);
        let q = exp_map(&p, &v).unwrap();
        prop_assert!((distance(&p, &q).unwrap() - norm(&v).unwrap()).abs() <= 1e-9 * (1.0 + norm(&v).unwrap()));
    }

    #[test]
    fn transport_preserves_inner_products(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q) = (spd(d, &mut rng), spd(d, &mut rng));
        let (a, b) = (bounded_tangent(&p, &mut rng), bounded_tangent(&p, &mut rng));
        let moved = inner(&q, &parallel_transport(&p, &q, &a).unwrap(), &parallel_transport(&p, &q, &b).unwrap()).unwrap();
        prop_assert!((moved - inner(&p, &a, &b).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn distance_satisfies_triangle_inequality(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q, r) = (spd(d, &mut rng), spd(d, &mut rng), spd(d, &mut rng));
        let direct = distance(&p, &r).unwrap();
        let around = distance(&p, &q).unwrap() + distance(&q, &r).unwrap();
        prop_assert!(direct <= around + 1e-9 * (1.0 + around));
    }

    #[test]
    fn distance_is_congruence_invariant(seed in any::<u64>(), d in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q) = (spd(d, &mut rng), spd(d, &mut rng));
        let g = random_spd(d, 5.0, &mut rng) + random_symmetric(d, &mut rng) * 0.1;
        let act = |s: &Point| {
            let m = &g * s.as_matrix().unwrap() * g.transpose();
            Point::spd((&m + m.transpose()) * 0.5).unwrap()
        };
        let before = distance(&p, &q).unwrap();
        prop_assert!((distance(&act(&p), &act(&q)).unwrap() - before).abs() <= 1e-9 * (1.0 + before));
    }

    #[test]
    fn log_derivative_is_linear(seed in any::<u64>(), d in 1usize..6, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = random_spd(d, 10.0, &mut rng);
        let (e, f) = (random_symmetric(d, &mut rng), random_symmetric(d, &mut rng));
        let combined = frechet_log(&y, &(&e * a + &f * b)).unwrap();
        let separate = frechet_log(&y, &e).unwrap() * a + frechet_log(&y, &f).unwrap() * b;
        prop_assert!((&combined - &separate).norm() <= 1e-10 * (1.0 + separate.norm()));
    }

    #[test]
    fn simplex_projection_is_feasible_and_idempotent(v in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        let v = DVector::from_vec(v);
        let p = project_simplex(&v).unwrap();
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        prop_assert!((project_simplex(&p).unwrap() - &p).amax() <= 1e-12);
    }
}
