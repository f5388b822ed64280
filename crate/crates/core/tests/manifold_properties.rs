use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsvrg::manifold::{
    distance, exp_map, karcher_mean, log_map, parallel_transport, project_tangent, GrassmannPoint, TangentVector,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn point(d: usize, r: usize, seed: u64) -> GrassmannPoint {
    GrassmannPoint::random(d, r, &mut rng(seed)).unwrap()
}

fn direction(u: &GrassmannPoint, len: f64, seed: u64) -> TangentVector {
    let xi = TangentVector::random(u, &mut rng(seed));
    xi.scaled(len / xi.norm())
}

fn orthonormality(u: &GrassmannPoint) -> f64 {
    let m = u.matrix();
    (m.tr_mul(m) - DMatrix::identity(u.rank(), u.rank())).norm()
}

fn horizontality(xi: &TangentVector) -> f64 {
    xi.base().matrix().tr_mul(xi.matrix()).norm()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exp_outputs_are_orthonormal(seed in any::<u64>(), len in 0.0f64..6.0, t in -3.0f64..3.0) {
        let u = point(12, 3, seed);
        let xi = direction(&u, len.max(1e-300), seed ^ 1);
        let end = exp_map(&u, &xi, t).unwrap();
        prop_assert!(orthonormality(&end) <= 1e-10);
    }

    #[test]
    fn produced_tangents_are_horizontal(seed in any::<u64>(), len in 0.01f64..1.5) {
        let u = point(10, 3, seed);
        let g = project_tangent(&u, DMatrix::from_fn(10, 3, |i, j| ((i * 7 + j * 3) as f64).sin())).unwrap();
        prop_assert!(horizontality(&g) <= 1e-10);
        let xi = direction(&u, len, seed ^ 2);
        let moved = parallel_transport(&g, &u, &xi).unwrap();
        prop_assert!(horizontality(&moved) <= 1e-10);
        let z = exp_map(&u, &xi, 1.0).unwrap();
        prop_assert!(horizontality(&log_map(&u, &z).unwrap()) <= 1e-10);
    }

    #[test]
    fn exp_and_log_are_inverse_inside_pi_over_4(seed in any::<u64>(), frac in 0.0f64..0.99) {
        let u = point(20, 5, seed);
        let xi = direction(&u, frac * std::f64::consts::FRAC_PI_4, seed ^ 3);
        let z = exp_map(&u, &xi, 1.0).unwrap();
        let back = exp_map(&u, &log_map(&u, &z).unwrap(), 1.0).unwrap();
        prop_assert!(distance(&back, &z).unwrap() <= 1e-8);
        prop_assert!((log_map(&u, &z).unwrap().norm() - distance(&u, &z).unwrap()).abs() <= 1e-10);
    }

    #[test]
    fn exp_and_log_survive_rank_deficient_directions(seed in any::<u64>(), d in 3usize..24, gap in 1usize..3, frac in 0.05f64..0.99) {
        // with r > d − r the normal part of the target has rank below r
        let r = d.saturating_sub(gap).max(1);
        let u = point(d, r, seed);
        let xi = direction(&u, frac * std::f64::consts::FRAC_PI_4, seed ^ 12);
        let z = exp_map(&u, &xi, 1.0).unwrap();
        let log = log_map(&u, &z).unwrap();
        prop_assert!(horizontality(&log) <= 1e-10);
        prop_assert!(distance(&exp_map(&u, &log, 1.0).unwrap(), &z).unwrap() <= 1e-8);
        prop_assert!((log.norm() - xi.norm()).abs() <= 1e-10);
    }

    #[test]
    fn transport_preserves_inner_products(seed in any::<u64>(), len in 0.0f64..2.0) {
        let u = point(20, 5, seed);
        let xi = direction(&u, len.max(1e-300), seed ^ 4);
        let a = TangentVector::random(&u, &mut rng(seed ^ 5));
        let b = TangentVector::random(&u, &mut rng(seed ^ 6));
        let pa = parallel_transport(&a, &u, &xi).unwrap();
        let pb = parallel_transport(&b, &u, &xi).unwrap();
        prop_assert!((pa.inner(&pb).unwrap() - a.inner(&b).unwrap()).abs() <= 1e-10 * a.norm() * b.norm());
        prop_assert!((pa.norm() - a.norm()).abs() <= 1e-10 * a.norm());
    }

    #[test]
    fn distance_is_symmetric_and_subadditive(seed in any::<u64>()) {
        let (a, b, c) = (point(9, 3, seed), point(9, 3, seed ^ 7), point(9, 3, seed ^ 8));
        let ab = distance(&a, &b).unwrap();
        prop_assert!((ab - distance(&b, &a).unwrap()).abs() <= 1e-10);
        prop_assert!(ab <= distance(&a, &c).unwrap() + distance(&c, &b).unwrap() + 1e-12);
    }

    #[test]
    fn distance_ignores_the_representative(seed in any::<u64>()) {
        let u = point(8, 3, seed);
        let mut r = rng(seed ^ 9);
        let o = DMatrix::from_fn(3, 3, |_, _| rand::RngExt::random_range(&mut r, -1.0..1.0)).qr().q();
        let rotated = u.rotated(&o).unwrap();
        prop_assert!(distance(&u, &rotated).unwrap() <= 1e-10);
    }

    #[test]
    fn karcher_mean_distance_inequality(seed in any::<u64>(), m in 2usize..8, spread in 0.05f64..0.5) {
        let center = point(10, 2, seed);
        let ws: Vec<GrassmannPoint> = (0..m)
            .map(|i| exp_map(&center, &direction(&center, spread, seed ^ (100 + i as u64)), 1.0).unwrap())
            .collect();
        let w = karcher_mean(&ws, 1e-10, 100).unwrap().point;
        let p = point(10, 2, seed ^ 11);
        let lhs = distance(&p, &w).unwrap().powi(2);
        let rhs = 4.0 / m as f64 * ws.iter().map(|wi| distance(&p, wi).unwrap().powi(2)).sum::<f64>();
        prop_assert!(lhs <= rhs, "{lhs} > {rhs}");
    }
}
