//! Closed-form geometry checked against hand-derived values and an ODE integrator.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsvrg::manifold::{
    distance, exp_map, karcher_mean, log_map, parallel_transport, GrassmannPoint, TangentVector,
};
use rsvrg::verify::integrate_geodesic;

fn line(x: f64, y: f64) -> GrassmannPoint {
    GrassmannPoint::orthonormalize(DMatrix::from_column_slice(2, 1, &[x, y])).unwrap()
}

#[test]
fn quarter_turn_on_gr_1_2_reaches_the_orthogonal_line() {
    let e1 = line(1.0, 0.0);
    let xi = TangentVector::new(&e1, DMatrix::from_column_slice(2, 1, &[0.0, FRAC_PI_2])).unwrap();
    let end = exp_map(&e1, &xi, 1.0).unwrap();
    assert!(end.matrix()[(0, 0)].abs() < 1e-15);
    assert!((end.matrix()[(1, 0)].abs() - 1.0).abs() < 1e-15);
}

#[test]
fn diagonal_line_is_an_eighth_turn_away() {
    assert!((distance(&line(1.0, 0.0), &line(FRAC_1_SQRT_2, FRAC_1_SQRT_2)).unwrap() - FRAC_PI_4).abs() < 1e-15);
}

#[test]
fn exp_matches_integrated_geodesic_on_gr_3_10() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10 {
        let u = GrassmannPoint::random(10, 3, &mut rng).unwrap();
        let xi = TangentVector::random(&u, &mut rng);
        let xi = xi.scaled(1.5 / xi.norm());
        let oracle = integrate_geodesic(&xi, 1.0, 500).unwrap();
        let closed = exp_map(&u, &xi, 1.0).unwrap();
        let gap = (oracle.matrix() - closed.matrix()).norm();
        assert!(gap <= 1e-6, "representative gap {gap:e}");
    }
}

#[test]
fn transported_velocity_continues_the_geodesic() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let u = GrassmannPoint::random(20, 5, &mut rng).unwrap();
        let xi = TangentVector::random(&u, &mut rng);
        let xi = xi.scaled(0.7 / xi.norm());
        let mid = exp_map(&u, &xi, 1.0).unwrap();
        let vel = parallel_transport(&xi, &u, &xi).unwrap();
        assert!(vel.base().same_representative(&mid));
        for s in [0.3, 1.0] {
            let continued = exp_map(&mid, &vel, s).unwrap();
            let direct = exp_map(&u, &xi, 1.0 + s).unwrap();
            assert!(distance(&continued, &direct).unwrap() <= 1e-8);
        }
    }
}

#[test]
fn two_point_karcher_mean_is_the_geodesic_midpoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q1 = GrassmannPoint::random(8, 2, &mut rng).unwrap();
    let dir = TangentVector::random(&q1, &mut rng);
    let q2 = exp_map(&q1, &dir.scaled(0.6 / dir.norm()), 1.0).unwrap();
    let mean = karcher_mean(&[q1.clone(), q2.clone()], 1e-10, 100).unwrap();
    assert!(mean.converged);
    let midpoint = exp_map(&q1, &log_map(&q1, &q2).unwrap().scaled(0.5), 1.0).unwrap();
    assert!(distance(&mean.point, &midpoint).unwrap() < 1e-6);
    let (a, b) = (distance(&mean.point, &q1).unwrap(), distance(&mean.point, &q2).unwrap());
    assert!((a - b).abs() < 1e-6);
}

#[test]
fn log_refuses_the_cut_locus() {
    let err = log_map(&line(1.0, 0.0), &line(0.0, 1.0)).unwrap_err();
    assert!(matches!(err, rsvrg::Error::CutLocus { .. }), "{err}");
}
