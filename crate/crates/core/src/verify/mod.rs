//! Independent numerical checks: finite-difference gradients, a geodesic
//! ODE integrator, empirical Lipschitz constants, exact moments of the
//! variance-reduced direction, and log-linear rate fits.

mod geodesic;
mod variance;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{distance, exp_map, Geodesic, GrassmannPoint, TangentVector};
use crate::problems::Problem;

pub use geodesic::integrate_geodesic;
pub use variance::{
    check_variance_bound, direction_moments, CheckpointRecorder, DirectionMoments, VarianceCheckpoint,
    VarianceReport, VarianceRow, BETA_SAFETY,
};

/// `(f(Exp_U(hξ)) − f(Exp_U(−hξ))) / 2h`
pub fn fd_directional_derivative(problem: &dyn Problem, u: &GrassmannPoint, xi: &TangentVector, h: f64) -> Result<f64> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let plus = problem.cost(&exp_map(u, xi, h)?)?;
    let minus = problem.cost(&exp_map(u, xi, -h)?)?;
    Ok((plus - minus) / (2.0 * h))
}

/// Outcome of [`check_gradient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientCheck {
    pub analytic: f64,
    pub finite_difference: f64,
    /// `|analytic − fd| / max(|analytic|, |fd|)`, or 0 when both vanish.
    pub rel_error: f64,
}

/// Compares `⟨grad f(U), ξ⟩` with the central difference along the geodesic.
pub fn check_gradient(problem: &dyn Problem, u: &GrassmannPoint, xi: &TangentVector, h: f64) -> Result<GradientCheck> {
    let analytic = problem.full_grad(u)?.inner(xi)?;
    let finite_difference = fd_directional_derivative(problem, u, xi, h)?;
    let scale = analytic.abs().max(finite_difference.abs());
    let rel_error = if scale == 0.0 {
        0.0
    } else {
        (analytic - finite_difference).abs() / scale
    };
    Ok(GradientCheck {
        analytic,
        finite_difference,
        rel_error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzEstimate {
    /// Largest observed `‖P·grad fₙ(z) − grad fₙ(w)‖ / dist(z, w)`.
    pub beta_hat: f64,
    pub n_pairs: usize,
    pub max_pair_distance: f64,
}

/// Samples `n_pairs` pairs `(w, z)` in the geodesic ball of `radius` around
/// `center`, each with a uniformly drawn sample index `n`, and returns the
/// largest gradient-difference ratio. `P` translates `grad fₙ(z)` back to `w`
/// along the minimizing geodesic.
pub fn estimate_beta(
    problem: &dyn Problem,
    center: &GrassmannPoint,
    radius: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<LipschitzEstimate> {
    if n_pairs == 0 {
        return Err(Error::Config("need at least one pair to estimate a Lipschitz constant".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut beta_hat: f64 = 0.0;
    let mut max_pair_distance: f64 = 0.0;
    for _ in 0..n_pairs {
        let w = random_in_ball(center, radius, &mut rng)?;
        let z = random_in_ball(center, radius, &mut rng)?;
        let n = rng.random_range(0..problem.n_samples());
        let dist = distance(&w, &z)?;
        if dist == 0.0 {
            continue;
        }
        let grad_w = problem.stoch_grad(&w, &[n])?;
        let grad_z = problem.stoch_grad(&z, &[n])?;
        let back = Geodesic::between(&z, &w)?.transport(&grad_z, 1.0)?.lift_to(&w);
        beta_hat = beta_hat.max(back.sub(&grad_w)?.norm() / dist);
        max_pair_distance = max_pair_distance.max(dist);
    }
    Ok(LipschitzEstimate {
        beta_hat,
        n_pairs,
        max_pair_distance,
    })
}

fn random_in_ball<R: Rng + ?Sized>(center: &GrassmannPoint, radius: f64, rng: &mut R) -> Result<GrassmannPoint> {
    let xi = TangentVector::random(center, rng);
    let len = radius * rng.random::<f64>();
    exp_map(center, &xi.scaled(len / xi.norm()), 1.0)
}

/// Least-squares fit of `ln vₛ = a + b·s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    /// `exp(slope)`: the per-step factor.
    pub contraction: f64,
    /// Coefficient of determination; 1 for an exact fit (including constants).
    pub r_squared: f64,
}

/// Fits a geometric rate to a positive sequence, e.g. `dist(Ũˢ, U*)²`.
pub fn fit_linear_rate(values: &[f64]) -> Result<RateFit> {
    if values.len() < 2 {
        return Err(Error::Config("a rate fit needs at least two values".into()));
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Config(format!("rate fit needs positive finite values, found {bad}")));
    }
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    if ys.iter().all(|y| *y == ys[0]) {
        return Ok(RateFit {
            slope: 0.0,
            contraction: 1.0,
            r_squared: 1.0,
        });
    }
    let n = ys.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - x_mean;
        let dy = y - y_mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let residual: f64 = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (y - y_mean - slope * (i as f64 - x_mean)).powi(2))
        .sum();
    let r_squared = 1.0 - residual / syy;
    Ok(RateFit {
        slope,
        contraction: slope.exp(),
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_karcher, gen_pca, ProblemKind, SyntheticSpec};
    use crate::manifold::{karcher_mean, project_tangent};
    use nalgebra::DMatrix;

    struct Constant;

    impl Problem for Constant {
        fn n_samples(&self) -> usize {
            1
        }
        fn dims(&self) -> (usize, usize) {
            (5, 2)
        }
        fn batch_cost(&self, _u: &GrassmannPoint, _batch: &[usize]) -> Result<f64> {
            Ok(4.5)
        }
        fn stoch_grad(&self, u: &GrassmannPoint, _batch: &[usize]) -> Result<TangentVector> {
            Ok(TangentVector::zero(u))
        }
    }

    /// PCA with a deliberately wrong gradient (scaled by 1.01).
    struct SkewedPca(crate::problems::PcaProblem);

    impl Problem for SkewedPca {
        fn n_samples(&self) -> usize {
            self.0.n_samples()
        }
        fn dims(&self) -> (usize, usize) {
            self.0.dims()
        }
        fn batch_cost(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<f64> {
            self.0.batch_cost(u, batch)
        }
        fn stoch_grad(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<TangentVector> {
            Ok(self.0.stoch_grad(u, batch)?.scaled(1.01))
        }
        fn cost(&self, u: &GrassmannPoint) -> Result<f64> {
            self.0.cost(u)
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn constant_cost_has_zero_derivative() {
        let u = GrassmannPoint::random(5, 2, &mut rng(1)).unwrap();
        let xi = TangentVector::random(&u, &mut rng(2));
        assert_eq!(fd_directional_derivative(&Constant, &u, &xi, 1e-5).unwrap(), 0.0);
        assert_eq!(check_gradient(&Constant, &u, &xi, 1e-5).unwrap().rel_error, 0.0);
        assert!(fd_directional_derivative(&Constant, &u, &xi, 0.0).is_err());
    }

    #[test]
    fn pca_gradient_matches_and_skew_is_caught() {
        let p = gen_pca(&SyntheticSpec::new(ProblemKind::Pca, 200, 10, 3, 3)).unwrap();
        let u = GrassmannPoint::random(10, 3, &mut rng(4)).unwrap();
        let xi = TangentVector::random(&u, &mut rng(5));
        let xi = xi.scaled(1.0 / xi.norm());
        assert!(check_gradient(&p, &u, &xi, 1e-5).unwrap().rel_error < 1e-6);
        let skewed = SkewedPca(p);
        assert!(check_gradient(&skewed, &u, &xi, 1e-5).unwrap().rel_error > 5e-3);
    }

    #[test]
    fn central_differences_converge_quadratically() {
        let p = gen_pca(&SyntheticSpec::new(ProblemKind::Pca, 100, 8, 2, 6)).unwrap();
        let u = GrassmannPoint::random(8, 2, &mut rng(7)).unwrap();
        let xi = TangentVector::random(&u, &mut rng(8));
        let exact = p.full_grad(&u).unwrap().inner(&xi).unwrap();
        let e1 = (fd_directional_derivative(&p, &u, &xi, 1e-2).unwrap() - exact).abs();
        let e2 = (fd_directional_derivative(&p, &u, &xi, 5e-3).unwrap() - exact).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn rate_fit_on_exact_sequences() {
        let geometric: Vec<f64> = (0..30).map(|s| 3.0 * 0.7f64.powi(s)).collect();
        let fit = fit_linear_rate(&geometric).unwrap();
        assert!((fit.contraction - 0.7).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let constant = fit_linear_rate(&[2.5; 10]).unwrap();
        assert_eq!(constant.contraction, 1.0);
        assert_eq!(constant.r_squared, 1.0);
        // negative control: a growing sequence is not a contraction
        let growing: Vec<f64> = (0..10).map(|s| 1.1f64.powi(s)).collect();
        assert!(fit_linear_rate(&growing).unwrap().contraction > 1.0);
        assert!(fit_linear_rate(&[1.0]).is_err());
        assert!(fit_linear_rate(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn beta_estimate_is_deterministic_and_positive() {
        let p = gen_karcher(&SyntheticSpec::new(ProblemKind::Karcher, 20, 10, 2, 9)).unwrap();
        let c = karcher_mean(p.points(), 1e-10, 100).unwrap().point;
        let a = estimate_beta(&p, &c, 0.2, 50, 10).unwrap();
        let b = estimate_beta(&p, &c, 0.2, 50, 10).unwrap();
        assert_eq!(a, b);
        assert!(a.beta_hat > 0.5 && a.beta_hat < 3.0, "{a:?}");
        assert!(a.max_pair_distance <= 0.4 + 1e-12);
        assert!(estimate_beta(&p, &c, 0.2, 0, 10).is_err());
    }

    #[test]
    fn beta_of_a_quadratic_model_is_its_curvature() {
        // f(U) = −½·tr(UᵀAU) on Gr(1, 2) with A = diag(3, 1): along the
        // great circle the gradient changes at rate (3 − 1)·|cos 2θ| ≤ 2.
        struct Rayleigh;
        impl Problem for Rayleigh {
            fn n_samples(&self) -> usize {
                1
            }
            fn dims(&self) -> (usize, usize) {
                (2, 1)
            }
            fn batch_cost(&self, u: &GrassmannPoint, _b: &[usize]) -> Result<f64> {
                let m = u.matrix();
                Ok(-0.5 * (3.0 * m[(0, 0)].powi(2) + m[(1, 0)].powi(2)))
            }
            fn stoch_grad(&self, u: &GrassmannPoint, _b: &[usize]) -> Result<TangentVector> {
                let a = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[3.0, 1.0]));
                project_tangent(u, -(a * u.matrix()))
            }
        }
        let e1 = GrassmannPoint::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let est = estimate_beta(&Rayleigh, &e1, 1e-3, 200, 11).unwrap();
        assert!((est.beta_hat - 2.0).abs() < 1e-3, "{est:?}");
    }
}
