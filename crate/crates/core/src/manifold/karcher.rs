use log::warn;
use nalgebra::DMatrix;

use super::{exp_map, log_map, GrassmannPoint, TangentVector};
use crate::error::{Error, Result};

/// Outcome of [`karcher_mean`].
#[derive(Clone, Debug)]
pub struct KarcherMean {
    pub point: GrassmannPoint,
    /// Norm of the mean logarithm `(1/m)·Σ Log_U(Qᵢ)` at `point`.
    pub grad_norm: f64,
    pub iterations: usize,
    /// False when `max_iter` was exhausted; `point` is then the best iterate seen.
    pub converged: bool,
}

/// Minimizes `(1/2m)·Σ dist(U, Qᵢ)²` by unit-step Riemannian gradient descent
/// `U ← Exp_U((1/m)·Σ Log_U(Qᵢ))`, starting from `points[0]`.
pub fn karcher_mean(points: &[GrassmannPoint], tol: f64, max_iter: usize) -> Result<KarcherMean> {
    let first = points
        .first()
        .ok_or_else(|| Error::Config("Karcher mean of an empty point set".into()))?;
    let mut current = first.clone();
    let mut best: Option<(GrassmannPoint, f64)> = None;
    for iteration in 0..=max_iter {
        let step = mean_log(&current, points)?;
        let grad_norm = step.norm();
        if best.as_ref().is_none_or(|(_, g)| grad_norm < *g) {
            best = Some((current.clone(), grad_norm));
        }
        if grad_norm <= tol {
            return Ok(KarcherMean {
                point: current,
                grad_norm,
                iterations: iteration,
                converged: true,
            });
        }
        if iteration == max_iter {
            break;
        }
        current = exp_map(&current, &step, 1.0)?;
    }
    let (point, grad_norm) = best.expect("at least one iterate evaluated");
    warn!("Karcher mean did not reach tolerance {tol:e} in {max_iter} iterations (gradient norm {grad_norm:.3e})");
    Ok(KarcherMean {
        point,
        grad_norm,
        iterations: max_iter,
        converged: false,
    })
}

/// `(1/m)·Σ Log_U(Qᵢ)`, the negative Riemannian gradient of the Karcher cost.
pub(crate) fn mean_log(base: &GrassmannPoint, points: &[GrassmannPoint]) -> Result<TangentVector> {
    let (d, r) = base.shape();
    let mut acc = DMatrix::zeros(d, r);
    for (i, q) in points.iter().enumerate() {
        acc += log_map(base, q).map_err(|e| e.at_sample(i))?.matrix();
    }
    acc /= points.len() as f64;
    Ok(TangentVector::from_horizontal(base, acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cloud(center: &GrassmannPoint, n: usize, spread: f64, seed: u64) -> Vec<GrassmannPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let xi = TangentVector::random(center, &mut rng);
                let xi = xi.scaled(spread / xi.norm());
                exp_map(center, &xi, 1.0).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_and_repeated_points() {
        let q = GrassmannPoint::random(9, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let m = karcher_mean(&[q.clone()], 1e-10, 100).unwrap();
        assert!(m.converged && m.iterations == 0);
        assert!(distance(&m.point, &q).unwrap() < 1e-12);
        let m = karcher_mean(&[q.clone(), q.clone(), q.clone()], 1e-10, 100).unwrap();
        assert!(distance(&m.point, &q).unwrap() < 1e-12);
    }

    #[test]
    fn two_points_give_the_geodesic_midpoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = GrassmannPoint::random(10, 3, &mut rng).unwrap();
        let b = cloud(&a, 1, 0.6, 3).pop().unwrap();
        let mean = karcher_mean(&[a.clone(), b.clone()], 1e-10, 100).unwrap();
        assert!(mean.converged);
        let da = distance(&mean.point, &a).unwrap();
        let db = distance(&mean.point, &b).unwrap();
        assert!((da - db).abs() < 1e-6);
        let midpoint = exp_map(&a, &log_map(&a, &b).unwrap(), 0.5).unwrap();
        assert!(distance(&midpoint, &mean.point).unwrap() < 1e-6);
    }

    #[test]
    fn cloud_mean_is_stationary() {
        let center = GrassmannPoint::random(15, 3, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let pts = cloud(&center, 25, 0.3, 5);
        let mean = karcher_mean(&pts, 1e-10, 100).unwrap();
        assert!(mean.converged);
        assert!(mean_log(&mean.point, &pts).unwrap().norm() <= 1e-10);
    }

    #[test]
    fn exhausted_iterations_report_best_iterate() {
        let center = GrassmannPoint::random(15, 3, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let pts = cloud(&center, 10, 0.5, 7);
        let mean = karcher_mean(&pts, 0.0, 1).unwrap();
        assert!(!mean.converged);
        assert!(mean.grad_norm.is_finite());
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(karcher_mean(&[], 1e-10, 10).is_err());
    }
}
