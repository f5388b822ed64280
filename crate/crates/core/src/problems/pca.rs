use std::sync::OnceLock;

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};

use super::{check_batch, check_point, Problem};
use crate::error::{Error, Result};
use crate::manifold::{project_tangent, GrassmannPoint, TangentVector};

/// `f(U) = (1/N)·Σ ‖xₙ − U·Uᵀ·xₙ‖²` over the columns `xₙ` of a d×N matrix.
#[derive(Debug)]
pub struct PcaProblem {
    data: DMatrix<f64>,
    rank: usize,
    optimum: OnceLock<Option<PcaOptimum>>,
}

#[derive(Clone, Debug)]
pub struct PcaOptimum {
    pub point: GrassmannPoint,
    pub cost: f64,
    /// Eigenvalues of `X·Xᵀ/N`, descending.
    pub eigenvalues: Vec<f64>,
    /// False when eigenvalues r and r+1 coincide, so the dominant subspace is
    /// not unique.
    pub unique: bool,
}

impl PcaProblem {
    pub fn new(data: DMatrix<f64>, rank: usize) -> Result<Self> {
        let (d, n) = data.shape();
        if n == 0 {
            return Err(Error::Config("PCA data has no samples".into()));
        }
        if rank == 0 || rank >= d {
            return Err(Error::Config(format!("PCA rank must satisfy 1 <= r < d, got d={d}, r={rank}")));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("PCA data contains non-finite values".into()));
        }
        Ok(Self {
            data,
            rank,
            optimum: OnceLock::new(),
        })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Dominant subspace of the sample covariance, computed once.
    pub fn optimum(&self) -> Option<&PcaOptimum> {
        self.optimum
            .get_or_init(|| pca_optimum(&self.data, self.rank).ok())
            .as_ref()
    }

    fn residual_cost(&self, u: &GrassmannPoint, columns: &DMatrix<f64>) -> f64 {
        let m = u.matrix();
        let resid = columns - m * m.tr_mul(columns);
        resid.norm_squared()
    }
}

impl Problem for PcaProblem {
    fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    fn dims(&self) -> (usize, usize) {
        (self.data.nrows(), self.rank)
    }

    fn batch_cost(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<f64> {
        check_point(u, self.dims())?;
        check_batch(batch, self.n_samples())?;
        let cols = self.data.select_columns(batch);
        Ok(self.residual_cost(u, &cols) / batch.len() as f64)
    }

    // Euclidean gradient of the equivalent maximization form, −(2/B)·Σ x·xᵀ·U,
    // has the same horizontal part as the residual form.
    fn stoch_grad(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<TangentVector> {
        check_point(u, self.dims())?;
        check_batch(batch, self.n_samples())?;
        let cols = self.data.select_columns(batch);
        let scores = cols.tr_mul(u.matrix());
        let egrad = (&cols * scores) * (-2.0 / batch.len() as f64);
        project_tangent(u, egrad)
    }

    fn cost(&self, u: &GrassmannPoint) -> Result<f64> {
        check_point(u, self.dims())?;
        Ok(self.residual_cost(u, &self.data) / self.n_samples() as f64)
    }

    fn optimal_cost(&self) -> Option<f64> {
        self.optimum().map(|o| o.cost)
    }
}

/// Top-r eigenvectors of `X·Xᵀ/N` and the residual cost they attain.
pub fn pca_optimum(data: &DMatrix<f64>, rank: usize) -> Result<PcaOptimum> {
    let (d, n) = data.shape();
    if n == 0 || rank == 0 || rank >= d {
        return Err(Error::Config(format!("need samples and 1 <= r < d (d={d}, r={rank}, N={n})")));
    }
    let cov = (data * data.transpose()) / n as f64;
    let eig = SymmetricEigen::try_new(cov, 1e-15, 10_000)
        .ok_or_else(|| Error::Config("covariance eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let basis = eig.eigenvectors.select_columns(&order[..rank]);
    let point = GrassmannPoint::orthonormalize(basis)?;
    let unique = eigenvalues[rank - 1] - eigenvalues[rank] > 1e-12;
    if !unique {
        warn!(
            "eigenvalues {} and {} coincide ({:e}); the optimal subspace is not unique",
            rank,
            rank + 1,
            eigenvalues[rank - 1]
        );
    }
    let resid = data - point.matrix() * point.matrix().tr_mul(data);
    let cost = resid.norm_squared() / n as f64;
    Ok(PcaOptimum {
        point,
        cost,
        eigenvalues,
        unique,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{distance, exp_map};
    use crate::problems::all_indices;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_problem(d: usize, n: usize, r: usize, seed: u64) -> PcaProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DMatrix::from_fn(d, n, |_, _| StandardNormal.sample(&mut rng));
        PcaProblem::new(data, r).unwrap()
    }

    #[test]
    fn perfect_fit_has_zero_cost_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = GrassmannPoint::random(8, 2, &mut rng).unwrap();
        let coeffs = DMatrix::from_fn(2, 30, |_, _| StandardNormal.sample(&mut rng));
        let p = PcaProblem::new(u.matrix() * coeffs, 2).unwrap();
        assert!(p.cost(&u).unwrap() < 1e-24);
        assert!(p.full_grad(&u).unwrap().norm() < 1e-12);
    }

    #[test]
    fn orthogonal_sample_is_a_critical_point() {
        // x₁ = e₁, U = span(e₂): residual 1 and xᵀU = 0, so the gradient vanishes.
        let p = PcaProblem::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), 1).unwrap();
        let u = GrassmannPoint::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        assert!((p.cost(&u).unwrap() - 1.0).abs() < 1e-15);
        assert!(p.full_grad(&u).unwrap().norm() < 1e-15);
    }

    #[test]
    fn batch_validation() {
        let p = random_problem(5, 4, 2, 2);
        let u = GrassmannPoint::random(5, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(matches!(p.stoch_grad(&u, &[]), Err(Error::EmptyBatch)));
        assert!(matches!(
            p.batch_cost(&u, &[0, 4]),
            Err(Error::IndexOutOfRange { index: 4, n_samples: 4 })
        ));
        let wrong = GrassmannPoint::random(6, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(matches!(p.cost(&wrong), Err(Error::Dimension { .. })));
    }

    #[test]
    fn full_batch_and_singleton_average_match_full_gradient() {
        let p = random_problem(7, 12, 3, 4);
        let u = GrassmannPoint::random(7, 3, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let full = p.full_grad(&u).unwrap();
        let batch = p.stoch_grad(&u, &all_indices(12)).unwrap();
        assert!((full.matrix() - batch.matrix()).norm() < 1e-12);
        let mut mean = DMatrix::zeros(7, 3);
        for i in 0..12 {
            mean += p.stoch_grad(&u, &[i]).unwrap().matrix();
        }
        mean /= 12.0;
        assert!((mean - full.matrix()).norm() < 1e-10);
        let batch_cost = p.batch_cost(&u, &all_indices(12)).unwrap();
        assert!((batch_cost - p.cost(&u).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_data_optimum_is_coordinate_axes() {
        // columns kᵗʰ scaled e_k, so X·Xᵀ/N is diagonal with entries k²/N
        let n = 6;
        let mut data = DMatrix::zeros(n, n);
        for k in 0..n {
            data[(k, k)] = (k + 1) as f64;
        }
        let opt = pca_optimum(&data, 2).unwrap();
        assert!(opt.unique);
        let expected = GrassmannPoint::new(
            DMatrix::from_fn(n, 2, |i, j| if i == n - 1 - j { 1.0 } else { 0.0 }),
        )
        .unwrap();
        assert!(distance(&opt.point, &expected).unwrap() < 1e-12);
        // residual keeps the four smallest squares
        let expected_cost = (1.0 + 4.0 + 9.0 + 16.0) / n as f64;
        assert!((opt.cost - expected_cost).abs() < 1e-12);
    }

    #[test]
    fn optimum_beats_random_subspaces_and_has_zero_gap() {
        let p = random_problem(10, 60, 3, 6);
        let opt = p.optimum().unwrap().clone();
        assert!((p.cost(&opt.point).unwrap() - opt.cost).abs() < 1e-12);
        assert!(p.full_grad(&opt.point).unwrap().norm() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let u = GrassmannPoint::random(10, 3, &mut rng).unwrap();
            assert!(p.cost(&u).unwrap() >= opt.cost);
        }
    }

    #[test]
    fn repeated_eigenvalue_is_flagged() {
        let data = DMatrix::<f64>::identity(4, 4);
        let opt = pca_optimum(&data, 2).unwrap();
        assert!(!opt.unique);
    }

    #[test]
    fn cost_is_invariant_under_rotation() {
        let p = random_problem(9, 20, 3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = GrassmannPoint::random(9, 3, &mut rng).unwrap();
        let q = crate::linalg::orthonormal_factor(&crate::linalg::gaussian_matrix(3, 3, &mut rng));
        let v = u.rotated(&q).unwrap();
        assert!((p.cost(&u).unwrap() - p.cost(&v).unwrap()).abs() < 1e-10);
        let moved = exp_map(&u, &p.full_grad(&u).unwrap(), -0.01).unwrap();
        assert!(moved.orthonormality_defect() < 1e-10);
    }
}
