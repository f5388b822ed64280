use std::sync::OnceLock;

use nalgebra::DMatrix;

use super::{check_batch, check_point, Problem};
use crate::error::{Error, Result};
use crate::manifold::{distance, karcher_mean, log_map, GrassmannPoint, KarcherMean, TangentVector};

/// `f(U) = (1/2N)·Σ dist(U, Qₙ)²`, whose minimizer is the Karcher mean of
/// the `Qₙ`. The gradient is `−(1/N)·Σ Log_U(Qₙ)`.
#[derive(Debug)]
pub struct KarcherProblem {
    points: Vec<GrassmannPoint>,
    dims: (usize, usize),
    mean: OnceLock<Option<KarcherMean>>,
}

impl KarcherProblem {
    pub fn new(points: Vec<GrassmannPoint>) -> Result<Self> {
        let dims = points
            .first()
            .ok_or_else(|| Error::Config("Karcher problem needs at least one point".into()))?
            .shape();
        if let Some(bad) = points.iter().find(|p| p.shape() != dims) {
            return Err(Error::Dimension {
                expected: dims,
                found: bad.shape(),
            });
        }
        Ok(Self {
            points,
            dims,
            mean: OnceLock::new(),
        })
    }

    pub fn points(&self) -> &[GrassmannPoint] {
        &self.points
    }

    /// The minimizer, from [`karcher_mean`] with tolerance 1e-10; computed once.
    pub fn mean(&self) -> Option<&KarcherMean> {
        self.mean
            .get_or_init(|| karcher_mean(&self.points, 1e-10, 100).ok())
            .as_ref()
    }
}

impl Problem for KarcherProblem {
    fn n_samples(&self) -> usize {
        self.points.len()
    }

    fn dims(&self) -> (usize, usize) {
        self.dims
    }

    fn batch_cost(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<f64> {
        check_point(u, self.dims)?;
        check_batch(batch, self.n_samples())?;
        let mut total = 0.0;
        for &i in batch {
            let dist = distance(u, &self.points[i]).map_err(|e| e.at_sample(i))?;
            total += dist * dist;
        }
        Ok(total / (2.0 * batch.len() as f64))
    }

    fn stoch_grad(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<TangentVector> {
        check_point(u, self.dims)?;
        check_batch(batch, self.n_samples())?;
        let (d, r) = self.dims;
        let mut acc = DMatrix::zeros(d, r);
        for &i in batch {
            acc -= log_map(u, &self.points[i]).map_err(|e| e.at_sample(i))?.matrix();
        }
        acc /= batch.len() as f64;
        Ok(TangentVector::from_horizontal(u, acc))
    }

    fn optimal_cost(&self) -> Option<f64> {
        let mean = self.mean()?;
        self.cost(&mean.point).ok()
    }
}
