//! Finite-sum cost functions `f(U) = (1/N)·Σ fₙ(U)` on Gr(r, d).

mod completion;
mod karcher;
mod pca;

use crate::error::{Error, Result};
use crate::manifold::{GrassmannPoint, TangentVector};

pub use completion::{ColumnEntries, McProblem, DEFAULT_RIDGE};
pub use karcher::KarcherProblem;
pub use pca::{pca_optimum, PcaOptimum, PcaProblem};

/// A finite sum of per-sample losses over a Grassmann manifold.
///
/// Batch costs and gradients average over the batch, so a batch of all `N`
/// indices gives the full cost and gradient. All gradients are horizontal
/// at the representative they are evaluated at.
pub trait Problem: Send + Sync {
    fn n_samples(&self) -> usize;

    /// `(d, r)`
    fn dims(&self) -> (usize, usize);

    fn batch_cost(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<f64>;

    /// Riemannian gradient of the batch-averaged cost.
    fn stoch_grad(&self, u: &GrassmannPoint, batch: &[usize]) -> Result<TangentVector>;

    fn cost(&self, u: &GrassmannPoint) -> Result<f64> {
        self.batch_cost(u, &all_indices(self.n_samples()))
    }

    fn full_grad(&self, u: &GrassmannPoint) -> Result<TangentVector> {
        self.stoch_grad(u, &all_indices(self.n_samples()))
    }

    /// Held-out loss, for problems that carry a test set.
    fn test_cost(&self, _u: &GrassmannPoint) -> Result<Option<f64>> {
        Ok(None)
    }

    /// Minimum of `cost` when an exact oracle is available; used for the
    /// optimality gap.
    fn optimal_cost(&self) -> Option<f64> {
        None
    }
}

pub fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub(crate) fn check_batch(batch: &[usize], n_samples: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if let Some(&index) = batch.iter().find(|&&i| i >= n_samples) {
        return Err(Error::IndexOutOfRange { index, n_samples });
    }
    Ok(())
}

pub(crate) fn check_point(u: &GrassmannPoint, dims: (usize, usize)) -> Result<()> {
    if u.shape() != dims {
        return Err(Error::Dimension {
            expected: dims,
            found: u.shape(),
        });
    }
    Ok(())
}
