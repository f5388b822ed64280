use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::manifold::{distance, GrassmannPoint, TangentVector};
use crate::optim::{modified_stochastic_gradient, InnerStep, Observer};
use crate::problems::Problem;

/// Multiplier applied to the variance bound to absorb sampling error in `β̂`.
pub const BETA_SAFETY: f64 = 1.1;

/// Inner-loop state `(U_{t−1}ˢ, Ũ^{s−1}, grad f(Ũ^{s−1}))` captured during a run.
#[derive(Clone, Debug)]
pub struct VarianceCheckpoint {
    pub epoch: usize,
    pub iteration: usize,
    pub current: GrassmannPoint,
    pub snapshot: GrassmannPoint,
    pub snapshot_grad: TangentVector,
}

/// Observer that stores a checkpoint at the listed inner iterations of
/// every variance-reduced epoch.
#[derive(Clone, Debug, Default)]
pub struct CheckpointRecorder {
    iterations: Vec<usize>,
    pub checkpoints: Vec<VarianceCheckpoint>,
}

impl CheckpointRecorder {
    pub fn new(iterations: Vec<usize>) -> Self {
        Self {
            iterations,
            checkpoints: Vec::new(),
        }
    }
}

impl Observer for CheckpointRecorder {
    fn inner_step(&mut self, step: &InnerStep<'_>) -> Result<()> {
        if let Some(snap) = step.snapshot {
            if self.iterations.contains(&step.iteration) {
                self.checkpoints.push(VarianceCheckpoint {
                    epoch: step.epoch,
                    iteration: step.iteration,
                    current: step.current.clone(),
                    snapshot: snap.point.clone(),
                    snapshot_grad: snap.full_grad.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Exact moments of the single-sample direction `ξ` over all `N` indices.
#[derive(Clone, Debug)]
pub struct DirectionMoments {
    /// `(1/N)·Σₙ ξₙ`
    pub mean: TangentVector,
    /// `grad f(U_{t−1})`
    pub full_grad: TangentVector,
    /// `‖mean − grad f‖`, zero for an unbiased estimator.
    pub bias: f64,
    /// `E‖ξ‖²`
    pub second_moment: f64,
    /// `E‖ξ − Eξ‖²`
    pub variance: f64,
}

pub fn direction_moments(problem: &dyn Problem, cp: &VarianceCheckpoint) -> Result<DirectionMoments> {
    let n = problem.n_samples();
    let (d, r) = problem.dims();
    let mut directions = Vec::with_capacity(n);
    let mut sum = DMatrix::zeros(d, r);
    let mut second_moment = 0.0;
    for i in 0..n {
        let xi = modified_stochastic_gradient(&cp.current, &cp.snapshot, &[i], problem, &cp.snapshot_grad)?;
        sum += xi.matrix();
        second_moment += xi.norm_squared();
        directions.push(xi.into_matrix());
    }
    let mean_mat = sum / n as f64;
    second_moment /= n as f64;
    let variance = directions.iter().map(|x| (x - &mean_mat).norm_squared()).sum::<f64>() / n as f64;
    let full_grad = problem.full_grad(&cp.current)?;
    let mean = TangentVector::new(&cp.current, mean_mat)?;
    let bias = mean.sub(&full_grad)?.norm();
    Ok(DirectionMoments {
        mean,
        full_grad,
        bias,
        second_moment,
        variance,
    })
}

#[derive(Clone, Debug)]
pub struct VarianceRow {
    pub epoch: usize,
    pub iteration: usize,
    pub second_moment: f64,
    pub variance: f64,
    /// `β̂²·(14·dist(U_{t−1}, w*)² + 8·dist(Ũ, w*)²)·BETA_SAFETY`
    pub bound: f64,
    pub violated: bool,
}

#[derive(Clone, Debug)]
pub struct VarianceReport {
    pub rows: Vec<VarianceRow>,
    pub violations: usize,
}

/// Evaluates the second-moment bound of `ξ` at every checkpoint.
pub fn check_variance_bound(
    problem: &dyn Problem,
    checkpoints: &[VarianceCheckpoint],
    w_star: &GrassmannPoint,
    beta_hat: f64,
) -> Result<VarianceReport> {
    if !(beta_hat >= 0.0 && beta_hat.is_finite()) {
        return Err(Error::Config(format!("Lipschitz estimate must be finite and non-negative, got {beta_hat}")));
    }
    let mut rows = Vec::with_capacity(checkpoints.len());
    for cp in checkpoints {
        let m = direction_moments(problem, cp)?;
        let d_cur = distance(&cp.current, w_star)?;
        let d_snap = distance(&cp.snapshot, w_star)?;
        let bound = beta_hat.powi(2) * (14.0 * d_cur.powi(2) + 8.0 * d_snap.powi(2)) * BETA_SAFETY;
        rows.push(VarianceRow {
            epoch: cp.epoch,
            iteration: cp.iteration,
            second_moment: m.second_moment,
            variance: m.variance,
            bound,
            violated: m.second_moment > bound,
        });
    }
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok(VarianceReport { rows, violations })
}
