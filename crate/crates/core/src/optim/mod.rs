//! R-SVRG (options I and II, and the cold-started R-SVRG+), R-SGD and
//! steepest descent with Armijo backtracking.
//!
//! Gradient evaluations are counted per sample: a full gradient costs `N`,
//! a mini-batch gradient costs the batch size. An R-SVRG epoch therefore
//! costs `N + 2·B·mₛ`. Metrics written to the trace (losses, the full
//! gradient norm) are diagnostics and are not counted, except that the
//! snapshot gradient recorded at the end of an R-SVRG epoch is reused as
//! the next epoch's full gradient and charged there. Line-search cost
//! evaluations are counted separately and enter the x-axis as half a
//! gradient evaluation each.

mod baseline;
mod schedule;
mod svrg;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::debug;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::{exp_map, GrassmannPoint, TangentVector};
use crate::problems::Problem;

pub use baseline::{run_rsd, run_rsgd, ARMIJO_C, ARMIJO_MAX_HALVINGS, ARMIJO_SHRINK};
pub use schedule::Schedule;
pub use svrg::{modified_stochastic_gradient, run_rsvrg};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Rsvrg,
    /// R-SVRG whose first epoch is plain R-SGD.
    RsvrgPlus,
    Rsgd,
    Rsd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Rsvrg, Variant::RsvrgPlus, Variant::Rsgd, Variant::Rsd];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rsvrg => "rsvrg",
            Variant::RsvrgPlus => "rsvrg_plus",
            Variant::Rsgd => "rsgd",
            Variant::Rsd => "rsd",
        }
    }

    /// Whether the variant takes a step-size schedule.
    pub fn uses_schedule(self) -> bool {
        self != Variant::Rsd
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected rsvrg, rsvrg_plus, rsgd or rsd)")))
    }
}

/// How the snapshot `Ũˢ` is chosen from the inner iterates `U₁ˢ … U_{mₛ}ˢ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averaging {
    /// Option I: Karcher mean of the inner iterates.
    KarcherMean,
    /// Option I, randomized form: a uniformly chosen inner iterate.
    RandomIterate,
    /// Option II: the last inner iterate.
    LastIterate,
}

impl Averaging {
    pub fn name(self) -> &'static str {
        match self {
            Averaging::KarcherMean => "option_I_karcher",
            Averaging::RandomIterate => "option_I_random_t",
            Averaging::LastIterate => "option_II_last",
        }
    }
}

impl FromStr for Averaging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Averaging::KarcherMean, Averaging::RandomIterate, Averaging::LastIterate]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown averaging `{s}` (expected option_I_karcher, option_I_random_t or option_II_last)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub variant: Variant,
    /// Inner iterations per epoch; `None` means `5N`.
    pub m_s: Option<usize>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop once the full gradient norm at the epoch's output is at most this.
    pub grad_tol: f64,
    pub averaging: Averaging,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Rsvrg,
            m_s: None,
            batch_size: 10,
            max_epochs: 100,
            grad_tol: 1e-8,
            averaging: Averaging::RandomIterate,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    pub fn inner_len(&self, n_samples: usize) -> usize {
        self.m_s.unwrap_or(5 * n_samples)
    }

    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if self.inner_len(n_samples) == 0 {
            return Err(Error::Config("inner loop length m_s must be >= 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > n_samples {
            return Err(Error::Config(format!(
                "batch size {} outside [1, {n_samples}]",
                self.batch_size
            )));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Config(format!("grad_tol must be >= 0, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// Metrics at the output point of one epoch (epoch 0 is the initial point).
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    /// Cumulative per-sample gradient evaluations.
    pub grad_evals: u64,
    /// Cumulative per-sample cost evaluations (line search only).
    pub cost_evals: u64,
    /// `(grad_evals + cost_evals/2) / N`
    pub grad_evals_over_n: f64,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub optimality_gap: Option<f64>,
    pub full_grad_norm: f64,
    /// Step size used last in the epoch (the accepted step for steepest descent).
    pub eta: f64,
    /// Seconds since the run started.
    pub wall_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradTol,
    MaxEpochs,
    /// The line search could no longer resolve a decrease in floating point.
    PrecisionLimit,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub point: GrassmannPoint,
    pub trace: Vec<TraceRecord>,
    pub stop: StopReason,
}

/// Snapshot of an R-SVRG epoch: `Ũ` and `grad f(Ũ)`.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub point: GrassmannPoint,
    pub full_grad: TangentVector,
}

/// State handed to an [`Observer`] right before an inner update
/// `U_t = Exp_{U_{t−1}}(−η·direction)`.
#[derive(Debug)]
pub struct InnerStep<'a> {
    pub epoch: usize,
    /// One-based inner iteration `t`.
    pub iteration: usize,
    pub current: &'a GrassmannPoint,
    /// Present for variance-reduced epochs.
    pub snapshot: Option<&'a Snapshot>,
    pub batch: &'a [usize],
    pub direction: &'a TangentVector,
    pub eta: f64,
}

/// Hooks into a running optimizer. Both methods default to no-ops.
pub trait Observer {
    fn inner_step(&mut self, _step: &InnerStep<'_>) -> Result<()> {
        Ok(())
    }

    fn epoch_end(&mut self, _record: &TraceRecord, _point: &GrassmannPoint) {}
}

impl Observer for () {}

/// Runs the configured variant. `schedule` is ignored by steepest descent.
pub fn run(
    problem: &dyn Problem,
    config: &OptimizerConfig,
    schedule: &Schedule,
    u0: &GrassmannPoint,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    match config.variant {
        Variant::Rsvrg | Variant::RsvrgPlus => run_rsvrg(problem, config, schedule, u0, observer),
        Variant::Rsgd => run_rsgd(problem, config, schedule, u0, observer),
        Variant::Rsd => run_rsd(problem, config, u0, observer),
    }
}

/// Bookkeeping shared by all optimizers.
struct Runner<'a> {
    problem: &'a dyn Problem,
    config: &'a OptimizerConfig,
    observer: &'a mut dyn Observer,
    n: usize,
    m_s: usize,
    rng: ChaCha8Rng,
    grad_evals: u64,
    cost_evals: u64,
    trace: Vec<TraceRecord>,
    start: Instant,
}

impl<'a> Runner<'a> {
    fn new(
        problem: &'a dyn Problem,
        config: &'a OptimizerConfig,
        u0: &GrassmannPoint,
        observer: &'a mut dyn Observer,
    ) -> Result<Self> {
        let n = problem.n_samples();
        config.validate(n)?;
        if u0.shape() != problem.dims() {
            return Err(Error::Dimension {
                expected: problem.dims(),
                found: u0.shape(),
            });
        }
        Ok(Self {
            problem,
            config,
            observer,
            n,
            m_s: config.inner_len(n),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            grad_evals: 0,
            cost_evals: 0,
            trace: Vec::new(),
            start: Instant::now(),
        })
    }

    fn sample_batch(&mut self) -> Vec<usize> {
        sample(&mut self.rng, self.n, self.config.batch_size).into_vec()
    }

    /// Evaluates and records the metrics at `u`; returns `grad f(u)`.
    fn record(&mut self, epoch: usize, u: &GrassmannPoint, eta: f64) -> Result<TangentVector> {
        let train_loss = self.problem.cost(u)?;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch, eta });
        }
        let grad = self.problem.full_grad(u)?;
        let full_grad_norm = grad.norm();
        if !full_grad_norm.is_finite() {
            return Err(Error::Divergence { epoch, eta });
        }
        let record = TraceRecord {
            epoch,
            grad_evals: self.grad_evals,
            cost_evals: self.cost_evals,
            grad_evals_over_n: (self.grad_evals as f64 + self.cost_evals as f64 / 2.0) / self.n as f64,
            train_loss,
            test_loss: self.problem.test_cost(u)?,
            optimality_gap: self.problem.optimal_cost().map(|f_star| train_loss - f_star),
            full_grad_norm,
            eta,
            wall_time: self.start.elapsed().as_secs_f64(),
        };
        debug!(
            "{} epoch {epoch}: loss {train_loss:.6e}, |grad| {full_grad_norm:.3e}, evals/N {:.2}",
            self.config.variant, record.grad_evals_over_n
        );
        self.observer.epoch_end(&record, u);
        self.trace.push(record);
        Ok(grad)
    }

    fn converged(&self, grad: &TangentVector) -> bool {
        grad.norm() <= self.config.grad_tol
    }

    fn finish(self, point: GrassmannPoint, stop: StopReason) -> RunResult {
        RunResult {
            point,
            trace: self.trace,
            stop,
        }
    }
}

/// `Exp_U(−η·ξ)`; a zero step returns `U` itself.
fn descend(u: &GrassmannPoint, direction: &TangentVector, eta: f64, epoch: usize) -> Result<GrassmannPoint> {
    if eta == 0.0 || direction.norm() == 0.0 {
        return Ok(u.clone());
    }
    exp_map(u, direction, -eta).map_err(|e| match e {
        Error::SvdFailed => Error::Divergence { epoch, eta },
        e => e,
    })
}
