use super::{descend, InnerStep, Observer, OptimizerConfig, RunResult, Runner, Schedule, StopReason, Variant};
use crate::error::{Error, Result};
use crate::manifold::{exp_map, GrassmannPoint};
use crate::problems::Problem;

/// Sufficient-decrease constant of the Armijo rule.
pub const ARMIJO_C: f64 = 1e-4;
/// Step contraction per backtracking trial.
pub const ARMIJO_SHRINK: f64 = 0.5;
/// Trials use steps `1, 1/2, …, 2^-ARMIJO_MAX_HALVINGS`.
pub const ARMIJO_MAX_HALVINGS: usize = 25;

/// Riemannian SGD: `U_t = Exp_{U_{t−1}}(−η_k·grad f_B(U_{t−1}))`, with
/// `mₛ` steps per epoch and the last iterate carried over.
pub fn run_rsgd(
    problem: &dyn Problem,
    config: &OptimizerConfig,
    schedule: &Schedule,
    u0: &GrassmannPoint,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    if config.variant != Variant::Rsgd {
        return Err(Error::Config(format!("run_rsgd called with variant {}", config.variant)));
    }
    let mut runner = Runner::new(problem, config, u0, observer)?;
    let (m_s, batch_size) = (runner.m_s, config.batch_size as u64);
    let mut u = u0.clone();
    let grad = runner.record(0, &u, schedule.eta(0, m_s))?;
    if runner.converged(&grad) {
        return Ok(runner.finish(u, StopReason::GradTol));
    }
    let mut k = 0usize;
    for epoch in 1..=config.max_epochs {
        let mut eta = schedule.eta(k, m_s);
        for t in 1..=m_s {
            eta = schedule.eta(k, m_s);
            let batch = runner.sample_batch();
            let g = problem.stoch_grad(&u, &batch).map_err(|e| e.aborted(epoch, t))?;
            runner.grad_evals += batch_size;
            runner.observer.inner_step(&InnerStep {
                epoch,
                iteration: t,
                current: &u,
                snapshot: None,
                batch: &batch,
                direction: &g,
                eta,
            })?;
            u = descend(&u, &g, eta, epoch).map_err(|e| e.aborted(epoch, t))?;
            k += 1;
        }
        let grad = runner.record(epoch, &u, eta)?;
        if runner.converged(&grad) {
            return Ok(runner.finish(u, StopReason::GradTol));
        }
    }
    Ok(runner.finish(u, StopReason::MaxEpochs))
}

/// Riemannian steepest descent with Armijo backtracking along `−grad f`.
/// One epoch is one accepted step.
///
/// When no trial step passes and the required decrease `c·‖grad‖²` is
/// below the rounding level of the cost, the run stops with
/// [`StopReason::PrecisionLimit`]; otherwise the stall is an error.
pub fn run_rsd(
    problem: &dyn Problem,
    config: &OptimizerConfig,
    u0: &GrassmannPoint,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    if config.variant != Variant::Rsd {
        return Err(Error::Config(format!("run_rsd called with variant {}", config.variant)));
    }
    let mut runner = Runner::new(problem, config, u0, observer)?;
    let n = runner.n as u64;
    let mut u = u0.clone();
    let mut f = problem.cost(&u)?;
    let mut grad = runner.record(0, &u, 1.0)?;
    if runner.converged(&grad) {
        return Ok(runner.finish(u, StopReason::GradTol));
    }
    for epoch in 1..=config.max_epochs {
        runner.grad_evals += n;
        let slope = grad.norm_squared();
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=ARMIJO_MAX_HALVINGS {
            let trial = exp_map(&u, &grad, -step).map_err(|e| e.aborted(epoch, 0))?;
            let f_trial = problem.cost(&trial)?;
            runner.cost_evals += n;
            if f_trial < f && f_trial <= f - ARMIJO_C * step * slope {
                accepted = Some((trial, f_trial));
                break;
            }
            step *= ARMIJO_SHRINK;
        }
        let Some((next, f_next)) = accepted else {
            if ARMIJO_C * slope <= 64.0 * f64::EPSILON * f.abs() {
                return Ok(runner.finish(u, StopReason::PrecisionLimit));
            }
            return Err(Error::LineSearchStalled {
                iteration: epoch,
                halvings: ARMIJO_MAX_HALVINGS,
                grad_norm: slope.sqrt(),
            });
        };
        u = next;
        f = f_next;
        grad = runner.record(epoch, &u, step)?;
        if runner.converged(&grad) {
            return Ok(runner.finish(u, StopReason::GradTol));
        }
    }
    Ok(runner.finish(u, StopReason::MaxEpochs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::PcaProblem;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn spiked_pca(d: usize, n: usize, r: usize, seed: u64) -> PcaProblem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = DMatrix::from_fn(d, n, |i, _| {
            let scale = if i < r { 3.0 } else { 1.0 / (1.0 + i as f64) };
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        });
        PcaProblem::new(data, r).unwrap()
    }

    fn config(variant: Variant) -> OptimizerConfig {
        OptimizerConfig {
            variant,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn steepest_descent_reaches_the_optimum() {
        let p = spiked_pca(20, 500, 5, 1);
        let u0 = GrassmannPoint::random(20, 5, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let out = run_rsd(&p, &config(Variant::Rsd), &u0, &mut ()).unwrap();
        let last = out.trace.last().unwrap();
        assert!(last.optimality_gap.unwrap() <= 1e-10, "{last:?}");
        for pair in out.trace.windows(2) {
            assert!(pair[1].train_loss < pair[0].train_loss);
            assert!(pair[1].grad_evals > pair[0].grad_evals);
        }
        if out.stop == StopReason::GradTol {
            assert!(last.full_grad_norm <= 1e-8);
        }
    }

    #[test]
    fn zero_step_never_moves() {
        let p = spiked_pca(6, 30, 2, 3);
        let u0 = GrassmannPoint::random(6, 2, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let c = OptimizerConfig {
            m_s: Some(10),
            max_epochs: 3,
            ..config(Variant::Rsgd)
        };
        let out = run_rsgd(&p, &c, &Schedule::fixed(0.0).unwrap(), &u0, &mut ()).unwrap();
        assert_eq!(out.point.matrix(), u0.matrix());
        assert!(out.trace.iter().all(|r| r.train_loss == out.trace[0].train_loss));
    }

    #[test]
    fn sgd_counts_batch_evaluations_only() {
        let p = spiked_pca(6, 30, 2, 5);
        let u0 = GrassmannPoint::random(6, 2, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let c = OptimizerConfig {
            m_s: Some(10),
            batch_size: 4,
            max_epochs: 2,
            grad_tol: 0.0,
            ..config(Variant::Rsgd)
        };
        let out = run_rsgd(&p, &c, &Schedule::fixed(0.01).unwrap(), &u0, &mut ()).unwrap();
        let evals: Vec<u64> = out.trace.iter().map(|r| r.grad_evals).collect();
        assert_eq!(evals, vec![0, 40, 80]);
    }

    #[test]
    fn decay_schedule_reaches_the_observer() {
        struct Etas(Vec<(usize, f64)>);
        impl Observer for Etas {
            fn inner_step(&mut self, step: &InnerStep<'_>) -> Result<()> {
                self.0.push((step.epoch, step.eta));
                Ok(())
            }
        }
        let p = spiked_pca(6, 20, 2, 7);
        let u0 = GrassmannPoint::random(6, 2, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let c = OptimizerConfig {
            m_s: Some(5),
            max_epochs: 3,
            grad_tol: 0.0,
            ..config(Variant::Rsgd)
        };
        let mut seen = Etas(Vec::new());
        run_rsgd(&p, &c, &Schedule::decay(0.01, 0.1).unwrap(), &u0, &mut seen).unwrap();
        assert_eq!(seen.0.len(), 15);
        for (k, &(epoch, eta)) in seen.0.iter().enumerate() {
            assert_eq!(epoch, k / 5 + 1);
            assert_eq!(eta, 0.01 / (1.0 + 0.01 * 0.1 * (k / 5) as f64));
        }
    }

    #[test]
    fn variant_mismatch_is_a_config_error() {
        let p = spiked_pca(6, 20, 2, 9);
        let u0 = GrassmannPoint::random(6, 2, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let s = Schedule::fixed(0.1).unwrap();
        assert!(matches!(run_rsgd(&p, &config(Variant::Rsd), &s, &u0, &mut ()), Err(Error::Config(_))));
        assert!(matches!(run_rsd(&p, &config(Variant::Rsgd), &u0, &mut ()), Err(Error::Config(_))));
    }
}
