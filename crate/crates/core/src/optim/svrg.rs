use rand::RngExt;

use super::{
    descend, Averaging, InnerStep, Observer, OptimizerConfig, RunResult, Runner, Schedule, Snapshot, StopReason,
    Variant,
};
use crate::error::{Error, Result};
use crate::manifold::{karcher_mean, Geodesic, GrassmannPoint, TangentVector};
use crate::problems::Problem;

/// The variance-reduced direction at `U_cur`:
///
/// ```text
/// ξ = grad f_B(U_cur) − P(grad f_B(Ũ)) + P(grad f(Ũ))
/// ```
///
/// with `P` the parallel translation from `Ũ` to `U_cur` along
/// `Log_Ũ(U_cur)`. The result is attached to `current`.
pub fn modified_stochastic_gradient(
    current: &GrassmannPoint,
    snapshot: &GrassmannPoint,
    batch: &[usize],
    problem: &dyn Problem,
    snapshot_grad: &TangentVector,
) -> Result<TangentVector> {
    if !snapshot_grad.base().same_representative(snapshot) {
        return Err(Error::Contract("cached full gradient is not attached to the snapshot".into()));
    }
    let g_cur = problem.stoch_grad(current, batch)?;
    let g_snap = problem.stoch_grad(snapshot, batch)?;
    if current.same_representative(snapshot) {
        return g_cur.sub(&g_snap)?.add(snapshot_grad);
    }
    // The geodesic ends at a different representative of `current`'s subspace.
    let geodesic = Geodesic::between(snapshot, current)?;
    let moved_snap = geodesic.transport(&g_snap, 1.0)?.lift_to(current);
    let moved_full = geodesic.transport(snapshot_grad, 1.0)?.lift_to(current);
    g_cur.sub(&moved_snap)?.add(&moved_full)
}

/// R-SVRG, or R-SVRG+ when `config.variant` is [`Variant::RsvrgPlus`].
pub fn run_rsvrg(
    problem: &dyn Problem,
    config: &OptimizerConfig,
    schedule: &Schedule,
    u0: &GrassmannPoint,
    observer: &mut dyn Observer,
) -> Result<RunResult> {
    if !matches!(config.variant, Variant::Rsvrg | Variant::RsvrgPlus) {
        return Err(Error::Config(format!("run_rsvrg called with variant {}", config.variant)));
    }
    let mut runner = Runner::new(problem, config, u0, observer)?;
    let (n, m_s, batch_size) = (runner.n as u64, runner.m_s, config.batch_size as u64);
    let mut snapshot = Snapshot {
        point: u0.clone(),
        full_grad: runner.record(0, u0, schedule.eta(0, m_s))?,
    };
    if runner.converged(&snapshot.full_grad) {
        return Ok(runner.finish(snapshot.point, StopReason::GradTol));
    }
    let mut k = 0usize;
    for epoch in 1..=config.max_epochs {
        let mut eta = schedule.eta(k, m_s);
        let next = if config.variant == Variant::RsvrgPlus && epoch == 1 {
            // Cold start: plain stochastic steps, no full gradient.
            let mut u = snapshot.point.clone();
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
            u
        } else {
            runner.grad_evals += n;
            let pick = runner.rng.random_range(1..=m_s);
            let keep_all = config.averaging == Averaging::KarcherMean;
            let mut iterates = Vec::with_capacity(if keep_all { m_s } else { 0 });
            let mut picked = None;
            let mut u = snapshot.point.clone();
            for t in 1..=m_s {
                eta = schedule.eta(k, m_s);
                let batch = runner.sample_batch();
                let xi = modified_stochastic_gradient(&u, &snapshot.point, &batch, problem, &snapshot.full_grad)
                    .map_err(|e| e.aborted(epoch, t))?;
                runner.grad_evals += 2 * batch_size;
                runner.observer.inner_step(&InnerStep {
                    epoch,
                    iteration: t,
                    current: &u,
                    snapshot: Some(&snapshot),
                    batch: &batch,
                    direction: &xi,
                    eta,
                })?;
                u = descend(&u, &xi, eta, epoch).map_err(|e| e.aborted(epoch, t))?;
                k += 1;
                if keep_all {
                    iterates.push(u.clone());
                }
                if t == pick {
                    picked = Some(u.clone());
                }
            }
            match config.averaging {
                Averaging::LastIterate => u,
                Averaging::RandomIterate => picked.expect("pick lies in 1..=m_s"),
                Averaging::KarcherMean => {
                    karcher_mean(&iterates, 1e-10, 100)
                        .map_err(|e| e.aborted(epoch, m_s))?
                        .point
                }
            }
        };
        snapshot = Snapshot {
            full_grad: runner.record(epoch, &next, eta)?,
            point: next,
        };
        if runner.converged(&snapshot.full_grad) {
            return Ok(runner.finish(snapshot.point, StopReason::GradTol));
        }
    }
    Ok(runner.finish(snapshot.point, StopReason::MaxEpochs))
}
