//! `verify <artifact-dir>`: regenerates the instance recorded with a run and
//! applies the numerical checks from `rsvrg::verify` to it.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rsvrg::data::ProblemKind;
use rsvrg::optim::{run, Averaging, OptimizerConfig, Schedule, Variant};
use rsvrg::verify::{check_gradient, direction_moments, fit_linear_rate, CheckpointRecorder};
use rsvrg::{GrassmannPoint, TangentVector};

use crate::config::ExperimentConfig;
use crate::error::{io_error, CliError, Result};
use crate::experiment::{build_instance, initial_point, input_hash, CONFIG_FILE, MANIFEST_FILE};
use crate::plot::{check_increasing, read_traces};

const GRADIENT_CHECKS: usize = 20;
const FD_STEP: f64 = 1e-5;
const UNBIASED_TOL: f64 = 1e-10;
const RATE_WINDOW: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Pass,
    Fail,
    /// Not applicable to this artifact.
    Skip,
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub outcome: Outcome,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Skip => "SKIP",
        };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        outcome: if passed { Outcome::Pass } else { Outcome::Fail },
        detail,
    }
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.outcome != Outcome::Fail)
    }
}

fn manifest_hash(dir: &Path) -> Result<String> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_error(&path))?;
    text.lines()
        .find_map(|l| l.strip_prefix("input_sha256 = "))
        .map(str::to_string)
        .ok_or_else(|| CliError::Artifact {
            path,
            message: "no input_sha256 entry".into(),
        })
}

pub fn verify_artifacts(dir: &Path) -> Result<VerifyReport> {
    let config_path = dir.join(CONFIG_FILE);
    let config = ExperimentConfig::load(&config_path)?;
    let instance = build_instance(&config)?;
    let problem = instance.problem.as_ref();
    let mut checks = Vec::new();

    let recorded = manifest_hash(dir)?;
    let actual = input_hash(&config.render(), &instance.input_bytes);
    checks.push(check(
        "inputs",
        recorded == actual,
        format!("sha256 {}", if recorded == actual { "matches manifest" } else { "differs from manifest" }),
    ));

    let traces = read_traces(dir)?;
    let bad: Vec<String> = traces
        .iter()
        .filter(|t| check_increasing(t).is_err())
        .map(|t| t.path.display().to_string())
        .collect();
    checks.push(check(
        "trace x-axis",
        bad.is_empty() && !traces.is_empty(),
        if bad.is_empty() {
            format!("{} traces strictly increasing", traces.len())
        } else {
            format!("not increasing: {}", bad.join(", "))
        },
    ));

    let tol = if instance.kind == ProblemKind::Mc { 1e-4 } else { 1e-5 };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed());
    let (d, r) = problem.dims();
    let mut worst: f64 = 0.0;
    for _ in 0..GRADIENT_CHECKS {
        let u = GrassmannPoint::random(d, r, &mut rng)?;
        let xi = TangentVector::random(&u, &mut rng);
        worst = worst.max(check_gradient(problem, &u, &xi.scaled(1.0 / xi.norm()), FD_STEP)?.rel_error);
    }
    checks.push(check(
        "gradient vs finite differences",
        worst <= tol,
        format!("worst relative error {worst:.2e} over {GRADIENT_CHECKS} directions (tolerance {tol:e})"),
    ));

    checks.push(unbiasedness(problem, &config)?);
    checks.extend(rate_checks(&traces));
    Ok(VerifyReport { checks })
}

/// Exact mean of the variance-reduced direction at checkpoints of a short
/// live run started from the experiment's initial point.
fn unbiasedness(problem: &dyn rsvrg::Problem, config: &ExperimentConfig) -> Result<Check> {
    let eta = config.eta0.iter().copied().fold(f64::INFINITY, f64::min);
    if !eta.is_finite() {
        return Ok(Check {
            name: "unbiasedness".into(),
            outcome: Outcome::Skip,
            detail: "no step size in the grid".into(),
        });
    }
    let m_s = config.optimizer.inner_len(problem.n_samples()).min(40);
    let run_config = OptimizerConfig {
        variant: Variant::Rsvrg,
        m_s: Some(m_s),
        max_epochs: 2,
        grad_tol: 0.0,
        averaging: Averaging::LastIterate,
        ..config.optimizer.clone()
    };
    let mut recorder = CheckpointRecorder::new(vec![m_s / 2 + 1, m_s]);
    let u0 = initial_point(problem, config.seed())?;
    run(problem, &run_config, &Schedule::fixed(eta)?, &u0, &mut recorder)?;
    let mut worst: f64 = 0.0;
    for cp in &recorder.checkpoints {
        let m = direction_moments(problem, cp)?;
        worst = worst.max(m.bias / m.full_grad.norm().max(1.0));
    }
    Ok(check(
        "unbiasedness",
        worst <= UNBIASED_TOL,
        format!("largest |E[xi] - grad f| {worst:.2e} at {} checkpoints", recorder.checkpoints.len()),
    ))
}

/// Log-linear fit of the optimality gap over the last epochs of each
/// fixed-step variance-reduced trace.
fn rate_checks(traces: &[crate::plot::Trace]) -> Vec<Check> {
    let mut out = Vec::new();
    for t in traces {
        if !t.algorithm.starts_with("rsvrg") || !t.schedule.starts_with("fixed") {
            continue;
        }
        let gaps: Vec<f64> = t.series("optimality_gap").into_iter().map(|(_, y)| y).collect();
        let name = format!("linear rate {} {}", t.algorithm, t.schedule);
        if gaps.len() < RATE_WINDOW || gaps[gaps.len() - RATE_WINDOW..].iter().any(|g| *g <= 0.0) {
            out.push(Check {
                name,
                outcome: Outcome::Skip,
                detail: format!("needs {RATE_WINDOW} epochs with a positive optimality gap"),
            });
            continue;
        }
        match fit_linear_rate(&gaps[gaps.len() - RATE_WINDOW..]) {
            Ok(fit) => out.push(check(
                &name,
                fit.contraction < 1.0,
                format!("contraction {:.3} per epoch, r^2 {:.3}", fit.contraction, fit.r_squared),
            )),
            Err(e) => out.push(check(&name, false, e.to_string())),
        }
    }
    out
}
