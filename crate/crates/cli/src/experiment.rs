use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use rsvrg::data::{gen_karcher, gen_mc, gen_pca, load_ratings, split_ratings, ProblemKind};
use rsvrg::optim::{run, Observer, OptimizerConfig, StopReason, TraceRecord};
use rsvrg::{GrassmannPoint, Problem};

use crate::config::{Cell, ExperimentConfig, Source};
use crate::error::{io_error, CliError, Result};

pub const TRACE_HEADER: &str = "epoch,grad_evals_over_N,train_loss,test_loss,optimality_gap,grad_norm,wall_time";
pub const SUMMARY_HEADER: &str =
    "algorithm,schedule,status,epochs,grad_evals_over_N,train_loss,test_loss,optimality_gap,grad_norm,best_tuned";
pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
/// Gradient-equivalent weight of one full cost evaluation in the x-axis.
pub const COST_EVAL_WEIGHT: f64 = 0.5;

/// Decorrelates the initial point from the optimizer's index stream.
const INIT_STREAM: u64 = 0x5eed_0f_1417;

/// The problem instance of an experiment plus provenance bytes.
pub struct Instance {
    pub problem: Box<dyn Problem>,
    pub kind: ProblemKind,
    /// Raw dataset bytes hashed into the manifest (empty for synthetic data).
    pub input_bytes: Vec<u8>,
}

pub fn build_instance(config: &ExperimentConfig) -> Result<Instance> {
    match &config.source {
        Source::Synthetic(spec) => {
            let problem: Box<dyn Problem> = match spec.kind {
                ProblemKind::Pca => Box::new(gen_pca(spec)?),
                ProblemKind::Karcher => Box::new(gen_karcher(spec)?),
                ProblemKind::Mc => {
                    let mut mc = gen_mc(spec)?;
                    if config.ridge != mc.problem.ridge() {
                        mc.problem = rsvrg::problems::McProblem::new(
                            spec.d,
                            spec.r,
                            mc.problem.train_columns().to_vec(),
                            mc.problem.test_columns().to_vec(),
                            config.ridge,
                        )?;
                    }
                    Box::new(mc.problem)
                }
            };
            Ok(Instance {
                problem,
                kind: spec.kind,
                input_bytes: Vec::new(),
            })
        }
        Source::Ratings {
            path,
            format,
            rank,
            holdout,
            split_seed,
        } => {
            let bytes = fs::read(path).map_err(io_error(path))?;
            let split = split_ratings(&load_ratings(path, *format)?, *holdout, *split_seed)?;
            if split.dropped_users > 0 {
                warn!("dropped {} users with at most {holdout} ratings", split.dropped_users);
            }
            Ok(Instance {
                problem: Box::new(split.dataset.to_problem(*rank, config.ridge)?),
                kind: ProblemKind::Mc,
                input_bytes: bytes,
            })
        }
    }
}

/// Random starting subspace shared by every cell of an experiment.
pub fn initial_point(problem: &dyn Problem, seed: u64) -> Result<GrassmannPoint> {
    let (d, r) = problem.dims();
    Ok(GrassmannPoint::random(d, r, &mut ChaCha8Rng::seed_from_u64(seed ^ INIT_STREAM))?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellStatus {
    Completed(StopReason),
    Failed(String),
}

impl CellStatus {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Completed(StopReason::GradTol) => "grad_tol",
            Self::Completed(StopReason::MaxEpochs) => "max_epochs",
            Self::Completed(StopReason::PrecisionLimit) => "precision_limit",
            Self::Failed(_) => "failed",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub cell: Cell,
    /// Every epoch recorded before the run ended, including failed runs.
    pub records: Vec<TraceRecord>,
    pub status: CellStatus,
}

#[derive(Default)]
struct Collector(Vec<TraceRecord>);

impl Observer for Collector {
    fn epoch_end(&mut self, record: &TraceRecord, _point: &GrassmannPoint) {
        self.0.push(record.clone());
    }
}

pub fn run_cell(problem: &dyn Problem, cell: &Cell, template: &OptimizerConfig, u0: &GrassmannPoint) -> CellOutcome {
    let config = OptimizerConfig {
        variant: cell.variant,
        ..template.clone()
    };
    // steepest descent ignores the schedule argument
    let schedule = cell.schedule.unwrap_or(rsvrg::optim::Schedule::Fixed { eta0: 0.0 });
    let mut collector = Collector::default();
    let status = match run(problem, &config, &schedule, u0, &mut collector) {
        Ok(result) => CellStatus::Completed(result.stop),
        Err(e) => {
            warn!("{} {}: {e}", cell.variant, cell.schedule_label());
            CellStatus::Failed(e.to_string())
        }
    };
    CellOutcome {
        cell: cell.clone(),
        records: collector.0,
        status,
    }
}

/// Runs every cell on a pool of `workers` threads; outcomes keep grid order.
pub fn run_cells(
    problem: &dyn Problem,
    cells: &[Cell],
    template: &OptimizerConfig,
    u0: &GrassmannPoint,
    workers: usize,
) -> Result<Vec<CellOutcome>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(|| cells.par_iter().map(|c| run_cell(problem, c, template, u0)).collect()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

pub fn render_trace(records: &[TraceRecord], wall_time: bool) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:e},{},{},{:e},{}",
            r.epoch,
            r.grad_evals_over_n,
            r.train_loss,
            opt(r.test_loss),
            opt(r.optimality_gap),
            r.full_grad_norm,
            if wall_time { format!("{:.6}", r.wall_time) } else { String::new() },
        );
    }
    out
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub schedule: String,
    pub status: String,
    pub epochs: usize,
    pub grad_evals_over_n: f64,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub optimality_gap: Option<f64>,
    pub grad_norm: f64,
}

impl SummaryRow {
    pub fn from_outcome(o: &CellOutcome) -> Self {
        let last = o.records.last();
        Self {
            algorithm: o.cell.variant.to_string(),
            schedule: o.cell.schedule_label(),
            status: o.status.label().to_string(),
            epochs: last.map_or(0, |r| r.epoch),
            grad_evals_over_n: last.map_or(0.0, |r| r.grad_evals_over_n),
            train_loss: last.map_or(f64::NAN, |r| r.train_loss),
            test_loss: last.and_then(|r| r.test_loss),
            optimality_gap: last.and_then(|r| r.optimality_gap),
            grad_norm: last.map_or(f64::NAN, |r| r.full_grad_norm),
        }
    }
}

/// Index of the best-tuned row per algorithm: the lowest final train loss
/// among non-failed rows, earliest row on ties.
pub fn select_best(rows: &[SummaryRow]) -> BTreeMap<String, usize> {
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        if row.status == "failed" || !row.train_loss.is_finite() {
            continue;
        }
        let better = best.get(&row.algorithm).is_none_or(|&j| row.train_loss < rows[j].train_loss);
        if better {
            best.insert(row.algorithm.clone(), i);
        }
    }
    best
}

pub fn render_summary(rows: &[SummaryRow]) -> String {
    let best = select_best(rows);
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:e},{},{},{:e},{}",
            r.algorithm,
            r.schedule,
            r.status,
            r.epochs,
            r.grad_evals_over_n,
            r.train_loss,
            opt(r.test_loss),
            opt(r.optimality_gap),
            r.grad_norm,
            best.get(&r.algorithm) == Some(&i),
        );
    }
    out
}

pub fn input_hash(config_text: &str, input_bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(config_text.as_bytes());
    h.update(input_bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn render_manifest(config: &ExperimentConfig, hash: &str, outcomes: &[CellOutcome]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "tool = rsvrg-cli {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(out, "config = {CONFIG_FILE}");
    let _ = writeln!(out, "input_sha256 = {hash}");
    let _ = writeln!(out, "seed = {}", config.seed());
    let _ = writeln!(out, "data_seed = {}", config.data_seed());
    let _ = writeln!(out, "rsd_cost_eval_weight = {COST_EVAL_WEIGHT}");
    let _ = writeln!(out, "stop_rule = epoch full-gradient norm <= grad_tol");
    for o in outcomes {
        let _ = write!(out, "cell = {} {} {}", o.cell.variant, o.cell.schedule_label(), o.status.label());
        if let CellStatus::Failed(msg) = &o.status {
            let _ = write!(out, " {}", msg.replace('\n', " "));
        }
        out.push('\n');
    }
    out
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(io_error(path))
}

/// What [`run_experiment`] produced.
#[derive(Debug)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub outcomes: Vec<CellOutcome>,
    pub summary: Vec<SummaryRow>,
}

/// Runs the whole grid and writes traces, `summary.csv`, the manifest and
/// the canonical config into `out_dir`. Failed cells keep their partial
/// traces and are excluded from best-tuned selection; the call fails with
/// [`CliError::AllCellsFailed`] only when no cell completed.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path, workers: usize) -> Result<ExperimentReport> {
    let cells = config.cells()?;
    let instance = build_instance(config)?;
    let problem = instance.problem.as_ref();
    config
        .optimizer
        .validate(problem.n_samples())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let u0 = initial_point(problem, config.seed())?;
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    info!(
        "{} cells on {} with N = {}, writing to {}",
        cells.len(),
        instance.kind,
        problem.n_samples(),
        out_dir.display()
    );
    let outcomes = run_cells(problem, &cells, &config.optimizer, &u0, workers)?;

    let config_text = config.render();
    write(out_dir, CONFIG_FILE, &config_text)?;
    for o in &outcomes {
        write(out_dir, &o.cell.trace_file_name(), &render_trace(&o.records, config.record_wall_time))?;
    }
    let summary: Vec<SummaryRow> = outcomes.iter().map(SummaryRow::from_outcome).collect();
    write(out_dir, SUMMARY_FILE, &render_summary(&summary))?;
    let hash = input_hash(&config_text, &instance.input_bytes);
    write(out_dir, MANIFEST_FILE, &render_manifest(config, &hash, &outcomes))?;

    if outcomes.iter().all(|o| matches!(o.status, CellStatus::Failed(_))) {
        return Err(CliError::AllCellsFailed(outcomes.len()));
    }
    Ok(ExperimentReport {
        dir: out_dir.to_path_buf(),
        outcomes,
        summary,
    })
}
