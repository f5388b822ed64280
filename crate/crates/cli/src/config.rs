//! Flat `key = value` experiment files. Lists are written as repeated keys;
//! `#` starts a comment. See `docs/config.md` for the key reference.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rsvrg::data::{ProblemKind, RatingFormat, SyntheticSpec};
use rsvrg::optim::{Averaging, OptimizerConfig, Schedule, Variant};
use rsvrg::problems::DEFAULT_RIDGE;

use crate::error::{io_error, CliError, Result};

const LIST_KEYS: &[&str] = &["algorithm", "schedule", "eta0", "lambda"];
const SCALAR_KEYS: &[&str] = &[
    "problem",
    "n",
    "d",
    "r",
    "condition_number",
    "oversampling",
    "noise_sigma",
    "data_seed",
    "dataset",
    "dataset_format",
    "holdout",
    "ridge",
    "s_threshold",
    "m_s",
    "batch_size",
    "max_epochs",
    "grad_tol",
    "averaging",
    "seed",
    "wall_time",
    "output",
];

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Synthetic(SyntheticSpec),
    /// A rating file split per user into train and test.
    Ratings {
        path: PathBuf,
        format: RatingFormat,
        rank: usize,
        holdout: usize,
        split_seed: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Fixed,
    Decay,
    Hybrid,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fixed => "fixed",
            Self::Decay => "decay",
            Self::Hybrid => "hybrid",
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "decay" => Ok(Self::Decay),
            "hybrid" => Ok(Self::Hybrid),
            _ => Err(format!("unknown schedule `{s}` (expected fixed, decay or hybrid)")),
        }
    }
}

/// One point of the experiment grid. Steepest descent has no schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub variant: Variant,
    pub schedule: Option<Schedule>,
}

impl Cell {
    pub fn schedule_label(&self) -> String {
        self.schedule.map_or_else(|| "armijo".to_string(), |s| s.to_string())
    }

    pub fn trace_file_name(&self) -> String {
        format!("trace_{}_{}.csv", self.variant, self.schedule_label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: Source,
    pub ridge: f64,
    pub algorithms: Vec<Variant>,
    pub schedule_kinds: Vec<ScheduleKind>,
    pub eta0: Vec<f64>,
    pub lambda: Vec<f64>,
    pub s_threshold: usize,
    /// Template for every cell; `variant` is overwritten per cell.
    pub optimizer: OptimizerConfig,
    pub record_wall_time: bool,
    pub output: Option<PathBuf>,
    /// Whether `data_seed` was given explicitly rather than following `seed`.
    data_seed_pinned: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::ConfigLine { line, message, .. } => CliError::ConfigLine {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    /// Parses config text; relative dataset paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let entries = Entries::read(text)?;
        let seed: u64 = entries.scalar("seed")?.unwrap_or(0);
        let data_seed: Option<u64> = entries.scalar("data_seed")?;
        let kind: Option<ProblemKindArg> = entries.scalar("problem")?;
        let source = match entries.raw("dataset") {
            Some(raw) => {
                if let Some(k) = &kind {
                    if k.0 != ProblemKind::Mc {
                        return Err(CliError::Config("a rating dataset defines a matrix completion problem".into()));
                    }
                }
                for key in ["n", "d", "condition_number", "oversampling", "noise_sigma"] {
                    if entries.raw(key).is_some() {
                        return Err(CliError::Config(format!("`{key}` does not apply to a rating dataset")));
                    }
                }
                let path = base_dir.join(raw);
                if !path.is_file() {
                    return Err(CliError::Config(format!("dataset {} does not exist", path.display())));
                }
                let format: RatingFormatArg = entries.required("dataset_format")?;
                Source::Ratings {
                    path,
                    format: format.0,
                    rank: entries.required("r")?,
                    holdout: entries.scalar("holdout")?.unwrap_or(2),
                    split_seed: data_seed.unwrap_or(seed),
                }
            }
            None => {
                let kind = kind
                    .ok_or_else(|| CliError::Config("either `problem` or `dataset` is required".into()))?
                    .0;
                let mut spec = SyntheticSpec::new(
                    kind,
                    entries.required("n")?,
                    entries.required("d")?,
                    entries.required("r")?,
                    data_seed.unwrap_or(seed),
                );
                if let Some(cn) = entries.scalar("condition_number")? {
                    spec.condition_number = cn;
                }
                if let Some(os) = entries.scalar("oversampling")? {
                    spec.oversampling = os;
                }
                if let Some(sigma) = entries.scalar("noise_sigma")? {
                    spec.noise_sigma = sigma;
                }
                Source::Synthetic(spec)
            }
        };
        let defaults = OptimizerConfig::default();
        let averaging: Option<AveragingArg> = entries.scalar("averaging")?;
        let optimizer = OptimizerConfig {
            variant: Variant::Rsvrg,
            m_s: entries.scalar("m_s")?,
            batch_size: entries.scalar("batch_size")?.unwrap_or(defaults.batch_size),
            max_epochs: entries.scalar("max_epochs")?.unwrap_or(defaults.max_epochs),
            grad_tol: entries.scalar("grad_tol")?.unwrap_or(defaults.grad_tol),
            averaging: averaging.map_or(defaults.averaging, |a| a.0),
            seed,
        };
        let algorithms = entries
            .list::<VariantArg>("algorithm")?
            .into_iter()
            .map(|v| v.0)
            .collect::<Vec<_>>();
        let mut schedule_kinds: Vec<ScheduleKind> = entries.list("schedule")?;
        if schedule_kinds.is_empty() {
            schedule_kinds.push(ScheduleKind::Fixed);
        }
        let config = Self {
            source,
            ridge: entries.scalar("ridge")?.unwrap_or(DEFAULT_RIDGE),
            algorithms,
            schedule_kinds,
            eta0: entries.list("eta0")?,
            lambda: entries.list("lambda")?,
            s_threshold: entries.scalar("s_threshold")?.unwrap_or(5),
            optimizer,
            record_wall_time: entries.scalar("wall_time")?.unwrap_or(false),
            output: entries.raw("output").map(PathBuf::from),
            data_seed_pinned: data_seed.is_some(),
        };
        config.cells()?;
        Ok(config)
    }

    /// Replaces the run seed; the data seed follows unless pinned.
    pub fn set_seed(&mut self, seed: u64) {
        self.optimizer.seed = seed;
        if !self.data_seed_pinned {
            match &mut self.source {
                Source::Synthetic(spec) => spec.seed = seed,
                Source::Ratings { split_seed, .. } => *split_seed = seed,
            }
        }
    }

    pub fn seed(&self) -> u64 {
        self.optimizer.seed
    }

    pub fn data_seed(&self) -> u64 {
        match &self.source {
            Source::Synthetic(spec) => spec.seed,
            Source::Ratings { split_seed, .. } => *split_seed,
        }
    }

    /// Algorithms × schedules in file order; steepest descent contributes a
    /// single cell.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        if self.algorithms.is_empty() {
            return Err(CliError::Config("empty grid: no `algorithm` given".into()));
        }
        let mut cells = Vec::new();
        for &variant in &self.algorithms {
            if !variant.uses_schedule() {
                cells.push(Cell {
                    variant,
                    schedule: None,
                });
                continue;
            }
            if self.eta0.is_empty() {
                return Err(CliError::Config(format!("empty grid: `{variant}` needs at least one `eta0`")));
            }
            for &kind in &self.schedule_kinds {
                let lambdas: &[f64] = if kind == ScheduleKind::Fixed { &[0.0] } else { &self.lambda };
                if lambdas.is_empty() {
                    return Err(CliError::Config(format!("empty grid: `{}` needs at least one `lambda`", kind.name())));
                }
                for &eta0 in &self.eta0 {
                    for &lambda in lambdas {
                        let schedule = match kind {
                            ScheduleKind::Fixed => Schedule::fixed(eta0),
                            ScheduleKind::Decay => Schedule::decay(eta0, lambda),
                            ScheduleKind::Hybrid => Schedule::hybrid(eta0, lambda, self.s_threshold),
                        }
                        .map_err(|e| CliError::Config(e.to_string()))?;
                        cells.push(Cell {
                            variant,
                            schedule: Some(schedule),
                        });
                    }
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = cells.iter().find(|c| !seen.insert(c.trace_file_name())) {
            return Err(CliError::Config(format!("grid cell {} appears twice", dup.trace_file_name())));
        }
        Ok(cells)
    }

    /// Canonical text of the resolved configuration. Parsing it yields an
    /// equal config, so it is stored with the artifacts for regeneration.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.source {
            Source::Synthetic(spec) => {
                kv("problem", &spec.kind);
                kv("n", &spec.n);
                kv("d", &spec.d);
                kv("r", &spec.r);
                kv("condition_number", &spec.condition_number);
                kv("oversampling", &spec.oversampling);
                kv("noise_sigma", &spec.noise_sigma);
            }
            Source::Ratings {
                path,
                format,
                rank,
                holdout,
                ..
            } => {
                kv("problem", &ProblemKind::Mc);
                kv("dataset", &path.display());
                kv("dataset_format", format);
                kv("r", rank);
                kv("holdout", holdout);
            }
        }
        kv("data_seed", &self.data_seed());
        kv("ridge", &self.ridge);
        for a in &self.algorithms {
            kv("algorithm", a);
        }
        for s in &self.schedule_kinds {
            kv("schedule", &s.name());
        }
        for e in &self.eta0 {
            kv("eta0", e);
        }
        for l in &self.lambda {
            kv("lambda", l);
        }
        kv("s_threshold", &self.s_threshold);
        if let Some(m_s) = self.optimizer.m_s {
            kv("m_s", &m_s);
        }
        kv("batch_size", &self.optimizer.batch_size);
        kv("max_epochs", &self.optimizer.max_epochs);
        kv("grad_tol", &self.optimizer.grad_tol);
        kv("averaging", &self.optimizer.averaging.name());
        kv("seed", &self.optimizer.seed);
        kv("wall_time", &self.record_wall_time);
        out
    }
}

struct Entries {
    values: BTreeMap<String, Vec<(usize, String)>>,
}

impl Entries {
    fn read(text: &str) -> Result<Self> {
        let mut values: BTreeMap<String, Vec<(usize, String)>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| CliError::ConfigLine {
                path: PathBuf::new(),
                line: line_no,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(format!("`{key}` has no value")));
            }
            let is_list = LIST_KEYS.contains(&key);
            if !is_list && !SCALAR_KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            let slot = values.entry(key.to_string()).or_default();
            if !is_list && !slot.is_empty() {
                return Err(err(format!("`{key}` given twice")));
            }
            slot.push((line_no, value.to_string()));
        }
        Ok(Self { values })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).and_then(|v| v.first()).map(|(_, s)| s.as_str())
    }

    fn parse_one<T: FromStr>(key: &str, line: usize, value: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        value.parse().map_err(|e: T::Err| CliError::ConfigLine {
            path: PathBuf::new(),
            line,
            message: format!("bad value for `{key}`: {e}"),
        })
    }

    fn scalar<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key).and_then(|v| v.first()) {
            Some((line, value)) => Self::parse_one(key, *line, value).map(Some),
            None => Ok(None),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.scalar(key)?
            .ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map_or(&[][..], |v| v.as_slice())
            .iter()
            .map(|(line, value)| Self::parse_one(key, *line, value))
            .collect()
    }
}

// Local wrappers so core parse errors format through `Display`.
macro_rules! arg_wrapper {
    ($name:ident, $inner:ty) => {
        struct $name($inner);

        impl FromStr for $name {
            type Err = rsvrg::Error;

            fn from_str(s: &str) -> Result<Self, rsvrg::Error> {
                s.parse().map(Self)
            }
        }
    };
}

arg_wrapper!(ProblemKindArg, ProblemKind);
arg_wrapper!(RatingFormatArg, RatingFormat);
arg_wrapper!(VariantArg, Variant);
arg_wrapper!(AveragingArg, Averaging);
