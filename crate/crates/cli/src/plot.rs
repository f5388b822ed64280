use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rsvrg::optim::Variant;

use crate::error::{io_error, CliError, Result};
use crate::experiment::TRACE_HEADER;

/// Metrics exported by [`emit_plot_data`], by trace column.
pub const METRICS: &[&str] = &["train_loss", "test_loss", "optimality_gap", "grad_norm"];

/// A parsed `trace_<algorithm>_<schedule>.csv`. Blank cells are `None`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub algorithm: String,
    pub schedule: String,
    pub path: PathBuf,
    /// Column name → values, one per epoch.
    pub columns: Vec<(String, Vec<Option<f64>>)>,
}

impl Trace {
    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(x, y)` pairs where `y` is present.
    pub fn series(&self, metric: &str) -> Vec<(f64, f64)> {
        let (Some(xs), Some(ys)) = (self.column("grad_evals_over_N"), self.column(metric)) else {
            return Vec::new();
        };
        xs.iter()
            .zip(ys)
            .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
            .collect()
    }
}

fn artifact_error(path: &Path, message: impl Into<String>) -> CliError {
    CliError::Artifact {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Splits `trace_<algorithm>_<schedule>.csv`; algorithm names may contain
/// underscores, so the longest known name wins.
fn split_name(path: &Path) -> Option<(String, String)> {
    let stem = path.file_name()?.to_str()?.strip_prefix("trace_")?.strip_suffix(".csv")?;
    let mut names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
    names.sort_by_key(|n| std::cmp::Reverse(n.len()));
    names.into_iter().find_map(|name| {
        let schedule = stem.strip_prefix(name)?.strip_prefix('_')?;
        Some((name.to_string(), schedule.to_string()))
    })
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let (algorithm, schedule) =
        split_name(path).ok_or_else(|| artifact_error(path, "name is not trace_<algorithm>_<schedule>.csv"))?;
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| artifact_error(path, "empty file"))?;
    if header != TRACE_HEADER {
        return Err(artifact_error(path, format!("unexpected header `{header}`")));
    }
    let names: Vec<&str> = header.split(',').collect();
    let mut columns: Vec<(String, Vec<Option<f64>>)> = names.iter().map(|n| (n.to_string(), Vec::new())).collect();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(artifact_error(path, format!("line {}: expected {} fields", i + 2, names.len())));
        }
        for (field, (_, values)) in fields.iter().zip(columns.iter_mut()) {
            let value = if field.is_empty() {
                None
            } else {
                Some(
                    field
                        .parse::<f64>()
                        .map_err(|e| artifact_error(path, format!("line {}: {e}", i + 2)))?,
                )
            };
            values.push(value);
        }
    }
    Ok(Trace {
        algorithm,
        schedule,
        path: path.to_path_buf(),
        columns,
    })
}

/// All traces of an artifact directory in file-name order.
pub fn read_traces(dir: &Path) -> Result<Vec<Trace>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_error(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("trace_") && n.ends_with(".csv"))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| read_trace(p)).collect()
}

/// Checks that `x` is strictly increasing along the trace.
pub fn check_increasing(trace: &Trace) -> Result<()> {
    let xs = trace.series("train_loss");
    match xs.windows(2).position(|w| w[1].0 <= w[0].0) {
        Some(i) => Err(artifact_error(
            &trace.path,
            format!("grad_evals_over_N not increasing at epoch {}", i + 1),
        )),
        None => Ok(()),
    }
}

/// Writes `plot_<metric>.csv` with columns `algorithm,schedule,x,y` for each
/// metric present in some trace; returns the written paths.
pub fn emit_plot_data(dir: &Path) -> Result<Vec<PathBuf>> {
    let traces = read_traces(dir)?;
    if traces.is_empty() {
        return Err(artifact_error(dir, "no trace files"));
    }
    for t in &traces {
        check_increasing(t)?;
    }
    let mut written = Vec::new();
    for metric in METRICS {
        let mut out = String::from("algorithm,schedule,x,y\n");
        let mut any = false;
        for t in &traces {
            for (x, y) in t.series(metric) {
                any = true;
                let _ = writeln!(out, "{},{},{x},{y:e}", t.algorithm, t.schedule);
            }
        }
        if any {
            let path = dir.join(format!("plot_{metric}.csv"));
            fs::write(&path, out).map_err(io_error(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_split_on_the_longest_algorithm() {
        let p = Path::new("trace_rsvrg_plus_fixed-eta0_0.01.csv");
        assert_eq!(split_name(p), Some(("rsvrg_plus".into(), "fixed-eta0_0.01".into())));
        let p = Path::new("trace_rsvrg_fixed-eta0_0.01.csv");
        assert_eq!(split_name(p), Some(("rsvrg".into(), "fixed-eta0_0.01".into())));
        assert_eq!(split_name(Path::new("trace_adam_x.csv")), None);
    }

    #[test]
    fn two_series_one_metric() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{TRACE_HEADER}\n0,0,1e0,,,1e0,\n1,2,5e-1,,,1e-1,\n");
        fs::write(dir.path().join("trace_rsvrg_fixed-eta0_0.1.csv"), &body).unwrap();
        fs::write(dir.path().join("trace_rsd_armijo.csv"), &body).unwrap();
        let written = emit_plot_data(dir.path()).unwrap();
        let names: Vec<_> = written.iter().map(|p| p.file_name().unwrap().to_str().unwrap()).collect();
        assert_eq!(names, ["plot_train_loss.csv", "plot_grad_norm.csv"]);
        let text = fs::read_to_string(&written[0]).unwrap();
        assert_eq!(
            text,
            "algorithm,schedule,x,y\nrsd,armijo,0,1e0\nrsd,armijo,2,5e-1\n\
             rsvrg,fixed-eta0_0.1,0,1e0\nrsvrg,fixed-eta0_0.1,2,5e-1\n"
        );
    }

    #[test]
    fn non_increasing_x_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{TRACE_HEADER}\n0,1,1e0,,,1e0,\n1,1,5e-1,,,1e-1,\n");
        fs::write(dir.path().join("trace_rsd_armijo.csv"), body).unwrap();
        assert!(matches!(emit_plot_data(dir.path()), Err(CliError::Artifact { .. })));
        let empty = tempfile::tempdir().unwrap();
        assert!(emit_plot_data(empty.path()).is_err());
    }
}
