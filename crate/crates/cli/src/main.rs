use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rsvrg_cli::{emit_plot_data, run_experiment, verify_artifacts, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "rsvrg", version, about = "Grassmann R-SVRG experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every grid cell of an experiment file.
    Run {
        config: PathBuf,
        /// Artifact directory (overrides `output` in the file).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent grid cells.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Overrides `seed` (and `data_seed` unless the file pins it).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write plot_<metric>.csv tables from the traces in an artifact directory.
    Plotdata { dir: PathBuf },
    /// Re-check an artifact directory against the numerical oracles.
    Verify { dir: PathBuf },
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
            seed,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = seed {
                cfg.set_seed(seed);
            }
            let dir = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| CliError::Config("no output directory: pass --out or set `output`".into()))?;
            let report = run_experiment(&cfg, &dir, workers)?;
            let failed = report.summary.iter().filter(|r| r.status == "failed").count();
            println!(
                "{} cells ({failed} failed), artifacts in {}",
                report.summary.len(),
                report.dir.display()
            );
            Ok(true)
        }
        Command::Plotdata { dir } => {
            for path in emit_plot_data(&dir)? {
                println!("{}", path.display());
            }
            Ok(true)
        }
        Command::Verify { dir } => {
            let report = verify_artifacts(&dir)?;
            for c in &report.checks {
                println!("{c}");
            }
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
