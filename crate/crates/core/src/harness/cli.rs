use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use super::config::ExperimentConfig;
use super::output::{self, Format};
use super::run::{self, RunRecord, TraceRow};
use crate::{Error, Result};

/// Environment variable read for the default worker count.
pub const THREADS_ENV: &str = "EQTRACE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_ASSERT: i32 = 4;

/// Default relative tolerance of `--assert`.
pub const DEFAULT_TOLERANCE: f64 = 0.02;

#[derive(Debug, Parser)]
#[command(name = "eqtrace", version, about = "Exact traces versus leading asymptotics of equivariant Toeplitz operators")]
pub struct Cli {
    /// Directory for output files; stdout when absent and the config names none.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Overrides the probe seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Relative tolerance used by `--assert`.
    #[arg(long, global = true)]
    pub tolerance: Option<f64>,
    /// Exit with status 4 when a result misses its acceptance threshold.
    #[arg(long, global = true)]
    pub assert: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the config and the model.
    Validate { config: PathBuf },
    /// Isotype dimensions.
    Dim { config: PathBuf },
    /// Exact traces.
    Trace { config: PathBuf },
    /// Leading-order predictions.
    Predict { config: PathBuf },
    /// Full run: components, traces, predictions and fit.
    Compare { config: PathBuf },
    /// Kernel decay, localization and profile probes.
    ProbeKernel { config: PathBuf },
    /// Fixed components and locus integrals.
    Components { config: PathBuf },
}

impl Command {
    fn config(&self) -> &Path {
        match self {
            Command::Validate { config }
            | Command::Dim { config }
            | Command::Trace { config }
            | Command::Predict { config }
            | Command::Compare { config }
            | Command::ProbeKernel { config }
            | Command::Components { config } => config,
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Io(_)
        | Error::InvalidInput(_)
        | Error::DegenerateModel(_)
        | Error::InfiniteStabilizer { .. }
        | Error::NonTransverseComponent { .. }
        | Error::UnresolvedComponent { .. } => EXIT_CONFIG,
        Error::BudgetExceeded { .. } | Error::QuadratureFailure { .. } => EXIT_BUDGET,
        _ => EXIT_FAILURE,
    }
}

struct Sink {
    dir: Option<PathBuf>,
    stem: String,
    format: Format,
}

impl Sink {
    fn emit(&self, name: &str, body: String) -> Result<()> {
        match &self.dir {
            Some(dir) => {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("{}.{name}.{}", self.stem, self.format.extension()));
                std::fs::write(&path, body)?;
                println!("{}", path.display());
            }
            None => print!("{body}"),
        }
        Ok(())
    }
}

fn budget_failure(rows: &[TraceRow]) -> bool {
    rows.iter().any(|r| {
        r.failure
            .as_ref()
            .is_some_and(|f| f.kind == "budget_exceeded" || f.kind == "quadrature_failure")
    })
}

/// Largest `k` with a nonzero prediction must have `| |exact/predicted| - 1 | <= tol`;
/// with no prediction at all, every exact value must be below `tol`.
pub fn run_meets_tolerance(record: &RunRecord, tol: f64) -> bool {
    if record.rows.iter().any(|r| r.failure.is_some()) {
        return false;
    }
    match record.rows.iter().rev().find(|r| r.ratio_modulus.is_some()) {
        Some(r) => (r.ratio_modulus.unwrap() - 1.0).abs() <= tol,
        None => record.rows.iter().all(|r| r.exact.is_some_and(|e| e.norm() <= tol)),
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let cfg = ExperimentConfig::load(cli.command.config())?;
    let sink = Sink {
        dir: cli.out.clone().or_else(|| cfg.outputs.dir.clone()),
        stem: cfg.outputs.stem.clone(),
        format: cli.format,
    };
    let tol = cli.tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let csv = cli.format == Format::Csv;
    match &cli.command {
        Command::Validate { .. } => {
            let report = run::validate(&cfg)?;
            if csv {
                println!("zero_excluded={}", report.zero_excluded);
                println!("ray_meets_image={}", report.ray_meets_image);
                println!("transversality_sampled={:?}", report.transversality_sampled);
            } else {
                print!("{}", output::json(&report)?);
            }
            Ok(EXIT_OK)
        }
        Command::Dim { .. } => {
            let rows = run::dimension_rows(&cfg)?;
            sink.emit("dim", if csv { output::dim_csv(&rows)? } else { output::json(&rows)? })?;
            let budget = rows.iter().any(|r| r.failure.is_some());
            Ok(if budget { EXIT_BUDGET } else { EXIT_OK })
        }
        Command::Trace { .. } => {
            let rows = run::trace_rows(&cfg)?;
            sink.emit("trace", if csv { output::trace_csv(&rows)? } else { output::json(&rows)? })?;
            Ok(if budget_failure(&rows) { EXIT_BUDGET } else { EXIT_OK })
        }
        Command::Predict { .. } => {
            let rows = run::prediction_rows(&cfg)?;
            sink.emit("predict", if csv { output::trace_csv(&rows)? } else { output::json(&rows)? })?;
            Ok(EXIT_OK)
        }
        Command::Components { .. } => {
            let (_, rows) = run::components(&cfg)?;
            sink.emit(
                "components",
                if csv { output::component_csv(&rows)? } else { output::json(&rows)? },
            )?;
            Ok(EXIT_OK)
        }
        Command::Compare { .. } => {
            let record = run::run(&cfg)?;
            if csv {
                sink.emit("rows", output::trace_csv(&record.rows)?)?;
                sink.emit("components", output::component_csv(&record.components)?)?;
                sink.emit("summary", output::summary_csv(&record)?)?;
            } else {
                sink.emit("record", output::json(&record)?)?;
            }
            if cli.assert && !run_meets_tolerance(&record, tol) {
                return Ok(EXIT_ASSERT);
            }
            Ok(if budget_failure(&record.rows) { EXIT_BUDGET } else { EXIT_OK })
        }
        Command::ProbeKernel { .. } => {
            let record = run::run_probes(&cfg, cli.seed)?;
            sink.emit("probe", if csv { output::probe_csv(&record)? } else { output::json(&record)? })?;
            if let Some(f) = record.failures.values().find(|f| f.kind == "budget_exceeded") {
                eprintln!("{}", f.message);
                return Ok(EXIT_BUDGET);
            }
            if cli.assert && !record.passed() {
                return Ok(EXIT_ASSERT);
            }
            Ok(EXIT_OK)
        }
    }
}

fn thread_count(cli: &Cli) -> Result<usize> {
    match cli.threads {
        Some(n) => Ok(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV} is not a thread count: {v:?}"))),
            Err(_) => Ok(0),
        },
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let outcome = thread_count(&cli).and_then(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))
    });
    let result = outcome.and_then(|pool| pool.install(|| execute(&cli)));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_config_is_a_config_error() {
        assert_eq!(main_with_args(["eqtrace", "trace", "/nonexistent/missing.json"]), EXIT_CONFIG);
        assert_eq!(main_with_args(["eqtrace", "frobnicate"]), EXIT_CONFIG);
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::BudgetExceeded { bound: 1.0, cap: 0 }), EXIT_BUDGET);
        assert_eq!(exit_code(&Error::Config(String::new())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::SingularGram(0.0)), EXIT_FAILURE);
    }
}
