//! Configuration-driven experiment runner.
//!
//! [`run`] executes one [`ExperimentConfig`] and writes its CSV tables and
//! a JSON summary of pass/fail assertions; [`verify_all`] runs a whole
//! [`SuiteConfig`] and aggregates the results.

pub mod config;
pub mod experiments;
pub mod report;
pub mod suite;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{ExperimentConfig, ExperimentKind};
pub use report::{Assertion, Outcome, Summary};
pub use suite::{default_suite, verify_all, SuiteConfig, SuiteReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ASSERTION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}` (line {line}, column {column}): {message}")]
    Parse { path: String, line: usize, column: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{experiment} failed with params {params}: {source}")]
    Solver {
        experiment: String,
        params: String,
        #[source]
        source: dtnlab_core::Error,
    },

    #[error(transparent)]
    Core(#[from] dtnlab_core::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub fn exit_code_for(err: &CliError) -> i32 {
    match err {
        CliError::Solver { .. } => EXIT_SOLVER,
        CliError::Core(e) if e.is_solver_failure() => EXIT_SOLVER,
        _ => EXIT_CONFIG,
    }
}

/// Result of [`run`]: the summary and where everything went.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: Summary,
    pub summary_path: PathBuf,
    pub tables: Vec<(String, PathBuf)>,
}

impl RunOutput {
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed {
            EXIT_OK
        } else {
            EXIT_ASSERTION
        }
    }
}

/// Run `cfg` on a pool of `threads` workers (all cores if `None`) and write
/// its outputs to `cfg.output`, or `out/` if unset.
pub fn run(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunOutput, CliError> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    run_in(cfg, &dir, threads)
}

pub fn run_in(cfg: &ExperimentConfig, dir: &Path, threads: Option<usize>) -> Result<RunOutput, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Config(format!("cannot build a pool of {threads:?} threads: {e}")))?;
    let outcome = pool.install(|| experiments::execute(cfg)).map_err(|e| match e {
        CliError::Core(source) if source.is_solver_failure() => {
            CliError::Solver { experiment: cfg.experiment.name().into(), params: cfg.params.to_string(), source }
        }
        other => other,
    })?;
    write_outcome(cfg, &outcome, dir)
}

fn write_outcome(cfg: &ExperimentConfig, outcome: &Outcome, dir: &Path) -> Result<RunOutput, CliError> {
    std::fs::create_dir_all(dir)?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{}-{stamp}", cfg.experiment.name());
    // Two runs within the same second get distinct names.
    let stem = (0..)
        .map(|k| if k == 0 { base.clone() } else { format!("{base}-{k}") })
        .find(|s| !dir.join(format!("{s}.summary.json")).exists())
        .expect("some stem is free");
    let mut tables = Vec::new();
    for (name, table) in &outcome.tables {
        let path = dir.join(format!("{stem}.{name}.csv"));
        table.save_csv(&path)?;
        tables.push((name.clone(), path));
    }
    let summary = Summary {
        experiment: cfg.experiment.name().into(),
        seed: cfg.seed,
        passed: outcome.passed(),
        assertions: outcome.assertions.clone(),
        tables: tables.iter().map(|(_, p)| p.file_name().expect("file").to_string_lossy().into_owned()).collect(),
        details: serde_json::json!({ "config": cfg, "results": outcome.details }),
    };
    let summary_path = dir.join(format!("{stem}.summary.json"));
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok(RunOutput { summary, summary_path, tables })
}
