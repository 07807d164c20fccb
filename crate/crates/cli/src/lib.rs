//! Experiment harness: configuration, suites and result files.

pub mod config;
pub mod describe;
pub mod suites;

use std::collections::BTreeMap;
use std::path::Path;

use nonconv_core::asclt::Status;
use serde::Serialize;
use serde_json::json;

pub use config::{ExperimentConfig, Suite};
pub use suites::SuiteOutcome;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<nonconv_core::Error> for CliError {
    fn from(e: nonconv_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::UnknownEntity(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

/// Everything a run produces, keyed by file name.
#[derive(Debug)]
pub struct RunOutput {
    pub status: Status,
    pub outcomes: Vec<SuiteOutcome>,
    pub files: BTreeMap<String, Vec<u8>>,
}

impl RunOutput {
    /// 0 for pass or inconclusive, 1 when a suite failed.
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Fail => 1,
            Status::Pass | Status::Inconclusive => 0,
        }
    }
}

/// Combines verdicts: any failure fails, then any inconclusive.
pub fn worst(statuses: impl IntoIterator<Item = Status>) -> Status {
    statuses.into_iter().fold(Status::Pass, |acc, s| match (acc, s) {
        (Status::Fail, _) | (_, Status::Fail) => Status::Fail,
        (Status::Inconclusive, _) | (_, Status::Inconclusive) => Status::Inconclusive,
        _ => Status::Pass,
    })
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("result serializes");
    bytes.push(b'\n');
    bytes
}

/// Runs the selected suites on a pool of `threads` workers. Replica results
/// are reduced in replica order, so the output does not depend on `threads`.
pub fn run(cfg: &ExperimentConfig, threads: usize) -> Result<RunOutput, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let hash = cfg.hash();
    let mut selected = cfg.suites.clone();
    selected.sort();
    selected.dedup();

    let ctx = suites::Context::new(cfg)?;
    let mut outcomes = Vec::new();
    let mut files = BTreeMap::new();
    for suite in selected {
        let outcome = pool.install(|| suites::run_suite(suite, &ctx))?;
        eprintln!("suite {suite}: {}", status_name(outcome.status));
        let envelope = json!({
            "suite": suite.name(),
            "config_hash": hash,
            "version": VERSION,
            "seed": cfg.seed,
            "status": outcome.status,
            "warnings": outcome.warnings,
            "constants": outcome.constants,
            "result": outcome.result,
        });
        files.insert(format!("{}.json", suite.name()), pretty(&envelope));
        for (name, bytes) in &outcome.files {
            files.insert(name.clone(), bytes.clone());
        }
        outcomes.push(outcome);
    }
    let status = worst(outcomes.iter().map(|o| o.status));
    let summary = json!({
        "config_hash": hash,
        "version": VERSION,
        "seed": cfg.seed,
        "status": status,
        "suites": outcomes.iter().map(|o| json!({
            "suite": o.suite.name(),
            "status": o.status,
            "warnings": o.warnings,
        })).collect::<Vec<_>>(),
    });
    files.insert("summary.json".into(), pretty(&summary));
    Ok(RunOutput { status, outcomes, files })
}

pub fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pass => "pass",
        Status::Fail => "fail",
        Status::Inconclusive => "inconclusive",
    }
}

/// Writes every produced file under `dir`.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for (name, bytes) in &out.files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

/// One line per suite.
pub fn list_suites() -> String {
    Suite::ALL.iter().map(|s| format!("{:<11}{}\n", s.name(), s.summary())).collect()
}

/// Loads `config`, runs it and writes the results; returns the exit code.
pub fn run_config_file(config: &Path, threads: usize, out: Option<&Path>) -> i32 {
    let result = ExperimentConfig::load(config).and_then(|cfg| {
        let output = run(&cfg, threads)?;
        let dir = out
            .map(Path::to_path_buf)
            .or_else(|| cfg.output_dir.as_ref().map(Into::into))
            .unwrap_or_else(|| "nonconv-out".into());
        write_outputs(&output, &dir)?;
        Ok(output.exit_code())
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
