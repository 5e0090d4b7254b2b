//! Experiment runner behind the `plle` binary.
//!
//! Exit status: 0 success, 1 invalid configuration or IO failure,
//! 2 an expected outcome did not occur, 3 numerical failure.

pub mod config;
pub mod emit;
pub mod run;

use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use thiserror::Error;

pub use config::{parse_config, parse_config_str, CounterexampleKind, CounterexampleSpec, ScenarioConfig};
pub use emit::{emit_report, Format, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error("expectation failed: {}", .0.join(", "))]
    Expectation(Vec<String>),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Expectation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    CorrectLink,
    Mle,
    Counterexample,
    Bandit,
}

/// Written as `manifest.json` next to every run's data files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub subcommand: Subcommand,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    pub exit_code: u8,
    pub error: Option<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs `cmd` into `out`, always leaving a manifest behind once `out`
/// exists. A counterexample run needs `cfg.counterexample` set.
pub fn execute(cmd: Subcommand, cfg: &ScenarioConfig, out: &Path) -> Result<RunManifest, CliError> {
    std::fs::create_dir_all(out)?;
    let started_at = now();
    let result = match cmd {
        Subcommand::CorrectLink => run::run_correct_link(cfg, out),
        Subcommand::Mle => run::run_mle(cfg, out),
        Subcommand::Counterexample => match &cfg.counterexample {
            Some(spec) => run::run_counterexample(spec, cfg, out),
            None => Err(CliError::Validation(vec!["counterexample: required by `counterexample`".into()])),
        },
        Subcommand::Bandit => run::run_bandit(cfg, out),
    };
    let outputs = match &result {
        Ok(files) => files.clone(),
        Err(_) => {
            let mut present: Vec<String> = std::fs::read_dir(out)?
                .filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .filter(|n| n != MANIFEST_FILE)
                .collect();
            present.sort();
            present
        }
    };
    let manifest = RunManifest {
        subcommand: cmd,
        config_hash: cfg.config_hash.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        started_at,
        finished_at: now(),
        outputs,
        exit_code: result.as_ref().err().map_or(0, CliError::exit_code),
        error: result.as_ref().err().map(ToString::to_string),
    };
    emit::write_json(&manifest, &out.join(MANIFEST_FILE))?;
    result.map(|_| manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_written_on_success_and_failure() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config_str(
            "[link]\nname = \"comp_exponential\"\n[bounds]\nu = 2.0\nl = 0.0\nd = 2\n[grid]\npoints = 11\n",
            None,
        )
        .unwrap();
        let m = execute(Subcommand::CorrectLink, &cfg, dir.path()).unwrap();
        assert_eq!(m.outputs, vec!["correct_link.csv", "knots.json"]);
        assert_eq!(m.exit_code, 0);
        let csv = std::fs::read_to_string(dir.path().join("correct_link.csv")).unwrap();
        assert_eq!(csv.lines().count(), 12);

        let other = tempfile::tempdir().unwrap();
        let err = execute(Subcommand::Mle, &cfg, other.path()).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let text = std::fs::read_to_string(other.path().join(MANIFEST_FILE)).unwrap();
        assert!(text.contains("\"exit_code\": 1"));
    }
}
