//! Pipeline driver behind the `occlusym` binary.
//!
//! Each command is a pure function of the run config and its input files.
//! Outputs land under `paths.out_dir`:
//!
//! ```text
//! masks/            gen-masks
//! dataset/train/    gen-dataset
//! dataset/held_out/ gen-dataset
//! train/            train: loss.csv, checkpoint.ocsy
//! samples/          sample
//! eval/             eval: report.json, table.txt
//! report/           report: loss.svg, summary.md
//! ```

pub mod commands;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};

use serde_json::json;

pub use commands::{cmd_eval, cmd_gen_dataset, cmd_gen_masks, cmd_report, cmd_sample, cmd_train, run_command, Command};
pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing inputs: {}", list(.0))]
    MissingInputs(Vec<PathBuf>),
    #[error("invalid input {}: {message}", .path.display())]
    BadInput { path: PathBuf, message: String },
    #[error("output {} failed validation", .0.display())]
    Unvalidated(PathBuf),
    #[error(transparent)]
    Core(#[from] occlusym::Error),
}

fn list(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Config(_) => "config",
            Self::MissingInputs(_) => "missing_inputs",
            Self::BadInput { .. } => "bad_input",
            Self::Unvalidated(_) => "unvalidated_output",
            Self::Core(occlusym::Error::Io(_)) => "io",
            Self::Core(_) => "runtime",
        }
    }

    /// 2 for usage and config problems, 3 for missing or bad inputs, 1 for
    /// everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::MissingInputs(_) | Self::BadInput { .. } => 3,
            _ => 1,
        }
    }

    /// The single-line JSON object written to stderr.
    pub fn to_json(&self) -> serde_json::Value {
        let mut obj = json!({ "kind": self.kind(), "message": self.to_string() });
        if let Self::MissingInputs(paths) = self {
            obj["paths"] = json!(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
        }
        json!({ "error": obj })
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Records every file a command writes. Each write is atomic and is read
/// back and compared before the command reports success.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn emit(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        occlusym::io::write_atomic(path, bytes)?;
        match std::fs::read(path) {
            Ok(back) if back == bytes => {}
            _ => return Err(CliError::Unvalidated(path.to_path_buf())),
        }
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Files written so far, in order.
    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    /// Registers files written by library code, checking they exist.
    pub fn adopt(&mut self, path: &Path) -> CliResult<()> {
        if !path.is_file() {
            return Err(CliError::Unvalidated(path.to_path_buf()));
        }
        self.written.push(path.to_path_buf());
        Ok(())
    }
}

pub(crate) fn require(paths: &[&Path]) -> CliResult<()> {
    let missing: Vec<PathBuf> = paths.iter().filter(|p| !p.exists()).map(|p| p.to_path_buf()).collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::MissingInputs(missing))
    }
}

pub(crate) fn to_json_bytes<T: serde::Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(occlusym::Error::from)?;
    bytes.push(b'\n');
    Ok(bytes)
}
