//! Standard-library companion to `sril-core`: the on-disk dataset and
//! checkpoint formats, declarative task configuration, parallel episode
//! evaluation, report writers and the `sril` command line.

use std::path::Path;

use anyhow::Context;

pub mod checkpoint;
pub mod cli;
pub mod dataset_io;
pub mod eval;
pub mod pipeline;
pub mod report;
pub mod taskcfg;

/// Errors from decoding the text formats of this crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: field {path}: {message}")]
    Malformed { line: usize, path: String, message: String },
    /// `line` is 0 when the problem is not tied to one line.
    #[error("{}", located(*line, message))]
    Invalid { line: usize, message: String },
    #[error("unsupported version: expected {expected}, found {found}")]
    Version { expected: u64, found: String },
    #[error("not a {expected} file (format {found})")]
    Format { expected: &'static str, found: String },
    #[error("truncated input; last complete record: {last_complete}")]
    Truncated { last_complete: String },
}

fn located(line: usize, message: &str) -> String {
    match line {
        0 => message.to_string(),
        _ => format!("line {line}: {message}"),
    }
}

pub(crate) fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub(crate) fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
