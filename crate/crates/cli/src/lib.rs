//! Batch commands around `puffnet-core`: training, stylization, evaluation,
//! the attention-cost bench and the ablation experiments.
//!
//! Each command echoes its resolved configuration as `key=value` lines
//! before doing any work, and every report file carries the same block.

pub mod args;
pub mod commands;
pub mod report;
mod setup;

use std::io::Write;
use std::path::{Path, PathBuf};

use puffnet_core::PuffError;
use thiserror::Error;

pub use args::{Cli, Command};
pub use setup::{prepare_pair, resolve_seed, SEED_ENV};

/// Exit status for bad flags, manifests or configurations.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] PuffError),
    #[error("{0}")]
    Failed(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Core(PuffError::Invalid { op, .. }) if op.ends_with("config") => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Runs one parsed command, echoing progress to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => commands::train::run(a, out).map(|_| ()),
        Command::Stylize(a) => commands::stylize::run(a, out),
        Command::Eval(a) => commands::eval::run(a, out).map(|_| ()),
        Command::Bench(a) => commands::bench::run(a, out).map(|_| ()),
        Command::AblateInit(a) => commands::ablate::run_init(a, out).map(|_| ()),
        Command::AblatePe(a) => commands::ablate::run_pe(a, out).map(|_| ()),
        Command::Rounds(a) => commands::rounds::run(a, out).map(|_| ()),
    }
}

/// Writes the header block to the console.
pub(crate) fn echo(out: &mut dyn Write, header: &[(String, String)]) {
    for (k, v) in header {
        let _ = writeln!(out, "{k}={v}");
    }
    let _ = out.flush();
}

pub(crate) fn kv(key: &str, value: impl ToString) -> (String, String) {
    (key.to_string(), value.to_string())
}
