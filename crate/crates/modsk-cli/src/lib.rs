//! Library surface of the modsk CLI, kept separate from the binary so
//! tests can run commands in-process and compare outputs byte for byte.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

/// Sidecar path for an output CSV: same directory, same basename,
/// `.meta.txt` extension.
pub fn sidecar_path(out: &Path) -> PathBuf {
    out.with_extension("meta.txt")
}

/// Runs a command and writes the CSV plus its sidecar.
pub fn run_to_files(
    cfg: &config::ExperimentConfig,
    out: &Path,
) -> config::Result<commands::CommandOutput> {
    let output = commands::run_command(cfg)?;
    std::fs::write(out, &output.csv)?;
    std::fs::write(sidecar_path(out), &output.sidecar)?;
    Ok(output)
}
