//! Whole-file reads and writes with the path attached to every error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, Result};

pub fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Renders into memory first so a failed render never leaves a partial file.
pub fn write_with<E: std::fmt::Display>(
    path: &Path,
    render: impl FnOnce(&mut Vec<u8>) -> std::result::Result<(), E>,
) -> Result<()> {
    let mut buf = Vec::new();
    render(&mut buf).map_err(|e| CliError::invalid(path, e))?;
    write(path, &buf)
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// `out.csv` → `out.csv.config.json`.
pub fn config_path_for_file(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".config.json");
    output.with_file_name(name)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::invalid(path, e))?;
    text.push('\n');
    write(path, text.as_bytes())
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
