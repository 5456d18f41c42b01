use std::fmt::Display;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::Serialize;
use stainforge::raster::is_raster_path;

pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Outcome of a subcommand that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Some items of a batch failed; the rest were processed.
    Partial,
}

impl Status {
    pub fn from_failures(failed: usize) -> Self {
        if failed == 0 {
            Status::Success
        } else {
            Status::Partial
        }
    }
}

/// An error that aborts the subcommand, with the exit code to report.
#[derive(Debug)]
pub struct Fatal {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CmdResult = Result<Status, Fatal>;

pub trait OrExit<T> {
    /// Bad flags, missing inputs, unusable weights or references.
    fn config(self) -> Result<T, Fatal>;
    /// Failure while doing the actual work.
    fn failed(self) -> Result<T, Fatal>;
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn config(self) -> Result<T, Fatal> {
        self.map_err(|e| Fatal { code: EXIT_CONFIG, error: e.into() })
    }

    fn failed(self) -> Result<T, Fatal> {
        self.map_err(|e| Fatal { code: EXIT_PARTIAL, error: e.into() })
    }
}

pub fn config_error(msg: impl Display) -> Fatal {
    Fatal { code: EXIT_CONFIG, error: anyhow!("{msg}") }
}

/// Raster files directly inside `dir`, sorted by file name.
pub fn list_rasters(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && is_raster_path(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// `--json` destination: a file, or stdout for `-` / a bare flag.
pub fn json_to_stdout(dest: &Option<PathBuf>) -> bool {
    matches!(dest, Some(p) if p.as_os_str() == "-")
}

pub fn emit_json<T: Serialize>(dest: &Option<PathBuf>, value: &T) -> anyhow::Result<()> {
    let Some(path) = dest else { return Ok(()) };
    let text = serde_json::to_string_pretty(value)?;
    if path.as_os_str() == "-" {
        println!("{text}");
    } else {
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Resolves a `--lut` / `--no-lut` pair against a per-command default.
pub fn lut_choice(lut: bool, no_lut: bool, default: bool) -> bool {
    if lut {
        true
    } else if no_lut {
        false
    } else {
        default
    }
}

pub fn ensure_dir(path: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
