use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use mmo_core::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFY: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_DIVERGENCE: u8 = 4;
pub const EXIT_DEGENERATE: u8 = 5;

/// The JSON document every subcommand emits. `timing` is the only part that
/// varies between identical runs.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: &'static str,
    pub exit_code: u8,
    pub config: Value,
    pub results: Value,
    pub artifacts: BTreeMap<&'static str, String>,
    pub timing: Timing,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub seconds: f64,
    pub threads: usize,
}

impl RunReport {
    pub fn write(&self, path: &Path) -> Result<(), Failure> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n")
            .map_err(|e| Failure::new(EXIT_DATA, format!("cannot write report {}: {e}", path.display())))
    }
}

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Failure::new(EXIT_CONFIG, message)
    }

    /// Any error while reading an input file is a data error.
    pub fn data(path: &Path, err: Error) -> Self {
        Failure::new(EXIT_DATA, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Config(_) | Error::UnknownPreset(_) | Error::ScaleGuard { .. } | Error::Domain(_) => EXIT_CONFIG,
            Error::Shape(_) | Error::Format { .. } | Error::Io(_) => EXIT_DATA,
            Error::Divergence { .. } => EXIT_DIVERGENCE,
            Error::DegenerateDenominator(_) | Error::NoValidCandidate => EXIT_DEGENERATE,
        };
        Failure::new(code, err.to_string())
    }
}
