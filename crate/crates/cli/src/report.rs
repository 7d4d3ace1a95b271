//! JSON report envelope.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct InputInfo {
    pub source: String,
    /// SHA-256 of the input bytes, or of the canonical JSON of a fixture.
    pub sha256: String,
    pub total: f64,
}

impl InputInfo {
    pub fn new(source: String, bytes: &[u8], total: f64) -> Self {
        let sha256 = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        Self { source, sha256, total }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<InputInfo>,
    pub seed: u64,
    pub options: Value,
    pub result: Value,
    /// Seconds since the Unix epoch; the only field that varies between runs.
    pub timestamp: u64,
}

impl Report {
    pub fn new(command: &'static str, input: Option<InputInfo>, seed: u64, options: Value, result: Value) -> Self {
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            input,
            seed,
            options,
            result,
            timestamp,
        }
    }

    pub fn write(&self, out: Option<&Path>) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| CliError::data(format!("serializing report: {e}")))?;
        text.push('\n');
        match out {
            Some(path) => std::fs::write(path, text)
                .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display()))),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

pub fn to_value<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("library results serialize to JSON")
}
