//! Versioned JSON envelopes for models, synopses and reports, and run-config
//! sidecars for CSV outputs.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use crate::io::{file_err, IoError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    GanModel,
    Synopsis,
    QualityReport,
    QueryResult,
    ErrorReport,
    RunConfig,
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::GanModel => "gan_model",
            Kind::Synopsis => "synopsis",
            Kind::QualityReport => "quality_report",
            Kind::QueryResult => "query_result",
            Kind::ErrorReport => "error_report",
            Kind::RunConfig => "run_config",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format_version: u32,
    pub kind: String,
    pub run_config: Json,
    pub payload: T,
}

pub fn to_json<T: Serialize>(kind: Kind, run_config: &Json, payload: &T) -> Result<String, IoError> {
    let env = Envelope { format_version: FORMAT_VERSION, kind: kind.as_str().to_string(), run_config: run_config.clone(), payload };
    let mut s = serde_json::to_string_pretty(&env).map_err(|e| IoError::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str, kind: Kind, path: &Path) -> Result<Envelope<T>, IoError> {
    let json_err = |message: String| IoError::Json { path: path.to_path_buf(), message };
    let head: Envelope<serde::de::IgnoredAny> = serde_json::from_str(text).map_err(|e| json_err(e.to_string()))?;
    if head.format_version != FORMAT_VERSION {
        return Err(json_err(format!("unsupported format_version {}", head.format_version)));
    }
    if head.kind != kind.as_str() {
        return Err(json_err(format!("expected a {} file, found {}", kind.as_str(), head.kind)));
    }
    serde_json::from_str(text).map_err(|e| json_err(e.to_string()))
}

pub fn save<T: Serialize>(path: &Path, kind: Kind, run_config: &Json, payload: &T) -> Result<(), IoError> {
    fs::write(path, to_json(kind, run_config, payload)?).map_err(file_err(path))
}

pub fn load<T: DeserializeOwned>(path: &Path, kind: Kind) -> Result<Envelope<T>, IoError> {
    let text = fs::read_to_string(path).map_err(file_err(path))?;
    from_json(&text, kind, path)
}

/// `<file>.run.json`
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".run.json");
    path.with_file_name(name)
}

/// Writes the run config of a CSV output next to it. The payload is the
/// schema config of the CSV when there is one.
pub fn save_sidecar<T: Serialize>(csv_path: &Path, run_config: &Json, payload: &T) -> Result<(), IoError> {
    save(&sidecar_path(csv_path), Kind::RunConfig, run_config, payload)
}
