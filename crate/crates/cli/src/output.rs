//! File plumbing: JSON/CSV artifacts, run manifests, error classes.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use gumbelmark::detectors::DetectorSpec;

/// Error classes and their exit codes: usage 2, data 3, internal 4.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Data(m) => write!(f, "data: {m}"),
            CliError::Internal(m) => write!(f, "internal: {m}"),
        }
    }
}

impl From<gumbelmark::Error> for CliError {
    fn from(e: gumbelmark::Error) -> Self {
        use gumbelmark::Error;
        match e {
            Error::InvalidInput(_) => CliError::Data(e.to_string()),
            Error::UnstableQuantile { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn write_artifact(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, body).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Record of one command run, written as `<artifact>.manifest.json`.
#[derive(Debug)]
pub struct Manifest {
    command: String,
    config: Value,
    seed: u64,
    started: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    extra: Map<String, Value>,
}

impl Manifest {
    pub fn new<A: Serialize>(command: &str, args: &A, seed: u64, started: Instant) -> Self {
        Manifest {
            command: command.to_string(),
            config: serde_json::to_value(args).unwrap_or(Value::Null),
            seed,
            started,
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: Map::new(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn extra(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.to_string(), value);
        self
    }

    pub fn to_json(&self) -> Value {
        let paths = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
        let mut body = json!({
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": paths(&self.inputs),
            "outputs": paths(&self.outputs),
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
        });
        if let Value::Object(map) = &mut body {
            map.extend(self.extra.clone());
        }
        body
    }

    pub fn write_next_to(&self, artifact: &Path) -> Result<(), CliError> {
        let mut name = artifact.as_os_str().to_owned();
        name.push(".manifest.json");
        let body = serde_json::to_string_pretty(&self.to_json()).map_err(|e| CliError::Internal(e.to_string()))?;
        write_artifact(Path::new(&name), &body)
    }
}

/// Cache file stem for a calibration: SHA-256 over the detector JSON and
/// the run parameters.
pub fn cache_key(spec: &DetectorSpec, n: usize, alpha: f64, reps: usize, outer: usize, seed: u64) -> Result<String, CliError> {
    let mut bare = *spec;
    bare.critical_value = None;
    let spec_json = serde_json::to_string(&bare).map_err(|e| CliError::Internal(e.to_string()))?;
    let mut h = Sha256::new();
    h.update(spec_json.as_bytes());
    h.update(format!("|{n}|{alpha:e}|{reps}|{outer}|{seed}").as_bytes());
    Ok(hex::encode(h.finalize()))
}
