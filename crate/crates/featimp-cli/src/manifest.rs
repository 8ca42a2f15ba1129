//! Run manifests: every command writes one, echoing the fully-resolved
//! configuration and the produced artifacts. The timestamp lives in its own
//! field so byte comparisons of reproducible runs can exclude it.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub schema_version: u32,
    pub command: String,
    pub timestamp_unix: u64,
    pub seed: u64,
    pub inputs: Vec<(String, String)>,
    pub config: C,
    pub outputs: Vec<String>,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &str, seed: u64, config: C) -> Self {
        Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            seed,
            inputs: Vec::new(),
            config,
            outputs: Vec::new(),
        }
    }

    pub fn input(mut self, name: &str, path: impl AsRef<Path>) -> Self {
        self.inputs
            .push((name.into(), path.as_ref().display().to_string()));
        self
    }

    pub fn output(mut self, name: &str) -> Self {
        self.outputs.push(name.into());
        self
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::internal(format!("manifest serialization: {e}")))?;
        std::fs::write(&path, json + "\n")
            .map_err(|e| CliError::user(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}
