//! Output files and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use timebin_qkd::experiments::ScenarioConfig;

use crate::error::CliError;

pub const MANIFEST_SCHEMA: &str = "tbqkd.manifest/1";

/// Collects files written into the output directory.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))?;
        Ok(Self {
            dir: dir.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(CliError::io(format!("writing {}", path.display())))?;
        self.written.push(name.to_owned());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Internal(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in rows {
            w.serialize(row)
                .map_err(|e| CliError::Internal(format!("serializing {name}: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Internal(format!("serializing {name}: {e}")))?;
        self.write(name, &bytes)
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }
}

/// Seconds since the Unix epoch, taken from `SOURCE_DATE_EPOCH` when set so
/// that manifests can be reproduced exactly.
pub fn timestamp() -> Result<u64, CliError> {
    match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("SOURCE_DATE_EPOCH must be an integer, got {v:?}"))),
        Err(_) => Ok(SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)),
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest<'a, A: Serialize> {
    pub schema: &'static str,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub master_seed: u64,
    pub timestamp_unix: u64,
    pub arguments: A,
    /// Resolved configuration, defaults included.
    pub config: &'a ScenarioConfig,
    pub outputs: Vec<String>,
    pub warnings: &'a [String],
}

impl<'a, A: Serialize> RunManifest<'a, A> {
    pub fn new(
        command: &'static str,
        config: &'a ScenarioConfig,
        arguments: A,
        warnings: &'a [String],
    ) -> Result<Self, CliError> {
        Ok(Self {
            schema: MANIFEST_SCHEMA,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            master_seed: config.master_seed,
            timestamp_unix: timestamp()?,
            arguments,
            config,
            outputs: Vec::new(),
            warnings,
        })
    }
}
