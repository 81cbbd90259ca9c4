//! Artifact files: `#`-prefixed CSV metadata, config hashes and the run manifest.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::args::Command;
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// SHA-256 of the canonical JSON form of the workflow configuration.
pub fn config_hash(command: &Command) -> String {
    let json = serde_json::to_string(command).expect("configuration serializes");
    let digest = Sha256::digest(format!("qfpt {VERSION}\n{json}").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory plus the metadata stamped into every file.
pub struct Artifacts {
    dir: PathBuf,
    metadata: Vec<(String, String)>,
    written: Vec<String>,
}

impl Artifacts {
    pub fn new(dir: &Path, workflow: &str, hash: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metadata: vec![
                ("workflow".into(), workflow.into()),
                ("config_hash".into(), hash.into()),
                ("version".into(), VERSION.into()),
            ],
            written: Vec::new(),
        })
    }

    pub fn metadata(&self) -> &[(String, String)] {
        &self.metadata
    }

    /// Opens `name` for writing and records it for the manifest.
    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let file = File::create(self.dir.join(name))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Writes a CSV whose rows are already formatted.
    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        use std::io::Write;
        let mut out = self.create(name)?;
        for (k, v) in &self.metadata {
            writeln!(out, "# {k}: {v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(header).map_err(qfpt_core::Error::from)?;
        for row in rows {
            w.write_record(row).map_err(qfpt_core::Error::from)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn finish(self, manifest: Manifest) -> Result<PathBuf, CliError> {
        let path = self.dir.join("manifest.json");
        let manifest = Manifest {
            outputs: self.written,
            ..manifest
        };
        let file = File::create(&path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)
            .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        Ok(path)
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub workflow: String,
    pub config: Value,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    pub results: Value,
}
