//! CSV tables and the JSON run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use wavedisp::LayerStack;

/// Rows are written as given; numbers use the shortest round-trip form so
/// that reruns are byte-identical.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().context("flushing csv")?)
    }
}

pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

#[derive(Serialize)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
}

#[derive(Serialize)]
pub struct Manifest<P: Serialize> {
    pub command: &'static str,
    pub library_version: &'static str,
    pub config_hash: String,
    pub stack: LayerStack,
    pub units: &'static str,
    pub parameters: P,
    pub outputs: Vec<OutputFile>,
}

/// Collects output files under one directory and writes the manifest last.
pub struct Sink {
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Sink { dir: dir.to_path_buf(), outputs: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(OutputFile { file: name.to_string(), sha256: hex_sha256(bytes) });
        Ok(())
    }

    pub fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        self.write(name, &t.to_bytes()?)
    }

    pub fn finish<P: Serialize>(self, command: &'static str, stack: &LayerStack, parameters: P) -> Result<()> {
        let m = Manifest {
            command,
            library_version: wavedisp::VERSION,
            config_hash: config_hash(stack)?,
            stack: *stack,
            units: "dimensionless throughout",
            parameters,
            outputs: self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        let path = self.dir.join(format!("{command}.manifest.json"));
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Hash of the resolved layer stack, independent of how the config file
/// was spelled.
pub fn config_hash(stack: &LayerStack) -> Result<String> {
    Ok(hex_sha256(&serde_json::to_vec(stack)?))
}
