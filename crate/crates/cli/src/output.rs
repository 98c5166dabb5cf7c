//! Writers for the CSV and JSON artifacts. Every CSV begins with a
//! `# config_sha256=…` comment line followed by a header row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub struct CsvWriter {
    inner: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, config_hash: &str, extra: &str, header: &[&str]) -> Result<Self, CliError> {
        let mut inner = BufWriter::new(File::create(path)?);
        if extra.is_empty() {
            writeln!(inner, "# config_sha256={config_hash}")?;
        } else {
            writeln!(inner, "# config_sha256={config_hash}, {extra}")?;
        }
        writeln!(inner, "{}", header.join(","))?;
        Ok(Self { inner })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        writeln!(self.inner, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

/// Record of one command invocation, written as `manifest.json`.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub truth_sha256: String,
    pub likelihood: String,
    pub notes: Vec<String>,
    pub files: Vec<PathBuf>,
}
