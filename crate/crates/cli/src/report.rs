//! Output files: tables in the chosen format and the text report.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Format;

pub fn spec_hash(normalized: &str) -> String {
    Sha256::digest(normalized.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Text report whose header carries the full normalized spec.
pub struct Report {
    lines: Vec<String>,
}

impl Report {
    pub fn new(verb: &str, normalized: &str) -> Self {
        let mut lines = vec![
            format!("# coalfrag {verb} report"),
            format!("# spec sha256 {}", spec_hash(normalized)),
            "# normalized spec:".to_string(),
        ];
        lines.extend(normalized.lines().map(|l| format!("#   {l}").trim_end().to_string()));
        lines.push(String::new());
        Self { lines }
    }

    pub fn line(&mut self, text: impl Into<String>) {
        self.lines.push(text.into());
    }

    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }
}

pub struct Outputs {
    dir: PathBuf,
    format: Format,
}

impl Outputs {
    pub fn create(dir: &str, format: Format) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {dir}"))?;
        Ok(Self { dir: PathBuf::from(dir), format })
    }

    pub fn path(&self, stem: &str) -> PathBuf {
        self.dir.join(format!("{stem}.{}", self.format.extension()))
    }

    fn open(path: &Path) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(path).with_context(|| format!("writing {}", path.display()))?))
    }

    /// Writes `rows` as `<stem>.csv` or `<stem>.jsonl`.
    pub fn table<R: Serialize>(&self, stem: &str, rows: &[R]) -> Result<PathBuf> {
        let path = self.path(stem);
        let mut out = Self::open(&path)?;
        match self.format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(&mut out);
                for r in rows {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            Format::JsonLines => {
                for r in rows {
                    serde_json::to_writer(&mut out, r)?;
                    out.write_all(b"\n")?;
                }
            }
        }
        out.flush()?;
        Ok(path)
    }

    /// Writes a table through one of the library's event writers.
    pub fn events(
        &self,
        stem: &str,
        write: impl FnOnce(&mut dyn Write, Format) -> coalfrag::Result<()>,
    ) -> Result<PathBuf> {
        let path = self.path(stem);
        let mut out = Self::open(&path)?;
        write(&mut out, self.format)?;
        out.flush()?;
        Ok(path)
    }

    pub fn text(&self, name: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
