//! Output directory with atomic file writes.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[value(name = "csv")]
    Csv,
    #[value(name = "csv+svg")]
    CsvSvg,
}

pub struct Output {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path, format: Format) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn svg_enabled(&self) -> bool {
        self.format == Format::CsvSvg
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Writes through a temporary file in the same directory, then renames.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> CliResult<()>
    where
        F: FnOnce(&mut dyn Write) -> CliResult<()>,
    {
        let path = self.dir.join(name);
        let mut tmp =
            tempfile::NamedTempFile::new_in(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        {
            let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
            fill(&mut buf)?;
            buf.flush().map_err(|e| CliError::io(&path, e))?;
        }
        tmp.persist(&path)
            .map_err(|e| CliError::io(&path, e.error))?;
        self.written.push(path);
        Ok(())
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        self.write_with(name, |w| {
            w.write_all(bytes).map_err(|e| CliError::io(&path, e))
        })
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Numeric(format!("cannot serialise {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Serialises rows with a header taken from the row type.
    pub fn write_rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> CliResult<()> {
        let path = self.dir.join(name);
        self.write_with(name, |w| {
            let mut csv = csv::Writer::from_writer(w);
            for r in rows {
                csv.serialize(r).map_err(|e| CliError::io(&path, e))?;
            }
            csv.flush().map_err(|e| CliError::io(&path, e))
        })
    }

    pub fn write_svg(&mut self, name: &str, svg: impl FnOnce() -> String) -> CliResult<()> {
        if self.svg_enabled() {
            let text = svg();
            self.write_bytes(name, text.as_bytes())?;
        }
        Ok(())
    }
}
