//! CSV files with a `#` comment header.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{io_context, Result};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_context(format!("cannot create output directory {}", dir.display())))
}

/// Accumulates a CSV in memory and writes it in one go.
pub struct CsvFile {
    text: String,
}

impl CsvFile {
    /// Starts with the comment block `header`; add comments, then columns.
    pub fn new(header: &str) -> Self {
        Self {
            text: header.to_string(),
        }
    }

    pub fn comment(&mut self, line: &str) -> &mut Self {
        let _ = writeln!(self.text, "# {line}");
        self
    }

    pub fn columns(&mut self, columns: &str) -> &mut Self {
        self.text.push_str(columns);
        self.text.push('\n');
        self
    }

    pub fn row<I, T>(&mut self, cells: I)
    where
        I: IntoIterator<Item = T>,
        T: std::fmt::Display,
    {
        let mut first = true;
        for c in cells {
            if !first {
                self.text.push(',');
            }
            first = false;
            let _ = write!(self.text, "{c}");
        }
        self.text.push('\n');
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        fs::write(path, &self.text).map_err(io_context(format!("cannot write {}", path.display())))?;
        Ok(path.to_path_buf())
    }
}
