//! Output directory handling: CSV files plus a JSON sidecar per command
//! with the resolved configuration, seed, and produced files, enough to
//! replay the run exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{CliError, Result};

pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<OutDir> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes one file and records it for the sidecar.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf).map_err(|e| CliError::io(name, e))?;
        let path = self.dir.join(name);
        std::fs::write(&path, &buf).map_err(|e| CliError::io(path.display().to_string(), e))?;
        self.written.push(name.to_owned());
        Ok(path)
    }

    /// Writes the `<command>.meta.json` sidecar.
    pub fn write_sidecar<E: Serialize>(
        &mut self,
        command: &str,
        config: &ExperimentConfig,
        seed: u64,
        extra: E,
    ) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Sidecar<'a, E> {
            command: &'a str,
            seed: u64,
            outputs: &'a [String],
            details: E,
            config: &'a ExperimentConfig,
        }
        let sidecar = Sidecar {
            command,
            seed,
            outputs: &self.written,
            details: extra,
            config,
        };
        let json = serde_json::to_string_pretty(&sidecar)
            .map_err(|e| CliError::Config(format!("sidecar serialization: {e}")))?;
        let name = format!("{command}.meta.json");
        let path = self.dir.join(&name);
        let mut bytes = json.into_bytes();
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Ok(path)
    }
}

/// CSV cell for a state label: commas and quotes collapse to underscores so
/// downstream tooling never needs quoting rules.
pub fn column_label(label: &str) -> String {
    let mut out = String::with_capacity(label.len());
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_owned()
}

pub fn write_csv_row<W: Write>(w: &mut W, cells: &[String]) -> std::io::Result<()> {
    writeln!(w, "{}", cells.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_flatten_to_identifier_like_columns() {
        assert_eq!(column_label("(1,3),right"), "1_3_right");
        assert_eq!(column_label("#4"), "4");
        assert_eq!(column_label("storm"), "storm");
    }
}
