//! All-or-nothing output directories.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use hazardline_core::digest::sha256_hex;

use crate::CliError;

/// Files collected in a staging directory next to the destination; the
/// directory only appears under its final name once every file is written.
pub struct Staged {
    dest: PathBuf,
    dir: tempfile::TempDir,
    digests: BTreeMap<String, String>,
}

impl Staged {
    pub fn new(dest: &Path) -> Result<Self, CliError> {
        let parent = match dest.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(CliError::io(&parent))?;
        let dir = tempfile::Builder::new().prefix(".staging-").tempdir_in(&parent).map_err(CliError::io(&parent))?;
        Ok(Self { dest: dest.into(), dir, digests: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.path().join(name);
        fs::write(&path, bytes).map_err(CliError::io(&path))?;
        self.digests.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &Value) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// SHA-256 of every file written so far.
    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    /// Move the staged directory into place, replacing an older one.
    pub fn commit(self) -> Result<PathBuf, CliError> {
        if self.dest.exists() {
            fs::remove_dir_all(&self.dest).map_err(CliError::io(&self.dest))?;
        }
        let staged = self.dir.keep();
        if let Err(source) = fs::rename(&staged, &self.dest) {
            let _ = fs::remove_dir_all(&staged);
            return Err(CliError::Io { path: self.dest, source });
        }
        Ok(self.dest)
    }
}
