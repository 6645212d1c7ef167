//! Run manifests and provenance-stamped CSV files.
//!
//! The manifest hash covers only the reproducible part of a run (tool
//! version, subcommand, effective configuration), so repeating a run yields
//! byte-identical CSV files even though wall times differ.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// `sha256` of the canonical (key-sorted, compact) JSON of the reproducible run identity.
pub fn config_hash(command: &str, config: &Value) -> String {
    let identity = json!({
        "tool": "pxp",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    let bytes = serde_json::to_vec(&identity).expect("json values serialize");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: Value,
    pub config_hash: String,
    pub threads: Option<usize>,
    pub dimension: Option<usize>,
    pub wall_time_seconds: f64,
    pub status: String,
    /// Paths relative to the manifest.
    pub outputs: Vec<String>,
    pub results: Value,
    pub trajectories: Vec<Value>,
}

/// Output directory that has been verified writable.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn prepare(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", root.display())))?;
        let probe = root.join(".pxp-write-probe");
        File::create(&probe)
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| CliError::Io(format!("output directory {} is not writable: {e}", root.display())))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// `name` inside the output directory, unless `explicit` overrides it.
    pub fn path(&self, name: &str, explicit: Option<&Path>) -> PathBuf {
        explicit.map(Path::to_path_buf).unwrap_or_else(|| self.root.join(name))
    }

    fn record(&mut self, path: &Path) {
        self.written.push(path.to_path_buf());
    }

    /// Written files, relative to the output directory where possible.
    pub fn outputs(&self) -> Vec<String> {
        self.written
            .iter()
            .map(|p| p.strip_prefix(&self.root).unwrap_or(p).display().to_string())
            .collect()
    }

    /// CSV with `#` provenance lines, a header row, then `rows`.
    pub fn write_csv(
        &mut self,
        path: PathBuf,
        command: &str,
        hash: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut file = File::create(&path).map_err(io)?;
        writeln!(file, "# pxp {} {command}", env!("CARGO_PKG_VERSION")).map_err(io)?;
        writeln!(file, "# manifest-hash sha256:{hash}").map_err(io)?;
        let mut w = csv::Writer::from_writer(file);
        let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(io)?;
        self.record(&path);
        Ok(())
    }

    pub fn write_json(&mut self, path: PathBuf, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).expect("results serialize");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.record(&path);
        Ok(())
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<PathBuf, CliError> {
        let path = self.root.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Shortest round-trip representation; non-finite values become empty cells.
pub fn fmt_f(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_key_order_independent() {
        let a: Value = serde_json::from_str(r#"{"n": 8, "gamma": 0.1}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"gamma": 0.1, "n": 8}"#).unwrap();
        assert_eq!(config_hash("x", &a), config_hash("x", &b));
        assert_ne!(config_hash("x", &a), config_hash("y", &a));
        assert_eq!(config_hash("x", &a).len(), 64);
    }

    #[test]
    fn float_cells() {
        assert_eq!(fmt_f(0.1), "0.1");
        assert_eq!(fmt_f(1.0), "1.0");
        assert_eq!(fmt_f(f64::NAN), "");
    }
}
