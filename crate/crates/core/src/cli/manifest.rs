use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

pub const MANIFEST_SUFFIX: &str = ".manifest.json";

/// Record of one run: enough to repeat it and to check its outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    /// Fully resolved configuration.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// SHA-256 of every input file.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of every output file.
    pub outputs: BTreeMap<String, String>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
    }
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex(&h.finalize()))
}

/// Output files are written under a temporary name and renamed into place
/// only when the whole command succeeds; anything left staged is removed
/// on drop.
#[derive(Default)]
pub struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    fn temp_path(path: &Path) -> PathBuf {
        let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(format!(".partial-{}", std::process::id()));
        path.with_file_name(name)
    }

    /// Creates the staging file for `path`.
    pub fn create(&mut self, path: &Path) -> Result<BufWriter<File>, CliError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
        }
        let tmp = Self::temp_path(path);
        let f = File::create(&tmp).map_err(|e| CliError::runtime(format!("{}: {e}", tmp.display())))?;
        self.staged.push((tmp, path.to_path_buf()));
        Ok(BufWriter::new(f))
    }

    /// Stages `path` and fills it through `write`.
    pub fn write<F>(&mut self, path: &Path, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let mut w = self.create(path)?;
        write(&mut w)?;
        w.flush().map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.staged.iter().map(|(_, p)| p.clone()).collect()
    }

    /// Renames every staged file into place and returns their digests.
    pub fn commit(mut self) -> Result<BTreeMap<String, String>, CliError> {
        let mut digests = BTreeMap::new();
        for (tmp, path) in std::mem::take(&mut self.staged) {
            std::fs::rename(&tmp, &path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            let d = sha256_file(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
            digests.insert(path.display().to_string(), d);
        }
        Ok(digests)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = std::fs::remove_file(tmp);
        }
    }
}

/// Manifest location for a primary output file.
pub fn manifest_path(primary: &Path) -> PathBuf {
    if primary.is_dir() {
        return primary.join("manifest.json");
    }
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(MANIFEST_SUFFIX);
    primary.with_file_name(name)
}
