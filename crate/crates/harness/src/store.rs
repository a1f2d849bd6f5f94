//! Content-addressed experiment directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use voronoi_perc::{Error, Result};

pub const SCHEMA: u32 = 1;

/// How every random stream is derived from `--seed`.
pub const STREAMS: [&str; 6] = [
    "trial t: derive(seed, [TRIAL, t])",
    "sampling box b of a trial: derive(trial seed, [SAMPLE_BOX, b])",
    "fresh content of ε-box x: derive(trial seed, [FRESH, x])",
    "degenerate Delaunay rebuild: derive(trial seed, [JITTER])",
    "random OSSS instance i: derive(derive(seed, [i]), [INSTANCE])",
    "independent OSSS factors j = 1, 2, 3: derive(seed, [j])",
];

/// Outcome of an acceptance check recorded with the results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Everything needed to regenerate a result directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub schema: u32,
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub params: Value,
    pub streams: Vec<String>,
    pub outputs: Vec<String>,
    pub check: Option<Check>,
}

impl ExperimentManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", dir.display())))
    }
}

/// Directory name for a command and its parameters.
pub fn address(command: &str, seed: u64, params: &Value) -> String {
    let key = serde_json::json!({
        "schema": SCHEMA,
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "params": params,
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    format!("{command}-{hex}")
}

pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A result directory being written; it only appears under its final name
/// once complete.
pub struct Staging {
    pub path: PathBuf,
    target: PathBuf,
}

impl Staging {
    pub fn new(out: &Path, name: &str) -> Result<Self> {
        fs::create_dir_all(out)?;
        let path = out.join(format!(".{name}.partial-{}", std::process::id()));
        if path.exists() {
            fs::remove_dir_all(&path)?;
        }
        fs::create_dir(&path)?;
        Ok(Staging { path, target: out.join(name) })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        fs::write(self.file(name), text)?;
        Ok(())
    }

    pub fn create(&self, name: &str) -> Result<std::io::BufWriter<fs::File>> {
        Ok(std::io::BufWriter::new(fs::File::create(self.file(name))?))
    }

    /// Writes the manifest and moves the directory into place.
    pub fn finish(self, mut manifest: ExperimentManifest) -> Result<PathBuf> {
        let mut outputs: Vec<String> = fs::read_dir(&self.path)?
            .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
            .collect::<std::io::Result<_>>()?;
        outputs.sort();
        manifest.outputs = outputs;
        self.write_json("manifest.json", &manifest)?;
        if fs::rename(&self.path, &self.target).is_err() {
            // Someone else finished the same experiment first.
            fs::remove_dir_all(&self.path)?;
            if !self.target.join("manifest.json").exists() {
                return Err(Error::State(format!("cannot create {}", self.target.display())));
            }
        }
        Ok(self.target.clone())
    }

    pub fn abandon(self) {
        let _ = fs::remove_dir_all(&self.path);
    }
}
