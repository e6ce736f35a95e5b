//! Run manifests: what was run, on which inputs, producing which outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// `sha256` of every file read, keyed by path as given.
    pub inputs: BTreeMap<String, String>,
    /// `sha256` of every file written, keyed by file name.
    pub outputs: BTreeMap<String, String>,
    pub duration_ms: u128,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Collects digests while a command runs and writes the manifest at the end.
pub struct Recorder {
    command: &'static str,
    started: Instant,
    out_dir: PathBuf,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Recorder {
    pub fn new(command: &'static str, out_dir: &Path, config: impl Serialize, seed: Option<u64>) -> Result<Self> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        Ok(Self {
            command,
            started: Instant::now(),
            out_dir: out_dir.to_path_buf(),
            config: serde_json::to_value(config)?,
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Creates `name` in the output directory, fills it with `write`, and
    /// records its digest.
    pub fn output<F>(&mut self, name: &str, write: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut std::io::BufWriter<fs::File>) -> metapop::Result<()>,
    {
        let path = self.out_dir.join(name);
        let mut w = metapop::io::create(&path)?;
        write(&mut w).with_context(|| format!("writing {}", path.display()))?;
        std::io::Write::flush(&mut w)?;
        drop(w);
        self.outputs.insert(name.to_string(), sha256_file(&path)?);
        Ok(path)
    }

    pub fn finish(self) -> Result<RunManifest> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            duration_ms: self.started.elapsed().as_millis(),
        };
        let path = self.out_dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}
