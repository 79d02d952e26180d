//! Run manifest: command, config, seed, versions and SHA-256 of every
//! input and output file. Paths are stored relative to the arguments so
//! manifests of identical runs in different directories are identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use docdep::config::PipelineConfig;
use docdep::io::write_json;
use docdep::Result;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone)]
pub struct Manifest {
    command: String,
    seed: u64,
    config: String,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    extra: Map<String, Value>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Files under `dir`, recursively, sorted by path.
fn walk(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn rel_key(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

impl Manifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Manifest {
            command: command.to_string(),
            seed: cfg.seed,
            config: cfg.to_kv(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            extra: Map::new(),
        }
    }

    pub fn input_file(&mut self, label: &str, path: &Path) -> Result<()> {
        self.inputs.insert(label.to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Every file under `dir`, keyed `label/<path relative to root>`.
    pub fn input_tree(&mut self, label: &str, root: &Path, dir: &Path) -> Result<()> {
        for f in walk(dir)? {
            self.inputs.insert(format!("{label}/{}", rel_key(root, &f)), sha256_file(&f)?);
        }
        Ok(())
    }

    pub fn output_file(&mut self, label: &str, path: &Path) -> Result<()> {
        self.outputs.insert(label.to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Every file under `dir` except a top-level manifest.
    pub fn output_tree(&mut self, root: &Path, dir: &Path) -> Result<()> {
        for f in walk(dir)? {
            let key = rel_key(root, &f);
            if key == MANIFEST_NAME {
                continue;
            }
            self.outputs.insert(key, sha256_file(&f)?);
        }
        Ok(())
    }

    pub fn extra(&mut self, key: &str, value: Value) {
        self.extra.insert(key.to_string(), value);
    }

    pub fn to_json(&self) -> Value {
        let mut v = json!({
            "command": self.command,
            "tool": "docdep",
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
        });
        if let Value::Object(m) = &mut v {
            for (k, x) in &self.extra {
                m.insert(k.clone(), x.clone());
            }
        }
        v
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_json())
    }
}
