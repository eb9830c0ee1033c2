//! Workspace layout: one directory per stage, each with a `manifest.json`
//! recording the stage config hash, input digests and output digests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Input name -> sha256.
    pub inputs: BTreeMap<String, String>,
    /// Path relative to the stage directory -> sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

fn list_files(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            list_files(&path, base, out)?;
        } else {
            out.push(path.strip_prefix(base)?.to_path_buf());
        }
    }
    Ok(())
}

/// Digests of every file under `dir` except the manifest, keyed by
/// `/`-separated relative path.
fn output_digests(dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut files = Vec::new();
    list_files(dir, dir, &mut files)?;
    let mut out = BTreeMap::new();
    for f in files {
        let key = f.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        if key != MANIFEST {
            out.insert(key, file_digest(&dir.join(&f))?);
        }
    }
    Ok(out)
}

pub struct Workspace {
    pub root: PathBuf,
    pub force: bool,
}

/// An input to a stage: a stable name for the manifest and the file read.
pub struct Input {
    pub name: String,
    pub path: PathBuf,
}

impl Workspace {
    pub fn new(root: PathBuf, force: bool) -> Self {
        Self { root, force }
    }

    pub fn stage_dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    pub fn manifest(&self, stage: &str) -> Option<Manifest> {
        let text = fs::read_to_string(self.stage_dir(stage).join(MANIFEST)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// An artifact of an earlier stage, or an error naming the subcommand
    /// that produces it.
    pub fn require(&self, stage: &str, file: &str) -> Result<Input> {
        let path = self.stage_dir(stage).join(file);
        if self.manifest(stage).is_none() || !path.is_file() {
            bail!(
                "missing {stage}/{file} in workspace {}; run `wander {stage}` first",
                self.root.display()
            );
        }
        Ok(Input {
            name: format!("{stage}/{file}"),
            path,
        })
    }

    /// Like [`Workspace::require`] but `None` when the stage has not run.
    pub fn optional(&self, stage: &str, file: &str) -> Option<Input> {
        self.require(stage, file).ok()
    }

    /// Runs `body` into a fresh stage directory unless the manifest shows
    /// the same config, the same inputs and untouched outputs. Returns
    /// whether the stage ran.
    pub fn run_stage<C: Serialize>(
        &self,
        stage: &str,
        config: &C,
        inputs: &[Input],
        body: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<bool> {
        let config = serde_json::to_value(config)?;
        let config_hash = sha256_hex(serde_json::to_string(&config)?.as_bytes());
        let mut digests = BTreeMap::new();
        for i in inputs {
            digests.insert(i.name.clone(), file_digest(&i.path)?);
        }
        let dir = self.stage_dir(stage);
        if !self.force {
            if let Some(m) = self.manifest(stage) {
                if m.config_hash == config_hash
                    && m.inputs == digests
                    && output_digests(&dir).ok().as_ref() == Some(&m.outputs)
                {
                    eprintln!("{stage}: up to date");
                    return Ok(false);
                }
            }
        }
        fs::create_dir_all(&self.root).with_context(|| format!("creating {}", self.root.display()))?;
        let tmp = self.root.join(format!(".{stage}.tmp"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp)?;
        }
        fs::create_dir_all(&tmp)?;
        body(&tmp)?;
        let manifest = Manifest {
            stage: stage.to_string(),
            config_hash,
            config,
            inputs: digests,
            outputs: output_digests(&tmp)?,
        };
        fs::write(tmp.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::rename(&tmp, &dir)?;
        eprintln!("{stage}: wrote {}", dir.display());
        Ok(true)
    }
}
