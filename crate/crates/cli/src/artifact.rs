//! Artifact plumbing: content hashes, manifests and atomic directory writes.
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use kolmo_core::series::write_atomic;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::stages::StageCall;

/// sha256 of a file, or of a directory as the sorted list of
/// `name\0hash\n` entries of its files.
pub fn hash_path(path: &Path) -> anyhow::Result<String> {
    let meta = fs::metadata(path).with_context(|| format!("cannot read {}", path.display()))?;
    let digest = if meta.is_dir() {
        let mut entries: Vec<(String, String)> = Vec::new();
        for e in fs::read_dir(path)? {
            let e = e?;
            if e.file_type()?.is_file() {
                entries.push((e.file_name().to_string_lossy().into_owned(), hash_path(&e.path())?));
            }
        }
        entries.sort();
        let mut h = Sha256::new();
        for (name, hash) in entries {
            h.update(name.as_bytes());
            h.update([0]);
            h.update(hash.as_bytes());
            h.update(b"\n");
        }
        h.finalize()
    } else {
        Sha256::digest(fs::read(path)?)
    };
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to redo a stage and check the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub call: StageCall,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

fn hashes(paths: &[PathBuf]) -> anyhow::Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.clone(),
                sha256: hash_path(p)?,
            })
        })
        .collect()
}

pub fn input_hashes(call: &StageCall) -> anyhow::Result<Vec<FileHash>> {
    hashes(&call.inputs())
}

/// Write one manifest beside every output of a finished stage.
pub fn write_manifests(call: &StageCall, inputs: Vec<FileHash>) -> anyhow::Result<Manifest> {
    let manifest = Manifest {
        tool: "kolmo".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: call.seed(),
        call: call.clone(),
        inputs,
        outputs: hashes(&call.outputs())?,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    for out in call.outputs() {
        write_atomic(&manifest_path(&out), text.as_bytes())?;
    }
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> anyhow::Result<Manifest> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Check that the inputs recorded in a manifest are unchanged.
pub fn verify_inputs(m: &Manifest) -> anyhow::Result<()> {
    for f in &m.inputs {
        let now = hash_path(&f.path)?;
        if now != f.sha256 {
            bail!("input {} changed since the manifest was written", f.path.display());
        }
    }
    Ok(())
}

/// Fill a directory through `fill`, then swap it into place.
pub fn write_dir_atomic(dir: &Path, fill: impl FnOnce(&Path) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let name = dir.file_name().context("output directory has no name")?;
    let tmp = dir.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&tmp, dir)?;
    Ok(())
}
