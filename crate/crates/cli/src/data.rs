//! Dataset layout on disk and the output directory tree.
//!
//! Input: `<data_root>/audio/<context>/<id>.wav` with annotations in
//! `<data_root>/meta/<context>/<id>.ann`.
//!
//! Output, under `<out>`:
//! `features/<combination>/<context>/<id>.feat|.roll`,
//! `models/<combination>/<context>/fold<k>.ckpt|_log.csv` with `folds.toml`,
//! `reports/<combination>.csv|.txt` and `ablation.csv|.txt`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context as _, Result};

use sed_core::features::Combination;

#[derive(Debug, Clone)]
pub struct RecordingFiles {
    pub id: String,
    pub audio: PathBuf,
    pub annotation: PathBuf,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        out.push(e?.path());
    }
    out.sort();
    Ok(out)
}

/// Context names to process: the configured ones, or every directory under
/// `audio/`.
pub fn contexts(data_root: &Path, configured: &[String]) -> Result<Vec<String>> {
    if !configured.is_empty() {
        return Ok(configured.to_vec());
    }
    let names: Vec<String> = sorted_entries(&data_root.join("audio"))?
        .into_iter()
        .filter(|p| p.is_dir())
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    if names.is_empty() {
        bail!("no context directories under {}", data_root.join("audio").display());
    }
    Ok(names)
}

/// Every WAV of a context with its annotation file. All missing files are
/// reported together before any work starts.
pub fn discover(data_root: &Path, context: &str) -> Result<Vec<RecordingFiles>> {
    let audio_dir = data_root.join("audio").join(context);
    let meta_dir = data_root.join("meta").join(context);
    let mut found = Vec::new();
    let mut missing = Vec::new();
    for p in sorted_entries(&audio_dir)? {
        if p.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("wav")) != Some(true) {
            continue;
        }
        let id = p.file_stem().unwrap().to_string_lossy().into_owned();
        let ann = meta_dir.join(format!("{id}.ann"));
        if !ann.is_file() {
            missing.push(ann.display().to_string());
        }
        found.push(RecordingFiles {
            id,
            audio: p,
            annotation: ann,
        });
    }
    if !missing.is_empty() {
        bail!("missing annotation files:\n  {}", missing.join("\n  "));
    }
    if found.is_empty() {
        bail!("no WAV files in {}", audio_dir.display());
    }
    Ok(found)
}

pub fn features_dir(out: &Path, comb: &Combination, context: &str) -> PathBuf {
    out.join("features").join(comb.slug()).join(context)
}

pub fn models_dir(out: &Path, comb: &Combination, context: &str) -> PathBuf {
    out.join("models").join(comb.slug()).join(context)
}

/// Ids with extracted features in `dir`, sorted.
pub fn extracted_ids(dir: &Path) -> Result<Vec<String>> {
    if !dir.is_dir() {
        bail!("no extracted features in {}; run `sed extract` first", dir.display());
    }
    let ids: Vec<String> = sorted_entries(dir)?
        .into_iter()
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("feat"))
        .map(|p| p.file_stem().unwrap().to_string_lossy().into_owned())
        .collect();
    if ids.is_empty() {
        bail!("no extracted features in {}; run `sed extract` first", dir.display());
    }
    Ok(ids)
}

/// Writes next to the target and renames, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| anyhow!("{} has no file name", path.display()))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
