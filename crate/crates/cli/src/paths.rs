use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

const VOLUME_SUFFIXES: [&str; 3] = [".nii.gz", ".nii", ".hdr"];

/// Case id of a volume file name, if it has a recognised extension.
pub fn volume_case_id(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    VOLUME_SUFFIXES.iter().find_map(|s| name.strip_suffix(s)).filter(|s| !s.is_empty()).map(String::from)
}

/// Volume files of a directory keyed by case id.
pub fn volumes_in(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(id) = volume_case_id(&path) {
            if let Some(prev) = out.insert(id.clone(), path.clone()) {
                bail!("case {id} appears twice in {}: {} and {}", dir.display(), prev.display(), path.display());
            }
        }
    }
    Ok(out)
}

/// Immediate subdirectories, sorted by name.
pub fn team_dirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            let name = path.file_name().and_then(|n| n.to_str()).map(String::from);
            if let Some(name) = name {
                out.push((name, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Files with the given extension keyed by stem, sorted.
pub fn files_with_ext(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_file() && path.extension().and_then(|e| e.to_str()) == Some(ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

pub fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        bail!("{what} directory {} does not exist", path.display());
    }
    Ok(())
}

pub fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        bail!("{what} file {} does not exist", path.display());
    }
    Ok(())
}
