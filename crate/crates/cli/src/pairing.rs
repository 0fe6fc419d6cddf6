//! Matching dataset files across directories by filename stem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub const DEPTH_EXTS: &[&str] = &["pfm", "pgm"];
pub const MASK_EXTS: &[&str] = &["pbm"];

/// Files in `dir` with one of `exts`, keyed by stem.
pub fn list(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, PathBuf>, String> {
    let rd = std::fs::read_dir(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let mut out = BTreeMap::new();
    for entry in rd {
        let path = entry.map_err(|e| format!("{}: {e}", dir.display()))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !path.is_file() || !ext.is_some_and(|e| exts.contains(&e.as_str())) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(format!("{} and {} share the id {stem:?}", prev.display(), path.display()));
        }
    }
    Ok(out)
}

/// A dataset root holds `depth/` (and optionally `contours/`, `normals/`);
/// any other directory is taken to hold the files directly.
pub fn resolve(dir: &Path, sub: &str) -> PathBuf {
    let nested = dir.join(sub);
    if nested.is_dir() {
        nested
    } else {
        dir.to_path_buf()
    }
}

/// Optional companion directory of a dataset root.
pub fn companion(dir: &Path, sub: &str) -> Option<PathBuf> {
    let nested = dir.join(sub);
    nested.is_dir().then_some(nested)
}

#[derive(Debug, Default)]
pub struct Pairing {
    pub matched: Vec<(String, PathBuf, PathBuf)>,
    pub only_left: Vec<String>,
    pub only_right: Vec<String>,
}

pub fn pair(left: &BTreeMap<String, PathBuf>, right: &BTreeMap<String, PathBuf>) -> Pairing {
    let mut p = Pairing::default();
    for (id, l) in left {
        match right.get(id) {
            Some(r) => p.matched.push((id.clone(), l.clone(), r.clone())),
            None => p.only_left.push(id.clone()),
        }
    }
    p.only_right = right.keys().filter(|k| !left.contains_key(*k)).cloned().collect();
    p
}
