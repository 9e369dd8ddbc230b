//! Dataset manifest: CSV of photo/sketch pairs with a train/test split,
//! paths relative to the manifest file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split `{other}` (expected train|test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Relative to the manifest's directory.
    pub photo: PathBuf,
    pub sketch: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    /// Directory the relative paths resolve against.
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_HEADER: &str = "photo,sketch,split";

impl DatasetManifest {
    /// Parse and verify: well-formed rows, no duplicate photos, and every
    /// referenced file present on disk.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || (lineno == 0 && line == MANIFEST_HEADER) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let [photo, sketch, split] = fields[..] else {
                return Err(Error::data(format!(
                    "{}: line {}: expected photo,sketch,split",
                    path.display(),
                    lineno + 1
                )));
            };
            if !seen.insert(photo.to_string()) {
                return Err(Error::data(format!(
                    "{}: line {}: duplicate photo `{photo}`",
                    path.display(),
                    lineno + 1
                )));
            }
            entries.push(ManifestEntry {
                photo: PathBuf::from(photo),
                sketch: PathBuf::from(sketch),
                split: split.parse()?,
            });
        }
        let manifest = DatasetManifest { root, entries };
        let missing: Vec<String> = manifest
            .entries
            .iter()
            .flat_map(|e| [manifest.resolve(&e.photo), manifest.resolve(&e.sketch)])
            .filter(|p| !p.is_file())
            .map(|p| p.display().to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::data(format!(
                "{}: missing files: {}",
                path.display(),
                missing.join(", ")
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = String::from(MANIFEST_HEADER);
        text.push('\n');
        for e in &self.entries {
            text.push_str(&format!(
                "{},{},{}\n",
                e.photo.display(),
                e.sketch.display(),
                e.split
            ));
        }
        std::fs::write(path, text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }

    pub fn resolve(&self, rel: &Path) -> PathBuf {
        self.root.join(rel)
    }

    pub fn split_entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == split).collect()
    }
}
