use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::MetaSplit;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Class names per meta-split, in class-id order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitLists {
    pub fn get(&self, split: MetaSplit) -> &[String] {
        match split {
            MetaSplit::Train => &self.train,
            MetaSplit::Val => &self.val,
            MetaSplit::Test => &self.test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the class directory.
    pub name: String,
    /// Lower-case hex SHA-256 of the file bytes.
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestClass {
    pub name: String,
    pub files: Vec<FileEntry>,
}

/// Describes a class-per-directory image dataset and its class-level
/// meta-split, with a checksum for every file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    /// `[channels, height, width]`
    pub image_shape: [usize; 3],
    pub splits: SplitLists,
    pub classes: Vec<ManifestClass>,
}

impl DatasetManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingPath(path.to_path_buf())
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn class(&self, name: &str) -> Option<&ManifestClass> {
        self.classes.iter().find(|c| c.name == name)
    }

    /// Version, shape, class-name uniqueness and split disjointness; every
    /// described class sits in exactly one split.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let [c, h, w] = self.image_shape;
        if !(c == 1 || c == 3) || h == 0 || w == 0 {
            return Err(Error::Manifest(format!("invalid image shape {:?}", self.image_shape)));
        }
        let mut described = HashSet::new();
        for class in &self.classes {
            if class.name.is_empty() || class.name.contains(['/', '\\']) || class.name.starts_with('.') {
                return Err(Error::Manifest(format!("invalid class name {:?}", class.name)));
            }
            if !described.insert(class.name.as_str()) {
                return Err(Error::Manifest(format!("class {} described twice", class.name)));
            }
        }
        let mut owner: HashMap<&str, MetaSplit> = HashMap::new();
        for split in MetaSplit::ALL {
            for name in self.splits.get(split) {
                if let Some(previous) = owner.insert(name, split) {
                    return Err(Error::Manifest(format!(
                        "class {name} listed in both {previous} and {split}"
                    )));
                }
                if !described.contains(name.as_str()) {
                    return Err(Error::Manifest(format!("class {name} has no file list")));
                }
            }
        }
        if let Some(orphan) = self.classes.iter().find(|c| !owner.contains_key(c.name.as_str())) {
            return Err(Error::Manifest(format!("class {} is in no split", orphan.name)));
        }
        Ok(())
    }
}
