//! Dataset manifests: one JSON document naming the annotation file, the
//! category universe, and the optional evaluation partitions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{DataError, Result};
use crate::unified::Task;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescriptionEntry {
    pub id: u64,
    pub text: String,
    pub is_presence: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub task: Task,
    /// Unified JSONL annotations, relative to the manifest's directory.
    pub annotations: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub images_dir: Option<PathBuf>,
    #[serde(default)]
    pub categories: Vec<String>,
    /// Category name to "rare" | "common" | "frequent".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_buckets: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub novel_categories: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk_size: Option<usize>,
    /// Description metadata for described-object evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptions: Option<Vec<DescriptionEntry>>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| DataError::Manifest(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// Load and validate: referenced files must exist, partitions must be
    /// consistent with the category list.
    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path)?;
        let manifest: Self =
            serde_json::from_str(&content).map_err(|e| DataError::Manifest(e.to_string()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let ann = manifest.annotations_path(dir);
        if !ann.exists() {
            return Err(DataError::Manifest(format!(
                "annotation file {} does not exist",
                ann.display()
            )));
        }
        for part in [&manifest.base_categories, &manifest.novel_categories]
            .into_iter()
            .flatten()
        {
            for cat in part {
                if !manifest.categories.contains(cat) {
                    return Err(DataError::Manifest(format!(
                        "partition category {cat:?} missing from category list"
                    )));
                }
            }
        }
        if let Some(buckets) = &manifest.frequency_buckets {
            for (cat, bucket) in buckets {
                if !manifest.categories.contains(cat) {
                    return Err(DataError::Manifest(format!(
                        "bucketed category {cat:?} missing from category list"
                    )));
                }
                if !["rare", "common", "frequent"].contains(&bucket.as_str()) {
                    return Err(DataError::Manifest(format!("unknown bucket {bucket:?}")));
                }
            }
        }
        Ok(manifest)
    }

    pub fn annotations_path(&self, manifest_dir: &Path) -> PathBuf {
        if self.annotations.is_absolute() {
            self.annotations.clone()
        } else {
            manifest_dir.join(&self.annotations)
        }
    }

    pub fn images_path(&self, manifest_dir: &Path) -> Option<PathBuf> {
        self.images_dir.as_ref().map(|d| {
            if d.is_absolute() {
                d.clone()
            } else {
                manifest_dir.join(d)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ann.jsonl"), "").unwrap();
        let m = DatasetManifest {
            name: "toy".into(),
            task: Task::Ovd,
            annotations: "ann.jsonl".into(),
            images_dir: None,
            categories: vec!["alpha".into(), "bravo".into()],
            frequency_buckets: None,
            base_categories: Some(vec!["alpha".into()]),
            novel_categories: Some(vec!["bravo".into()]),
            chunk_size: Some(2),
            descriptions: None,
        };
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        let loaded = DatasetManifest::load(&path).unwrap();
        assert_eq!(loaded.name, "toy");
        assert_eq!(loaded.chunk_size, Some(2));
    }

    #[test]
    fn missing_annotation_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest {
            name: "toy".into(),
            task: Task::Ovd,
            annotations: "missing.jsonl".into(),
            images_dir: None,
            categories: vec![],
            frequency_buckets: None,
            base_categories: None,
            novel_categories: None,
            chunk_size: None,
            descriptions: None,
        };
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }

    #[test]
    fn inconsistent_partition_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("ann.jsonl"), "").unwrap();
        let m = DatasetManifest {
            name: "toy".into(),
            task: Task::Ovd,
            annotations: "ann.jsonl".into(),
            images_dir: None,
            categories: vec!["alpha".into()],
            frequency_buckets: None,
            base_categories: Some(vec!["zulu".into()]),
            novel_categories: None,
            chunk_size: None,
            descriptions: None,
        };
        let path = dir.path().join("manifest.json");
        m.save(&path).unwrap();
        assert!(DatasetManifest::load(&path).is_err());
    }
}
