//! COCO-style detection JSON to unified OVD samples.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::error::{DataError, Result};
use crate::unified::{GroundingSample, Instance, Task, SCHEMA_VERSION};

#[derive(Debug, Deserialize)]
pub struct CocoDataset {
    #[serde(default)]
    pub images: Vec<CocoImage>,
    #[serde(default)]
    pub annotations: Vec<CocoAnnotation>,
    #[serde(default)]
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub file_name: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct CocoAnnotation {
    pub image_id: u64,
    pub category_id: u64,
    /// (x, y, w, h)
    pub bbox: [f64; 4],
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Debug, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
}

#[derive(Debug, Default, Clone)]
pub struct ConvertStats {
    pub crowd_dropped: u64,
    pub n_images: usize,
    pub n_instances: usize,
}

pub fn parse_coco_json(path: &Path) -> Result<CocoDataset> {
    let content = std::fs::read_to_string(path)?;
    serde_json::from_str(&content).map_err(|e| DataError::Parse {
        line: e.line(),
        offset: 0,
        message: e.to_string(),
    })
}

/// xywh boxes become xyxy, category ids are remapped densely (ascending
/// original id order), crowd annotations are dropped and counted. Images
/// without annotations are kept as negative samples.
pub fn convert_coco_style(
    coco: &CocoDataset,
) -> Result<(Vec<GroundingSample>, Vec<String>, ConvertStats)> {
    let mut cat_ids: Vec<u64> = coco.categories.iter().map(|c| c.id).collect();
    cat_ids.sort_unstable();
    cat_ids.dedup();
    let dense: BTreeMap<u64, u32> = cat_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32))
        .collect();
    let mut names = vec![String::new(); cat_ids.len()];
    for c in &coco.categories {
        names[dense[&c.id] as usize] = c.name.clone();
    }

    let mut by_image: BTreeMap<u64, Vec<Instance>> = BTreeMap::new();
    let mut stats = ConvertStats::default();
    for ann in &coco.annotations {
        if ann.iscrowd != 0 {
            stats.crowd_dropped += 1;
            continue;
        }
        let &cat = dense
            .get(&ann.category_id)
            .ok_or_else(|| DataError::Reference(format!("category id {}", ann.category_id)))?;
        let [x, y, w, h] = ann.bbox;
        by_image.entry(ann.image_id).or_default().push(Instance {
            box_xyxy: [x, y, x + w, y + h],
            category_id: Some(cat),
            phrase_id: None,
        });
    }

    let image_ids: BTreeMap<u64, &CocoImage> = coco.images.iter().map(|i| (i.id, i)).collect();
    for &img_id in by_image.keys() {
        if !image_ids.contains_key(&img_id) {
            return Err(DataError::Reference(format!(
                "annotation references missing image id {img_id}"
            )));
        }
    }

    let mut samples = Vec::with_capacity(coco.images.len());
    for (id, img) in &image_ids {
        let instances = by_image.remove(id).unwrap_or_default();
        stats.n_instances += instances.len();
        samples.push(GroundingSample {
            schema_version: SCHEMA_VERSION,
            image_id: *id,
            width: img.width,
            height: img.height,
            task: Task::Ovd,
            caption: None,
            categories: Some(names.clone()),
            phrases: None,
            instances,
            split: String::new(),
        });
    }
    stats.n_images = samples.len();
    Ok((samples, names, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coco() -> CocoDataset {
        serde_json::from_str(
            r#"{
                "images": [
                    {"id": 10, "width": 100, "height": 80},
                    {"id": 11, "width": 50, "height": 50}
                ],
                "annotations": [
                    {"image_id": 10, "category_id": 7, "bbox": [10, 20, 30, 40]},
                    {"image_id": 10, "category_id": 3, "bbox": [1, 1, 5, 5], "iscrowd": 1}
                ],
                "categories": [
                    {"id": 7, "name": "dog"},
                    {"id": 3, "name": "cat"}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn xywh_to_xyxy_and_dense_remap() {
        let (samples, names, stats) = convert_coco_style(&coco()).unwrap();
        assert_eq!(names, vec!["cat".to_string(), "dog".to_string()]);
        let s10 = samples.iter().find(|s| s.image_id == 10).unwrap();
        assert_eq!(s10.instances.len(), 1);
        assert_eq!(s10.instances[0].box_xyxy, [10.0, 20.0, 40.0, 60.0]);
        // original id 7 ("dog") densifies to index 1
        assert_eq!(s10.instances[0].category_id, Some(1));
        assert_eq!(stats.crowd_dropped, 1);
    }

    #[test]
    fn negative_images_are_retained() {
        let (samples, _, _) = convert_coco_style(&coco()).unwrap();
        let s11 = samples.iter().find(|s| s.image_id == 11).unwrap();
        assert!(s11.instances.is_empty());
    }

    #[test]
    fn dangling_image_reference_is_an_error() {
        let mut c = coco();
        c.annotations.push(CocoAnnotation {
            image_id: 999,
            category_id: 7,
            bbox: [0.0, 0.0, 1.0, 1.0],
            iscrowd: 0,
        });
        assert!(matches!(
            convert_coco_style(&c).unwrap_err(),
            DataError::Reference(_)
        ));
    }
}
