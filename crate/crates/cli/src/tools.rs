//! Small subcommands: conversion, synthesis, checkpoint inspection.

use std::path::Path;

use grounder_data::{
    convert_coco_style, parse_coco_json, render_pixels, save_unified, synth_generate,
    DatasetManifest, SynthSpec, Task,
};
use grounder_model::checkpoint;

use crate::error::Result;

/// COCO json to a unified dataset directory (annotations + manifest).
pub fn run_convert(coco_path: &Path, out_dir: &Path, name: &str) -> Result<ConvertOutcome> {
    let coco = parse_coco_json(coco_path)?;
    let (samples, categories, stats) = convert_coco_style(&coco)?;
    std::fs::create_dir_all(out_dir)?;
    save_unified(&out_dir.join("annotations.jsonl"), &samples)?;
    let manifest = DatasetManifest {
        name: name.to_string(),
        task: Task::Ovd,
        annotations: "annotations.jsonl".into(),
        images_dir: None,
        categories,
        frequency_buckets: None,
        base_categories: None,
        novel_categories: None,
        chunk_size: None,
        descriptions: None,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(ConvertOutcome {
        n_images: stats.n_images,
        n_instances: stats.n_instances,
        crowd_dropped: stats.crowd_dropped,
    })
}

pub struct ConvertOutcome {
    pub n_images: usize,
    pub n_instances: usize,
    pub crowd_dropped: u64,
}

/// Generate a synthetic dataset directory: annotations, manifest, and one
/// PPM image per sample.
pub fn run_synth(spec: &SynthSpec, out_dir: &Path) -> Result<()> {
    let ds = synth_generate(spec)?;
    std::fs::create_dir_all(out_dir.join("images"))?;
    save_unified(&out_dir.join("annotations.jsonl"), &ds.samples)?;
    for sample in &ds.samples {
        let px = render_pixels(sample, &ds.palette);
        grounder_data::write_ppm(
            &out_dir.join("images").join(format!("img_{}.ppm", sample.image_id)),
            &px,
        )?;
    }
    let manifest = DatasetManifest {
        name: "synthetic".into(),
        task: Task::Ovd,
        annotations: "annotations.jsonl".into(),
        images_dir: Some("images".into()),
        categories: ds.category_names.clone(),
        frequency_buckets: None,
        base_categories: None,
        novel_categories: None,
        chunk_size: None,
        descriptions: None,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(())
}

/// Human-readable checkpoint manifest plus the scalar parameter count.
pub fn inspect_checkpoint(path: &Path) -> Result<String> {
    let manifest = checkpoint::read_manifest(path)?;
    let mut out = String::new();
    out.push_str(&format!("checkpoint version {}\n", manifest.version));
    for e in &manifest.entries {
        out.push_str(&format!(
            "{:<40} {:>12?} @ {}\n",
            e.name, e.shape, e.offset
        ));
    }
    out.push_str(&format!(
        "{} tensors, {} parameters\n",
        manifest.entries.len(),
        manifest.n_scalars()
    ));
    Ok(out)
}
