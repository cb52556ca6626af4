//! Dataset loading and the glue between stored annotations and model-space
//! training targets.

use std::path::Path;

use grounder_autodiff::Tensor;
use grounder_data::{
    category_palette, load_unified, read_ppm, render_pixels, DatasetManifest, GroundingSample,
    Task,
};
use grounder_losses::GroundTruthTargets;
use grounder_model::ModelConfig;
use grounder_text::{
    assemble_ovd_caption, assemble_with_negatives, build_positive_map, tokenize, TokenizedCaption,
    Vocabulary,
};

use crate::config::{CaptionMode, RunConfig};
use crate::error::{CliError, Result};

pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<GroundingSample>,
    /// Pixel tensors aligned with `samples`.
    pub images: Vec<Tensor>,
    pub vocab: Vocabulary,
    pub clamped_boxes: u64,
}

pub fn load_dataset(manifest_path: &Path) -> Result<LoadedDataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let outcome = load_unified(&manifest.annotations_path(dir))?;

    let images_dir = manifest.images_path(dir);
    let palette = category_palette(manifest.categories.len());
    let mut images = Vec::with_capacity(outcome.samples.len());
    for sample in &outcome.samples {
        let tensor = match &images_dir {
            Some(d) => read_ppm(&d.join(format!("img_{}.ppm", sample.image_id)))?,
            None => {
                if sample.task != Task::Ovd {
                    return Err(CliError::Data(format!(
                        "sample {} has no image file and cannot be re-rendered",
                        sample.image_id
                    )));
                }
                render_pixels(sample, &palette)
            }
        };
        images.push(tensor);
    }

    // deterministic vocabulary: categories, then caption words, then
    // description words
    let mut words: Vec<String> = Vec::new();
    for cat in &manifest.categories {
        words.extend(cat.split_whitespace().map(str::to_lowercase));
    }
    for sample in &outcome.samples {
        if let Some(caption) = &sample.caption {
            words.extend(
                caption
                    .split(|c: char| c.is_whitespace() || c == '.')
                    .filter(|w| !w.is_empty())
                    .map(str::to_lowercase),
            );
        }
    }
    if let Some(descs) = &manifest.descriptions {
        for d in descs {
            words.extend(d.text.split_whitespace().map(str::to_lowercase));
        }
    }
    let vocab = Vocabulary::from_words(words);

    Ok(LoadedDataset {
        manifest,
        samples: outcome.samples,
        images,
        vocab,
        clamped_boxes: outcome.clamped_boxes,
    })
}

/// Absolute xyxy to model-space cxcywh, normalized by the padded extent.
pub fn normalize_box(xyxy: [f64; 4], cfg: &ModelConfig, width: u32, height: u32) -> [f64; 4] {
    let (hp, wp) = cfg.padded_extent(height as usize, width as usize);
    let (wp, hp) = (wp as f64, hp as f64);
    [
        (xyxy[0] + xyxy[2]) / 2.0 / wp,
        (xyxy[1] + xyxy[3]) / 2.0 / hp,
        (xyxy[2] - xyxy[0]) / wp,
        (xyxy[3] - xyxy[1]) / hp,
    ]
}

/// Model-space cxcywh back to absolute xyxy, clipped to the image.
pub fn denormalize_box(b: [f64; 4], cfg: &ModelConfig, width: u32, height: u32) -> Option<[f64; 4]> {
    let (hp, wp) = cfg.padded_extent(height as usize, width as usize);
    let (wp, hp) = (wp as f64, hp as f64);
    let x1 = ((b[0] - b[2] / 2.0) * wp).clamp(0.0, width as f64);
    let y1 = ((b[1] - b[3] / 2.0) * hp).clamp(0.0, height as f64);
    let x2 = ((b[0] + b[2] / 2.0) * wp).clamp(0.0, width as f64);
    let y2 = ((b[1] + b[3] / 2.0) * hp).clamp(0.0, height as f64);
    (x2 > x1 && y2 > y1).then_some([x1, y1, x2, y2])
}

/// One training example: the caption with phrase groups plus model-space
/// ground truth.
pub struct TrainExample {
    pub tokenized: TokenizedCaption,
    pub gt: GroundTruthTargets,
}

pub fn build_example(
    sample: &GroundingSample,
    config: &RunConfig,
    categories: &[String],
    vocab: &Vocabulary,
    step_seed: u64,
) -> Result<TrainExample> {
    match sample.task {
        Task::Ovd => build_ovd_example(sample, config, categories, vocab, step_seed),
        Task::Pg | Task::Rec => build_phrase_example(sample, config, vocab),
    }
}

fn build_ovd_example(
    sample: &GroundingSample,
    config: &RunConfig,
    categories: &[String],
    vocab: &Vocabulary,
    step_seed: u64,
) -> Result<TrainExample> {
    let max_len = config.model.max_text_len;
    let (caption, spans, phrase_of_category): (String, Vec<(usize, usize)>, Vec<Option<usize>>) =
        match config.train.caption_mode {
            CaptionMode::FullVocab => {
                let (caption, spans) = assemble_ovd_caption(categories)?;
                let ids = (0..categories.len()).map(Some).collect();
                (caption, spans, ids)
            }
            CaptionMode::PositivesPlusNegatives => {
                let mut present: Vec<usize> = sample
                    .instances
                    .iter()
                    .filter_map(|i| i.category_id.map(|c| c as usize))
                    .collect();
                present.sort_unstable();
                present.dedup();
                let positives: Vec<String> =
                    present.iter().map(|&c| categories[c].clone()).collect();
                let pool: Vec<String> = categories
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !present.contains(i))
                    .map(|(_, c)| c.clone())
                    .collect();
                let n_neg = config.train.n_negatives.min(pool.len());
                let aug = assemble_with_negatives(&positives, &pool, n_neg, step_seed)?;
                let mut phrase_of = vec![None; categories.len()];
                for (pos, &cat) in present.iter().enumerate() {
                    phrase_of[cat] = Some(pos);
                }
                (aug.caption, aug.spans, phrase_of)
            }
        };

    let tokenized = tokenize(&caption, vocab, max_len)?.with_phrase_spans(&spans)?;
    let mut phrase_ids = Vec::with_capacity(sample.instances.len());
    let mut boxes = Vec::with_capacity(sample.instances.len());
    for inst in &sample.instances {
        let cat = inst.category_id.expect("validated OVD instance") as usize;
        let phrase = phrase_of_category[cat].ok_or_else(|| {
            CliError::Data(format!("category {cat} missing from the assembled caption"))
        })?;
        phrase_ids.push(phrase);
        boxes.push(normalize_box(
            inst.box_xyxy,
            &config.model,
            sample.width,
            sample.height,
        ));
    }
    let positive_map = build_positive_map(&tokenized, &phrase_ids)?;
    Ok(TrainExample {
        tokenized,
        gt: GroundTruthTargets {
            boxes,
            positive_map,
        },
    })
}

fn build_phrase_example(
    sample: &GroundingSample,
    config: &RunConfig,
    vocab: &Vocabulary,
) -> Result<TrainExample> {
    let caption = sample
        .caption
        .as_ref()
        .ok_or_else(|| CliError::Data("PG/REC sample without caption".into()))?;
    let spans: Vec<(usize, usize)> = match &sample.phrases {
        Some(ps) => ps.iter().map(|p| (p.start, p.end)).collect(),
        // a bare expression grounds the whole caption, sans trailing period
        None => vec![(0, caption.trim_end_matches('.').trim_end().len())],
    };
    let tokenized = tokenize(caption, vocab, config.model.max_text_len)?.with_phrase_spans(&spans)?;
    let mut phrase_ids = Vec::new();
    let mut boxes = Vec::new();
    for inst in &sample.instances {
        phrase_ids.push(inst.phrase_id.expect("validated PG/REC instance") as usize);
        boxes.push(normalize_box(
            inst.box_xyxy,
            &config.model,
            sample.width,
            sample.height,
        ));
    }
    let positive_map = build_positive_map(&tokenized, &phrase_ids)?;
    Ok(TrainExample {
        tokenized,
        gt: GroundTruthTargets {
            boxes,
            positive_map,
        },
    })
}
