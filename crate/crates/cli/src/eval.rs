//! The evaluation harness: runs inference per task protocol, converts token
//! logits to per-phrase scores, and feeds the metric suite.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use grounder_autodiff::Tape;
use grounder_data::{GroundingSample, Task};
use grounder_metrics::{
    base_novel_split_ap, d3_evaluate, evaluate_ap, grefcoco_metrics, lvis_style_ap, rec_accuracy,
    recall_at_k, threshold_sweep, ApConfig, D3Mode, DescriptionMeta, Detection, EvalReport,
    ExpressionEval, FlickrProtocol, FrequencyBucket, GtBox, LengthBuckets, PhraseInstance,
    RecInstance,
};
use grounder_model::{checkpoint, LayerPrediction, Model};
use grounder_text::{assemble_ovd_caption, tokenize, TokenizedCaption, Vocabulary};

use crate::config::{FlickrProtocolConfig, PhraseScoreReduce, RunConfig, VERSION_STRING};
use crate::dataset::{denormalize_box, load_dataset, LoadedDataset};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Ovd,
    Pg,
    Rec,
    D3Concat,
    D3Parallel,
}

impl EvalMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ovd" => Ok(Self::Ovd),
            "pg" => Ok(Self::Pg),
            "rec" => Ok(Self::Rec),
            "d3-concat" => Ok(Self::D3Concat),
            "d3-parallel" => Ok(Self::D3Parallel),
            other => Err(CliError::Config(format!(
                "unknown eval mode {other:?}; expected ovd|pg|rec|d3-concat|d3-parallel"
            ))),
        }
    }
}

pub struct EvalOptions {
    pub mode: EvalMode,
    pub threshold: Option<f64>,
    pub sweep: bool,
}

/// Load the checkpointed model, run the protocol, write predictions and the
/// report into `out_dir`, and return the report.
pub fn run_eval(
    checkpoint_path: &Path,
    config: &RunConfig,
    vocab: &Vocabulary,
    manifest_path: &Path,
    options: &EvalOptions,
    out_dir: &Path,
) -> Result<EvalReport> {
    let dataset = load_dataset(manifest_path)?;
    let mut model = Model::new(config.model.clone())?;
    model.store.load_entries(checkpoint::load(checkpoint_path)?)?;

    let (detections, mut report) = evaluate_dataset(&model, config, vocab, &dataset, options)?;
    report.set_meta("version", VERSION_STRING);
    report.set_count("clamped_boxes", dataset.clamped_boxes);

    std::fs::create_dir_all(out_dir)?;
    write_predictions(&out_dir.join("predictions.jsonl"), &detections)?;
    std::fs::write(out_dir.join("report.json"), report.to_json())?;
    std::fs::write(out_dir.join("report.txt"), report.render_text())?;
    Ok(report)
}

/// Inference plus metrics, in memory.
pub fn evaluate_dataset(
    model: &Model,
    config: &RunConfig,
    vocab: &Vocabulary,
    dataset: &LoadedDataset,
    options: &EvalOptions,
) -> Result<(Vec<Detection>, EvalReport)> {
    match options.mode {
        EvalMode::Ovd => eval_ovd(model, config, vocab, dataset),
        EvalMode::Pg => eval_pg(model, config, vocab, dataset),
        EvalMode::Rec => eval_rec(model, config, vocab, dataset, options),
        EvalMode::D3Concat => eval_d3(model, config, vocab, dataset, D3Mode::Concat),
        EvalMode::D3Parallel => eval_d3(model, config, vocab, dataset, D3Mode::Parallel),
    }
}

fn reduce_scores(probs: &[f64], reduce: PhraseScoreReduce) -> f64 {
    match reduce {
        PhraseScoreReduce::Max => probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        PhraseScoreReduce::Mean => probs.iter().sum::<f64>() / probs.len().max(1) as f64,
    }
}

/// Sigmoid token probabilities reduced to one score per (query, phrase).
fn phrase_scores(
    tape: &Tape,
    layer: &LayerPrediction,
    tokenized: &TokenizedCaption,
    reduce: PhraseScoreReduce,
) -> Vec<Vec<f64>> {
    let logits = tape.value(layer.token_logits);
    let nq = logits.shape()[0];
    let mut out = vec![vec![0.0; tokenized.phrase_groups.len()]; nq];
    for q in 0..nq {
        for (pi, group) in tokenized.phrase_groups.iter().enumerate() {
            let probs: Vec<f64> = group
                .token_indices
                .iter()
                .map(|&t| {
                    let x = logits.at(&[q, t]);
                    1.0 / (1.0 + (-x).exp())
                })
                .collect();
            out[q][pi] = reduce_scores(&probs, reduce);
        }
    }
    out
}

struct ForwardOutput {
    /// Absolute xyxy per query (None when the box degenerates after
    /// clipping).
    boxes: Vec<Option<[f64; 4]>>,
    /// `[query][phrase]` scores.
    scores: Vec<Vec<f64>>,
}

fn forward_sample(
    model: &Model,
    config: &RunConfig,
    sample: &GroundingSample,
    pixels: &grounder_autodiff::Tensor,
    tokenized: &TokenizedCaption,
) -> Result<ForwardOutput> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let pred = model.forward(&mut tape, &bound, pixels, tokenized)?;
    let final_layer = pred.final_layer();
    let scores = phrase_scores(&tape, final_layer, tokenized, config.eval.phrase_score_reduce);
    let boxes_t = tape.value(final_layer.boxes);
    let boxes = (0..boxes_t.shape()[0])
        .map(|q| {
            let b = [
                boxes_t.at(&[q, 0]),
                boxes_t.at(&[q, 1]),
                boxes_t.at(&[q, 2]),
                boxes_t.at(&[q, 3]),
            ];
            denormalize_box(b, &config.model, sample.width, sample.height)
        })
        .collect();
    Ok(ForwardOutput { boxes, scores })
}

fn gt_boxes_of(dataset: &LoadedDataset, label_from: impl Fn(&grounder_data::Instance) -> u64) -> Vec<GtBox> {
    let mut out = Vec::new();
    for sample in &dataset.samples {
        for inst in &sample.instances {
            out.push(GtBox {
                image_id: sample.image_id,
                box_xyxy: inst.box_xyxy,
                label_id: label_from(inst),
            });
        }
    }
    out
}

// ── OVD ──────────────────────────────────────────────────────────────────

fn eval_ovd(
    model: &Model,
    config: &RunConfig,
    vocab: &Vocabulary,
    dataset: &LoadedDataset,
) -> Result<(Vec<Detection>, EvalReport)> {
    let categories = &dataset.manifest.categories;
    if categories.is_empty() {
        return Err(CliError::Config("OVD evaluation needs manifest categories".into()));
    }
    let (caption, spans) = assemble_ovd_caption(categories)?;
    let tokenized =
        tokenize(&caption, vocab, config.model.max_text_len)?.with_phrase_spans(&spans)?;

    let mut detections = Vec::new();
    for (sample, pixels) in dataset.samples.iter().zip(&dataset.images) {
        if sample.task != Task::Ovd {
            return Err(CliError::Config(format!(
                "sample {} is not an OVD sample",
                sample.image_id
            )));
        }
        let out = forward_sample(model, config, sample, pixels, &tokenized)?;
        for (q, maybe_box) in out.boxes.iter().enumerate() {
            let Some(box_xyxy) = maybe_box else { continue };
            let (label, score) = out.scores[q]
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |acc, (i, &s)| {
                    if s > acc.1 {
                        (i, s)
                    } else {
                        acc
                    }
                });
            if score >= config.eval.score_floor {
                detections.push(Detection {
                    image_id: sample.image_id,
                    box_xyxy: *box_xyxy,
                    score,
                    label_id: label as u64,
                    phrase_id: None,
                });
            }
        }
    }

    let gts = gt_boxes_of(dataset, |inst| inst.category_id.unwrap_or(0) as u64);
    let cfg = ApConfig::default();
    let result = evaluate_ap(&detections, &gts, &cfg);
    let mut report = EvalReport::new();
    report.insert("map", result.map);
    if let Some(ap50) = result.map_at(0.5) {
        report.insert("ap50", ap50);
    }
    report.set_count("skipped_categories", result.skipped_categories);

    if let Some(bucket_names) = &dataset.manifest.frequency_buckets {
        let mut buckets = BTreeMap::new();
        for (i, name) in categories.iter().enumerate() {
            let bucket = bucket_names
                .get(name)
                .map(|b| match b.as_str() {
                    "rare" => FrequencyBucket::Rare,
                    "common" => FrequencyBucket::Common,
                    _ => FrequencyBucket::Frequent,
                });
            if let Some(b) = bucket {
                buckets.insert(i as u64, b);
            }
        }
        let lvis = lvis_style_ap(&detections, &gts, &buckets, &cfg)?;
        report.insert("ap_rare", lvis.ap_rare);
        report.insert("ap_common", lvis.ap_common);
        report.insert("ap_frequent", lvis.ap_frequent);
    }

    if let (Some(base), Some(novel)) = (
        &dataset.manifest.base_categories,
        &dataset.manifest.novel_categories,
    ) {
        let to_ids = |names: &Vec<String>| -> BTreeSet<u64> {
            names
                .iter()
                .filter_map(|n| categories.iter().position(|c| c == n))
                .map(|i| i as u64)
                .collect()
        };
        let split = base_novel_split_ap(&detections, &gts, &to_ids(base), &to_ids(novel), &cfg)?;
        report.insert("base_map", split.base_map);
        report.insert("novel_map", split.novel_map);
        report.insert("base_ap50", split.base_ap50);
        report.insert("novel_ap50", split.novel_ap50);
    }
    Ok((detections, report))
}

// ── PG ───────────────────────────────────────────────────────────────────

fn eval_pg(
    model: &Model,
    config: &RunConfig,
    vocab: &Vocabulary,
    dataset: &LoadedDataset,
) -> Result<(Vec<Detection>, EvalReport)> {
    let mut detections = Vec::new();
    let mut items = Vec::new();
    for (sample, pixels) in dataset.samples.iter().zip(&dataset.images) {
        let caption = sample
            .caption
            .as_ref()
            .ok_or_else(|| CliError::Data("PG sample without caption".into()))?;
        let spans: Vec<(usize, usize)> = sample
            .phrases
            .as_ref()
            .map(|ps| ps.iter().map(|p| (p.start, p.end)).collect())
            .unwrap_or_else(|| vec![(0, caption.trim_end_matches('.').len())]);
        let tokenized =
            tokenize(caption, vocab, config.model.max_text_len)?.with_phrase_spans(&spans)?;
        let out = forward_sample(model, config, sample, pixels, &tokenized)?;

        for (pi, _) in spans.iter().enumerate() {
            let mut dets = Vec::new();
            for (q, maybe_box) in out.boxes.iter().enumerate() {
                if let Some(b) = maybe_box {
                    dets.push((out.scores[q][pi], *b));
                    detections.push(Detection {
                        image_id: sample.image_id,
                        box_xyxy: *b,
                        score: out.scores[q][pi],
                        label_id: pi as u64,
                        phrase_id: Some(pi as u64),
                    });
                }
            }
            let gt_boxes: Vec<[f64; 4]> = sample
                .instances
                .iter()
                .filter(|i| i.phrase_id == Some(pi as u32))
                .map(|i| i.box_xyxy)
                .collect();
            items.push(PhraseInstance { dets, gt_boxes });
        }
    }
    let protocol = match config.eval.flickr_protocol {
        FlickrProtocolConfig::Any => FlickrProtocol::Any,
        FlickrProtocolConfig::Merged => FlickrProtocol::Merged,
    };
    let recall = recall_at_k(&items, &config.eval.recall_ks, 0.5, protocol);
    let mut report = EvalReport::new();
    for (k, v) in &recall.per_k {
        report.insert(&format!("recall@{k}"), *v);
    }
    report.set_count("phrases_evaluated", recall.n_evaluated as u64);
    report.set_count("phrases_skipped", recall.n_skipped);
    Ok((detections, report))
}

// ── REC / gRefCOCO ───────────────────────────────────────────────────────

fn eval_rec(
    model: &Model,
    config: &RunConfig,
    vocab: &Vocabulary,
    dataset: &LoadedDataset,
    options: &EvalOptions,
) -> Result<(Vec<Detection>, EvalReport)> {
    let mut detections = Vec::new();
    let mut expressions = Vec::new();
    let mut rec_items = Vec::new();
    for (sample, pixels) in dataset.samples.iter().zip(&dataset.images) {
        let caption = sample
            .caption
            .as_ref()
            .ok_or_else(|| CliError::Data("REC sample without caption".into()))?;
        let span_end = caption.trim_end_matches('.').trim_end().len();
        let tokenized = tokenize(caption, vocab, config.model.max_text_len)?
            .with_phrase_spans(&[(0, span_end)])?;
        let out = forward_sample(model, config, sample, pixels, &tokenized)?;

        let mut dets = Vec::new();
        for (q, maybe_box) in out.boxes.iter().enumerate() {
            if let Some(b) = maybe_box {
                dets.push((out.scores[q][0], *b));
                detections.push(Detection {
                    image_id: sample.image_id,
                    box_xyxy: *b,
                    score: out.scores[q][0],
                    label_id: 0,
                    phrase_id: Some(0),
                });
            }
        }
        let gt_boxes: Vec<[f64; 4]> = sample.instances.iter().map(|i| i.box_xyxy).collect();
        if gt_boxes.len() == 1 {
            rec_items.push(RecInstance {
                dets: dets.clone(),
                gt_box: gt_boxes[0],
            });
        }
        expressions.push(ExpressionEval { dets, gt_boxes });
    }

    let mut report = EvalReport::new();
    if !rec_items.is_empty() {
        report.insert("accuracy", rec_accuracy(&rec_items));
        report.set_count("expressions_single_target", rec_items.len() as u64);
    }
    let threshold = options.threshold.unwrap_or(config.eval.grefcoco_threshold);
    let m = grefcoco_metrics(&expressions, threshold);
    report.insert("pr_f1", m.pr_f1);
    if let Some(nacc) = m.n_acc {
        report.insert("n_acc", nacc);
    }
    report.set_count("expressions_targeted", m.n_targeted as u64);
    report.set_count("expressions_no_target", m.n_no_target as u64);
    report.set_meta("threshold", &format!("{threshold}"));

    if options.sweep {
        for (t, m) in threshold_sweep(&expressions, &config.eval.sweep_thresholds) {
            report.insert(&format!("pr_f1@{t:.2}"), m.pr_f1);
            if let Some(nacc) = m.n_acc {
                report.insert(&format!("n_acc@{t:.2}"), nacc);
            }
        }
    }
    Ok((detections, report))
}

// ── D3 ───────────────────────────────────────────────────────────────────

fn eval_d3(
    model: &Model,
    config: &RunConfig,
    vocab: &Vocabulary,
    dataset: &LoadedDataset,
    mode: D3Mode,
) -> Result<(Vec<Detection>, EvalReport)> {
    let descs = dataset
        .manifest
        .descriptions
        .as_ref()
        .ok_or_else(|| CliError::Config("described-object eval needs manifest descriptions".into()))?;

    let meta: Vec<DescriptionMeta> = descs
        .iter()
        .map(|d| {
            let n_tokens = tokenize(&d.text, vocab, config.model.max_text_len)
                .map(|t| t.len())
                .unwrap_or(0);
            DescriptionMeta {
                id: d.id,
                is_presence: d.is_presence,
                n_tokens,
            }
        })
        .collect();

    let mut detections = Vec::new();
    for (sample, pixels) in dataset.samples.iter().zip(&dataset.images) {
        match mode {
            D3Mode::Concat => {
                // all descriptions in one caption
                let texts: Vec<String> = descs.iter().map(|d| d.text.clone()).collect();
                let (caption, spans) = assemble_ovd_caption(&texts)?;
                let tokenized = tokenize(&caption, vocab, config.model.max_text_len)?
                    .with_phrase_spans(&spans)?;
                let out = forward_sample(model, config, sample, pixels, &tokenized)?;
                for (di, d) in descs.iter().enumerate() {
                    collect_description_dets(&mut detections, sample, &out, di, d.id);
                }
            }
            D3Mode::Parallel => {
                // one description per forward pass
                for d in descs {
                    let caption = format!("{}.", d.text);
                    let tokenized = tokenize(&caption, vocab, config.model.max_text_len)?
                        .with_phrase_spans(&[(0, d.text.len())])?;
                    let out = forward_sample(model, config, sample, pixels, &tokenized)?;
                    collect_description_dets(&mut detections, sample, &out, 0, d.id);
                }
            }
        }
    }

    let gts = gt_boxes_of(dataset, |inst| inst.phrase_id.unwrap_or(0) as u64);
    let (s, m, l) = config.eval.d3_buckets;
    let report = d3_evaluate(
        &detections,
        &gts,
        &meta,
        mode,
        LengthBuckets {
            s_max: s,
            m_max: m,
            l_max: l,
        },
        &ApConfig::default(),
    )?;
    Ok((detections, report))
}

fn collect_description_dets(
    detections: &mut Vec<Detection>,
    sample: &GroundingSample,
    out: &ForwardOutput,
    phrase_index: usize,
    description_id: u64,
) {
    for (q, maybe_box) in out.boxes.iter().enumerate() {
        if let Some(b) = maybe_box {
            detections.push(Detection {
                image_id: sample.image_id,
                box_xyxy: *b,
                score: out.scores[q][phrase_index],
                label_id: description_id,
                phrase_id: Some(description_id),
            });
        }
    }
}

fn write_predictions(path: &Path, detections: &[Detection]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    for d in detections {
        let line = serde_json::to_string(d).map_err(|e| CliError::Data(e.to_string()))?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

/// Reload a run directory's config and vocabulary (written by `train`).
pub fn load_run_context(checkpoint_path: &Path, config_path: Option<&Path>) -> Result<(RunConfig, Vocabulary)> {
    let dir = checkpoint_path.parent().unwrap_or(Path::new("."));
    let config_path = config_path
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| dir.join("config.json"));
    let config = RunConfig::load(&config_path)?;
    let vocab = Vocabulary::load(&dir.join("vocab.txt"))?;
    if vocab.len() != config.model.vocab_size {
        return Err(CliError::Config(format!(
            "vocabulary size {} does not match the model's {}",
            vocab.len(),
            config.model.vocab_size
        )));
    }
    Ok((config, vocab))
}
