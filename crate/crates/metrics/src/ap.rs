//! COCO-style average precision: greedy score-descending matching per
//! category and IoU threshold, 101-point interpolated PR integration, and
//! the bucketed/partitioned variants built on top of it.
//!
//! Detections are ordered by (score descending, image id, insertion index);
//! that total order is part of the metric contract.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use crate::error::{MetricError, Result};
use crate::iou::iou_xyxy;
use crate::store::{Detection, GtBox};

pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone)]
pub struct ApConfig {
    pub iou_thresholds: Vec<f64>,
    /// Per-image, per-category detection cap applied after sorting.
    pub max_dets: usize,
}

impl Default for ApConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: (0..10).map(|i| 0.5 + 0.05 * i as f64).collect(),
            max_dets: 100,
        }
    }
}

impl ApConfig {
    pub fn at_50() -> Self {
        Self {
            iou_thresholds: vec![0.5],
            max_dets: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApResult {
    /// Mean over categories of the per-category threshold means.
    pub map: f64,
    /// Per category: AP at each configured threshold.
    pub per_category: BTreeMap<u64, Vec<f64>>,
    pub iou_thresholds: Vec<f64>,
    /// Categories with zero ground truth, excluded from the means.
    pub skipped_categories: u64,
}

impl ApResult {
    /// Mean AP at one threshold across categories.
    pub fn map_at(&self, threshold: f64) -> Option<f64> {
        let idx = self
            .iou_thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-9)?;
        if self.per_category.is_empty() {
            return Some(0.0);
        }
        let sum: f64 = self.per_category.values().map(|v| v[idx]).sum();
        Some(sum / self.per_category.len() as f64)
    }

    pub fn category_ap(&self, category: u64) -> Option<f64> {
        let v = self.per_category.get(&category)?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }

    fn mean_over(&self, categories: &BTreeSet<u64>) -> f64 {
        let aps: Vec<f64> = self
            .per_category
            .iter()
            .filter(|(c, _)| categories.contains(c))
            .map(|(_, v)| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        if aps.is_empty() {
            0.0
        } else {
            aps.iter().sum::<f64>() / aps.len() as f64
        }
    }
}

/// Average precision over all categories present in the ground truth.
pub fn evaluate_ap(dets: &[Detection], gts: &[GtBox], cfg: &ApConfig) -> ApResult {
    let mut gt_categories = BTreeSet::new();
    for g in gts {
        gt_categories.insert(g.label_id);
    }
    let det_categories: BTreeSet<u64> = dets.iter().map(|d| d.label_id).collect();
    let skipped = det_categories.difference(&gt_categories).count() as u64;

    let mut per_category = BTreeMap::new();
    for &cat in &gt_categories {
        let aps = category_ap(dets, gts, cat, cfg);
        per_category.insert(cat, aps);
    }
    let map = if per_category.is_empty() {
        0.0
    } else {
        per_category
            .values()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .sum::<f64>()
            / per_category.len() as f64
    };
    ApResult {
        map,
        per_category,
        iou_thresholds: cfg.iou_thresholds.clone(),
        skipped_categories: skipped,
    }
}

fn category_ap(dets: &[Detection], gts: &[GtBox], category: u64, cfg: &ApConfig) -> Vec<f64> {
    // deterministic order: score desc, image id asc, insertion index asc
    let mut cat_dets: Vec<(usize, &Detection)> = dets
        .iter()
        .enumerate()
        .filter(|(_, d)| d.label_id == category)
        .collect();
    cat_dets.sort_by(|(ia, a), (ib, b)| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.image_id.cmp(&b.image_id))
            .then(ia.cmp(ib))
    });
    // per-image cap
    let mut per_image_counts: BTreeMap<u64, usize> = BTreeMap::new();
    let capped: Vec<&Detection> = cat_dets
        .into_iter()
        .filter(|(_, d)| {
            let c = per_image_counts.entry(d.image_id).or_insert(0);
            *c += 1;
            *c <= cfg.max_dets
        })
        .map(|(_, d)| d)
        .collect();

    let mut gts_by_image: BTreeMap<u64, Vec<&GtBox>> = BTreeMap::new();
    for g in gts.iter().filter(|g| g.label_id == category) {
        gts_by_image.entry(g.image_id).or_default().push(g);
    }
    let n_gt: usize = gts_by_image.values().map(Vec::len).sum();
    if n_gt == 0 {
        return vec![0.0; cfg.iou_thresholds.len()];
    }

    // cache per-detection IoUs with its image's ground truth
    let det_ious: Vec<Vec<f64>> = capped
        .iter()
        .map(|d| {
            gts_by_image
                .get(&d.image_id)
                .map(|gs| gs.iter().map(|g| iou_xyxy(&d.box_xyxy, &g.box_xyxy)).collect())
                .unwrap_or_default()
        })
        .collect();

    cfg.iou_thresholds
        .iter()
        .map(|&thr| {
            let mut matched: BTreeMap<u64, Vec<bool>> = gts_by_image
                .iter()
                .map(|(&img, gs)| (img, vec![false; gs.len()]))
                .collect();
            let mut tp_flags = Vec::with_capacity(capped.len());
            for (di, d) in capped.iter().enumerate() {
                let ious = &det_ious[di];
                let mut best: Option<(usize, f64)> = None;
                if let Some(taken) = matched.get_mut(&d.image_id) {
                    for (gi, &iou) in ious.iter().enumerate() {
                        if taken[gi] || iou < thr {
                            continue;
                        }
                        if best.map_or(true, |(_, b)| iou > b) {
                            best = Some((gi, iou));
                        }
                    }
                    if let Some((gi, _)) = best {
                        taken[gi] = true;
                    }
                }
                tp_flags.push(best.is_some());
            }
            interpolated_ap(&tp_flags, n_gt)
        })
        .collect()
}

/// 101-point interpolated AP from ordered TP/FP flags.
fn interpolated_ap(tp_flags: &[bool], n_gt: usize) -> f64 {
    let n = tp_flags.len();
    if n == 0 {
        return 0.0;
    }
    let mut recalls = Vec::with_capacity(n);
    let mut precisions = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (k, &is_tp) in tp_flags.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        recalls.push(tp as f64 / n_gt as f64);
        precisions.push(tp as f64 / (k + 1) as f64);
    }
    // precision envelope from the right
    let mut envelope = precisions.clone();
    for k in (0..n - 1).rev() {
        envelope[k] = envelope[k].max(envelope[k + 1]);
    }
    let mut total = 0.0;
    let mut k = 0usize;
    for i in 0..RECALL_POINTS {
        let r = i as f64 / (RECALL_POINTS - 1) as f64;
        while k < n && recalls[k] < r {
            k += 1;
        }
        if k < n {
            total += envelope[k];
        }
    }
    total / RECALL_POINTS as f64
}

// ── bucketed and partitioned variants ────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrequencyBucket {
    Rare,
    Common,
    Frequent,
}

#[derive(Debug, Clone)]
pub struct LvisAp {
    pub ap: f64,
    pub ap_rare: f64,
    pub ap_common: f64,
    pub ap_frequent: f64,
}

/// Per-bucket category means; every GT category must carry a bucket.
pub fn lvis_style_ap(
    dets: &[Detection],
    gts: &[GtBox],
    buckets: &BTreeMap<u64, FrequencyBucket>,
    cfg: &ApConfig,
) -> Result<LvisAp> {
    let result = evaluate_ap(dets, gts, cfg);
    let mut rare = BTreeSet::new();
    let mut common = BTreeSet::new();
    let mut frequent = BTreeSet::new();
    for &cat in result.per_category.keys() {
        match buckets.get(&cat) {
            Some(FrequencyBucket::Rare) => rare.insert(cat),
            Some(FrequencyBucket::Common) => common.insert(cat),
            Some(FrequencyBucket::Frequent) => frequent.insert(cat),
            None => return Err(MetricError::UnbucketedCategory(cat)),
        };
    }
    Ok(LvisAp {
        ap: result.map,
        ap_rare: result.mean_over(&rare),
        ap_common: result.mean_over(&common),
        ap_frequent: result.mean_over(&frequent),
    })
}

#[derive(Debug, Clone)]
pub struct BaseNovelAp {
    pub map: f64,
    pub base_map: f64,
    pub novel_map: f64,
    pub ap50: f64,
    pub base_ap50: f64,
    pub novel_ap50: f64,
}

/// Category-mean AP restricted to a base/novel partition; the partition must
/// be disjoint and cover every GT category.
pub fn base_novel_split_ap(
    dets: &[Detection],
    gts: &[GtBox],
    base: &BTreeSet<u64>,
    novel: &BTreeSet<u64>,
    cfg: &ApConfig,
) -> Result<BaseNovelAp> {
    if let Some(&dup) = base.intersection(novel).next() {
        return Err(MetricError::OverlappingPartition(dup));
    }
    let result = evaluate_ap(dets, gts, cfg);
    for &cat in result.per_category.keys() {
        if !base.contains(&cat) && !novel.contains(&cat) {
            return Err(MetricError::UnpartitionedCategory(cat));
        }
    }
    let ap50_mean = |cats: Option<&BTreeSet<u64>>| -> f64 {
        let idx = match result.iou_thresholds.iter().position(|t| (t - 0.5).abs() < 1e-9) {
            Some(i) => i,
            None => return f64::NAN,
        };
        let vals: Vec<f64> = result
            .per_category
            .iter()
            .filter(|(c, _)| cats.map_or(true, |s| s.contains(c)))
            .map(|(_, v)| v[idx])
            .collect();
        if vals.is_empty() {
            0.0
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    Ok(BaseNovelAp {
        map: result.map,
        base_map: result.mean_over(base),
        novel_map: result.mean_over(novel),
        ap50: ap50_mean(None),
        base_ap50: ap50_mean(Some(base)),
        novel_ap50: ap50_mean(Some(novel)),
    })
}

/// Unweighted mean over per-dataset results.
pub fn macro_average(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(MetricError::EmptyInput("macro_average input"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(image_id: u64, b: [f64; 4], score: f64, label: u64) -> Detection {
        Detection {
            image_id,
            box_xyxy: b,
            score,
            label_id: label,
            phrase_id: None,
        }
    }

    fn gt(image_id: u64, b: [f64; 4], label: u64) -> GtBox {
        GtBox {
            image_id,
            box_xyxy: b,
            label_id: label,
        }
    }

    const B: [f64; 4] = [10.0, 10.0, 50.0, 50.0];
    const FAR: [f64; 4] = [60.0, 60.0, 90.0, 90.0];

    #[test]
    fn tp_before_fp_gives_perfect_ap() {
        let dets = vec![det(1, B, 0.9, 0), det(1, FAR, 0.8, 0)];
        let gts = vec![gt(1, B, 0)];
        let r = evaluate_ap(&dets, &gts, &ApConfig::at_50());
        assert!((r.map - 1.0).abs() < 1e-12, "map {}", r.map);
    }

    #[test]
    fn fp_before_tp_halves_interpolated_ap() {
        let dets = vec![det(1, FAR, 0.9, 0), det(1, B, 0.8, 0)];
        let gts = vec![gt(1, B, 0)];
        let r = evaluate_ap(&dets, &gts, &ApConfig::at_50());
        assert!((r.map - 0.5).abs() < 1e-12, "map {}", r.map);
    }

    #[test]
    fn no_detections_zero_ap() {
        let r = evaluate_ap(&[], &[gt(1, B, 0)], &ApConfig::at_50());
        assert_eq!(r.map, 0.0);
    }

    #[test]
    fn detection_only_categories_are_skipped_and_counted() {
        let dets = vec![det(1, B, 0.9, 7)];
        let gts = vec![gt(1, B, 0)];
        let r = evaluate_ap(&dets, &gts, &ApConfig::at_50());
        assert_eq!(r.skipped_categories, 1);
        assert!(!r.per_category.contains_key(&7));
    }

    #[test]
    fn lvis_bucket_means() {
        // category 0 detected perfectly, category 1 missed entirely
        let dets = vec![det(1, B, 0.9, 0)];
        let gts = vec![gt(1, B, 0), gt(1, FAR, 1)];
        let mut buckets = BTreeMap::new();
        buckets.insert(0, FrequencyBucket::Rare);
        buckets.insert(1, FrequencyBucket::Frequent);
        let r = lvis_style_ap(&dets, &gts, &buckets, &ApConfig::at_50()).unwrap();
        assert!((r.ap_rare - 1.0).abs() < 1e-12);
        assert_eq!(r.ap_frequent, 0.0);
        assert!((r.ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_bucket_equals_overall() {
        let dets = vec![det(1, B, 0.9, 0), det(2, FAR, 0.7, 1)];
        let gts = vec![gt(1, B, 0), gt(2, FAR, 1)];
        let mut buckets = BTreeMap::new();
        buckets.insert(0, FrequencyBucket::Common);
        buckets.insert(1, FrequencyBucket::Common);
        let r = lvis_style_ap(&dets, &gts, &buckets, &ApConfig::at_50()).unwrap();
        assert!((r.ap_common - r.ap).abs() < 1e-12);
    }

    #[test]
    fn missing_bucket_is_an_error() {
        let dets = vec![det(1, B, 0.9, 0)];
        let gts = vec![gt(1, B, 0)];
        let err = lvis_style_ap(&dets, &gts, &BTreeMap::new(), &ApConfig::at_50()).unwrap_err();
        assert!(matches!(err, MetricError::UnbucketedCategory(0)));
    }

    #[test]
    fn base_novel_means() {
        let dets = vec![det(1, B, 0.9, 0), det(1, FAR, 0.9, 1), det(1, FAR, 0.8, 1)];
        let gts = vec![gt(1, B, 0), gt(1, B, 1)];
        let base: BTreeSet<u64> = [0].into();
        let novel: BTreeSet<u64> = [1].into();
        let r = base_novel_split_ap(&dets, &gts, &base, &novel, &ApConfig::at_50()).unwrap();
        assert!((r.base_map - 1.0).abs() < 1e-12);
        assert_eq!(r.novel_map, 0.0);
        assert!((r.map - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_novel_set_makes_base_equal_overall() {
        let dets = vec![det(1, B, 0.9, 0)];
        let gts = vec![gt(1, B, 0)];
        let base: BTreeSet<u64> = [0].into();
        let r = base_novel_split_ap(&dets, &gts, &base, &BTreeSet::new(), &ApConfig::at_50()).unwrap();
        assert_eq!(r.base_map, r.map);
    }

    #[test]
    fn overlapping_partition_rejected() {
        let base: BTreeSet<u64> = [0, 1].into();
        let novel: BTreeSet<u64> = [1].into();
        let err = base_novel_split_ap(&[], &[gt(1, B, 0)], &base, &novel, &ApConfig::at_50()).unwrap_err();
        assert!(matches!(err, MetricError::OverlappingPartition(1)));
    }

    #[test]
    fn macro_average_basics() {
        assert_eq!(macro_average(&[0.5]).unwrap(), 0.5);
        assert_eq!(macro_average(&[0.0, 1.0]).unwrap(), 0.5);
        assert!(macro_average(&[]).is_err());
    }

    #[test]
    fn map_rank_only_dependence() {
        // strictly monotone score transform must not change AP
        let dets = vec![
            det(1, B, 0.9, 0),
            det(1, FAR, 0.6, 0),
            det(2, B, 0.3, 0),
        ];
        let gts = vec![gt(1, B, 0), gt(2, B, 0)];
        let transformed: Vec<Detection> = dets
            .iter()
            .map(|d| Detection {
                score: (d.score * 3.0).exp(),
                ..d.clone()
            })
            .collect();
        let a = evaluate_ap(&dets, &gts, &ApConfig::default());
        let b = evaluate_ap(&transformed, &gts, &ApConfig::default());
        assert!((a.map - b.map).abs() < 1e-12);
    }
}
