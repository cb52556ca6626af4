//! Phrase-grounding recall@k and referring-expression top-1 accuracy.

use crate::iou::iou_xyxy;

/// Detections (score, box) and ground-truth boxes for one (image, phrase)
/// instance.
#[derive(Debug, Clone, Default)]
pub struct PhraseInstance {
    pub dets: Vec<(f64, [f64; 4])>,
    pub gt_boxes: Vec<[f64; 4]>,
}

/// How a recall hit is decided when a phrase has several ground-truth boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlickrProtocol {
    /// Hit if any top-k box reaches the IoU threshold with any GT box.
    #[default]
    Any,
    /// Hit against the union (enclosing box) of the phrase's GT boxes.
    Merged,
}

#[derive(Debug, Clone)]
pub struct RecallAtK {
    /// `(k, recall)` pairs in input order.
    pub per_k: Vec<(usize, f64)>,
    pub n_evaluated: usize,
    /// Phrases skipped because they carry no ground-truth box.
    pub n_skipped: u64,
}

/// Recall@k over phrase instances: a phrase counts as a hit at `k` if one of
/// its `k` highest-scoring boxes overlaps ground truth at `iou_thr`.
pub fn recall_at_k(
    items: &[PhraseInstance],
    ks: &[usize],
    iou_thr: f64,
    protocol: FlickrProtocol,
) -> RecallAtK {
    let mut n_skipped = 0u64;
    let mut hits = vec![0usize; ks.len()];
    let mut n_eval = 0usize;
    for item in items {
        if item.gt_boxes.is_empty() {
            n_skipped += 1;
            continue;
        }
        n_eval += 1;
        let mut order: Vec<usize> = (0..item.dets.len()).collect();
        order.sort_by(|&a, &b| {
            item.dets[b]
                .0
                .partial_cmp(&item.dets[a].0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let targets: Vec<[f64; 4]> = match protocol {
            FlickrProtocol::Any => item.gt_boxes.clone(),
            FlickrProtocol::Merged => vec![merge_boxes(&item.gt_boxes)],
        };
        let rank_of_first_hit = order.iter().position(|&di| {
            targets
                .iter()
                .any(|t| iou_xyxy(&item.dets[di].1, t) >= iou_thr)
        });
        for (ki, &k) in ks.iter().enumerate() {
            if matches!(rank_of_first_hit, Some(r) if r < k) {
                hits[ki] += 1;
            }
        }
    }
    RecallAtK {
        per_k: ks
            .iter()
            .zip(&hits)
            .map(|(&k, &h)| {
                (k, if n_eval == 0 { 0.0 } else { h as f64 / n_eval as f64 })
            })
            .collect(),
        n_evaluated: n_eval,
        n_skipped,
    }
}

fn merge_boxes(boxes: &[[f64; 4]]) -> [f64; 4] {
    let mut m = boxes[0];
    for b in &boxes[1..] {
        m[0] = m[0].min(b[0]);
        m[1] = m[1].min(b[1]);
        m[2] = m[2].max(b[2]);
        m[3] = m[3].max(b[3]);
    }
    m
}

/// One referring expression with its single ground-truth box.
#[derive(Debug, Clone)]
pub struct RecInstance {
    pub dets: Vec<(f64, [f64; 4])>,
    pub gt_box: [f64; 4],
}

/// Top-1 accuracy: the highest-scoring box must reach IoU >= 0.5; an
/// expression with no detections counts as incorrect.
pub fn rec_accuracy(items: &[RecInstance]) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let correct = items
        .iter()
        .filter(|item| {
            item.dets
                .iter()
                .enumerate()
                .max_by(|(ia, a), (ib, b)| {
                    a.0.partial_cmp(&b.0)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(ib.cmp(ia))
                })
                .map(|(_, best)| iou_xyxy(&best.1, &item.gt_box) >= 0.5)
                .unwrap_or(false)
        })
        .count();
    correct as f64 / items.len() as f64
}
