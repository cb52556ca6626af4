//! Independent brute-force references for every AP-family metric, checked
//! exactly (1e-9) on random small scenes. The oracle shares only the metric
//! CONTRACT (ordering rule, greedy matching, 101-point interpolation), not
//! code: it recomputes precision/recall by scanning every prefix directly.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grounder_metrics::{
    evaluate_ap, lvis_style_ap, ApConfig, Detection, FrequencyBucket, GtBox, RECALL_POINTS,
};

// ── oracle ───────────────────────────────────────────────────────────────

fn oracle_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let x1 = a[0].max(b[0]);
    let y1 = a[1].max(b[1]);
    let x2 = a[2].min(b[2]);
    let y2 = a[3].min(b[3]);
    if x2 <= x1 || y2 <= y1 {
        return 0.0;
    }
    let inter = (x2 - x1) * (y2 - y1);
    let ua = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    inter / ua
}

/// AP for one category at one threshold by direct prefix scanning.
fn oracle_category_ap(dets: &[Detection], gts: &[GtBox], cat: u64, thr: f64, max_dets: usize) -> f64 {
    // contract order: score desc, image id asc, insertion index asc
    let mut ordered: Vec<(usize, &Detection)> = dets
        .iter()
        .enumerate()
        .filter(|(_, d)| d.label_id == cat)
        .collect();
    ordered.sort_by(|(ia, a), (ib, b)| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.image_id.cmp(&b.image_id))
            .then(ia.cmp(ib))
    });
    let mut per_image: BTreeMap<u64, usize> = BTreeMap::new();
    let ordered: Vec<&Detection> = ordered
        .into_iter()
        .filter(|(_, d)| {
            let e = per_image.entry(d.image_id).or_insert(0);
            *e += 1;
            *e <= max_dets
        })
        .map(|(_, d)| d)
        .collect();

    let cat_gts: Vec<&GtBox> = gts.iter().filter(|g| g.label_id == cat).collect();
    let n_gt = cat_gts.len();
    if n_gt == 0 {
        return 0.0;
    }

    // greedy matching in order (same contract, rewritten)
    let mut taken = vec![false; cat_gts.len()];
    let mut is_tp = Vec::new();
    for d in &ordered {
        let mut best_gi = None;
        let mut best_iou = thr;
        for (gi, g) in cat_gts.iter().enumerate() {
            if g.image_id != d.image_id || taken[gi] {
                continue;
            }
            let iou = oracle_iou(&d.box_xyxy, &g.box_xyxy);
            if iou >= best_iou && (best_gi.is_none() || iou > best_iou) {
                best_iou = iou;
                best_gi = Some(gi);
            }
        }
        if let Some(gi) = best_gi {
            taken[gi] = true;
            is_tp.push(true);
        } else {
            is_tp.push(false);
        }
    }

    // precision/recall at every prefix, then direct max-precision lookup at
    // each of the 101 recall points
    let mut prefix_pr = Vec::new();
    let mut tp = 0usize;
    for (k, flag) in is_tp.iter().enumerate() {
        if *flag {
            tp += 1;
        }
        prefix_pr.push((tp as f64 / n_gt as f64, tp as f64 / (k + 1) as f64));
    }
    let mut sum = 0.0;
    for i in 0..RECALL_POINTS {
        let r = i as f64 / (RECALL_POINTS - 1) as f64;
        let best = prefix_pr
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, p)| *p)
            .fold(0.0f64, f64::max);
        sum += best;
    }
    sum / RECALL_POINTS as f64
}

fn oracle_map(dets: &[Detection], gts: &[GtBox], thresholds: &[f64], max_dets: usize) -> f64 {
    let cats: BTreeSet<u64> = gts.iter().map(|g| g.label_id).collect();
    if cats.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for &c in &cats {
        let mut s = 0.0;
        for &t in thresholds {
            s += oracle_category_ap(dets, gts, c, t, max_dets);
        }
        total += s / thresholds.len() as f64;
    }
    total / cats.len() as f64
}

// ── random scenes ────────────────────────────────────────────────────────

fn random_scene(rng: &mut ChaCha8Rng) -> (Vec<Detection>, Vec<GtBox>) {
    let n_images = rng.gen_range(1..=3u64);
    let n_cats = rng.gen_range(1..=3u64);
    let mut gts = Vec::new();
    let mut dets = Vec::new();
    let mut rand_box = |r: &mut ChaCha8Rng| -> [f64; 4] {
        let x1 = r.gen_range(0.0..80.0);
        let y1 = r.gen_range(0.0..80.0);
        [x1, y1, x1 + r.gen_range(2.0..40.0), y1 + r.gen_range(2.0..40.0)]
    };
    for img in 0..n_images {
        for _ in 0..rng.gen_range(0..=5) {
            gts.push(GtBox {
                image_id: img,
                box_xyxy: rand_box(rng),
                label_id: rng.gen_range(0..n_cats),
            });
        }
        for _ in 0..rng.gen_range(0..=10) {
            // half the detections perturb a GT box, half are random
            let b = if !gts.is_empty() && rng.gen_bool(0.5) {
                let g = &gts[rng.gen_range(0..gts.len())];
                let mut b = g.box_xyxy;
                for v in &mut b {
                    *v += rng.gen_range(-6.0..6.0);
                }
                if b[2] <= b[0] || b[3] <= b[1] {
                    rand_box(rng)
                } else {
                    b
                }
            } else {
                rand_box(rng)
            };
            dets.push(Detection {
                image_id: img,
                box_xyxy: b,
                score: rng.gen_range(0.0..1.0),
                label_id: rng.gen_range(0..n_cats),
                phrase_id: None,
            });
        }
    }
    (dets, gts)
}

#[test]
fn map_matches_oracle_on_200_random_scenes() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = ApConfig::default();
    for scene in 0..200 {
        let (dets, gts) = random_scene(&mut rng);
        let got = evaluate_ap(&dets, &gts, &cfg).map;
        let want = oracle_map(&dets, &gts, &cfg.iou_thresholds, cfg.max_dets);
        assert!(
            (got - want).abs() < 1e-9,
            "scene {scene}: {got} vs oracle {want}"
        );
    }
}

#[test]
fn bucketed_ap_matches_bucket_aware_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let cfg = ApConfig::at_50();
    for scene in 0..200 {
        let (dets, gts) = random_scene(&mut rng);
        let cats: BTreeSet<u64> = gts.iter().map(|g| g.label_id).collect();
        if cats.is_empty() {
            continue;
        }
        let mut buckets = BTreeMap::new();
        for &c in &cats {
            buckets.insert(
                c,
                match rng.gen_range(0..3) {
                    0 => FrequencyBucket::Rare,
                    1 => FrequencyBucket::Common,
                    _ => FrequencyBucket::Frequent,
                },
            );
        }
        let got = lvis_style_ap(&dets, &gts, &buckets, &cfg).unwrap();

        let mut per_bucket: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for &c in &cats {
            let ap = oracle_category_ap(&dets, &gts, c, 0.5, cfg.max_dets);
            let key = match buckets[&c] {
                FrequencyBucket::Rare => "r",
                FrequencyBucket::Common => "c",
                FrequencyBucket::Frequent => "f",
            };
            per_bucket.entry(key).or_default().push(ap);
        }
        let mean = |k: &str| -> f64 {
            per_bucket
                .get(k)
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .unwrap_or(0.0)
        };
        assert!((got.ap_rare - mean("r")).abs() < 1e-9, "scene {scene}");
        assert!((got.ap_common - mean("c")).abs() < 1e-9, "scene {scene}");
        assert!((got.ap_frequent - mean("f")).abs() < 1e-9, "scene {scene}");
    }
}
