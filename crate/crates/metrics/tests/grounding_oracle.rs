//! Brute-force references for recall@k, REC accuracy, and the thresholded
//! perfect-F1 protocol on random synthetic phrases and expressions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grounder_metrics::{
    grefcoco_metrics, rec_accuracy, recall_at_k, ExpressionEval, FlickrProtocol, PhraseInstance,
    RecInstance,
};

fn iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    inter
        / ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)
}

fn rand_box(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let x1 = rng.gen_range(0.0..60.0);
    let y1 = rng.gen_range(0.0..60.0);
    [x1, y1, x1 + rng.gen_range(2.0..30.0), y1 + rng.gen_range(2.0..30.0)]
}

#[test]
fn recall_at_k_matches_oracle_on_200_random_phrases() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let items: Vec<PhraseInstance> = (0..200)
        .map(|_| PhraseInstance {
            dets: (0..rng.gen_range(0..12))
                .map(|_| (rng.gen_range(0.0..1.0), rand_box(&mut rng)))
                .collect(),
            gt_boxes: (0..rng.gen_range(1..4)).map(|_| rand_box(&mut rng)).collect(),
        })
        .collect();

    let got = recall_at_k(&items, &[1, 5, 10], 0.5, FlickrProtocol::Any);

    for (ki, &k) in [1usize, 5, 10].iter().enumerate() {
        let mut hits = 0usize;
        for item in &items {
            // oracle: sort a copy by score descending (stable), scan top-k
            let mut dets = item.dets.clone();
            let mut idx: Vec<usize> = (0..dets.len()).collect();
            idx.sort_by(|&a, &b| dets[b].0.partial_cmp(&dets[a].0).unwrap());
            dets = idx.iter().map(|&i| item.dets[i]).collect();
            let hit = dets.iter().take(k).any(|(_, d)| {
                item.gt_boxes.iter().any(|g| iou(d, g) >= 0.5)
            });
            if hit {
                hits += 1;
            }
        }
        let want = hits as f64 / items.len() as f64;
        assert!(
            (got.per_k[ki].1 - want).abs() < 1e-9,
            "k={k}: {} vs {want}",
            got.per_k[ki].1
        );
    }
}

#[test]
fn rec_accuracy_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let items: Vec<RecInstance> = (0..200)
        .map(|_| RecInstance {
            dets: (0..rng.gen_range(0..8))
                .map(|_| (rng.gen_range(0.0..1.0), rand_box(&mut rng)))
                .collect(),
            gt_box: rand_box(&mut rng),
        })
        .collect();
    let got = rec_accuracy(&items);

    let mut correct = 0usize;
    for item in &items {
        let best = item
            .dets
            .iter()
            .cloned()
            .fold(None::<(f64, [f64; 4])>, |acc, d| match acc {
                None => Some(d),
                Some(a) if d.0 > a.0 => Some(d),
                Some(a) => Some(a),
            });
        if let Some((_, b)) = best {
            if iou(&b, &item.gt_box) >= 0.5 {
                correct += 1;
            }
        }
    }
    let want = correct as f64 / items.len() as f64;
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}

#[test]
fn grefcoco_matches_oracle_on_random_expressions() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for trial in 0..200 {
        let exprs: Vec<ExpressionEval> = (0..20)
            .map(|_| {
                let no_target = rng.gen_bool(0.3);
                let gt_boxes = if no_target {
                    vec![]
                } else {
                    (0..rng.gen_range(1..4)).map(|_| rand_box(&mut rng)).collect()
                };
                // mix of perturbed-GT and random detections
                let dets = (0..rng.gen_range(0..6))
                    .map(|_| {
                        let b = if !gt_boxes.is_empty() && rng.gen_bool(0.6) {
                            let g = gt_boxes[rng.gen_range(0..gt_boxes.len())];
                            [
                                g[0] + rng.gen_range(-3.0..3.0),
                                g[1] + rng.gen_range(-3.0..3.0),
                                g[2] + rng.gen_range(-3.0..3.0),
                                g[3] + rng.gen_range(-3.0..3.0),
                            ]
                        } else {
                            rand_box(&mut rng)
                        };
                        (rng.gen_range(0.0..1.0), b)
                    })
                    .filter(|(_, b)| b[2] > b[0] && b[3] > b[1])
                    .collect();
                ExpressionEval { dets, gt_boxes }
            })
            .collect();

        let thr = [0.5, 0.6, 0.7, 0.8][rng.gen_range(0..4)];
        let got = grefcoco_metrics(&exprs, thr);

        // oracle: independent greedy evaluation
        let mut f1_hits = 0;
        let mut n_targeted = 0;
        let mut nacc_hits = 0;
        let mut n_no_target = 0;
        for e in &exprs {
            let mut kept: Vec<(f64, [f64; 4])> =
                e.dets.iter().cloned().filter(|(s, _)| *s >= thr).collect();
            kept.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            if e.gt_boxes.is_empty() {
                n_no_target += 1;
                if kept.is_empty() {
                    nacc_hits += 1;
                }
                continue;
            }
            n_targeted += 1;
            let mut used = vec![false; e.gt_boxes.len()];
            let mut matched = 0;
            for (_, d) in &kept {
                let mut best = None;
                let mut best_iou = 0.5;
                for (gi, g) in e.gt_boxes.iter().enumerate() {
                    if used[gi] {
                        continue;
                    }
                    let v = iou(d, g);
                    if v >= best_iou && (best.is_none() || v > best_iou) {
                        best_iou = v;
                        best = Some(gi);
                    }
                }
                if let Some(gi) = best {
                    used[gi] = true;
                    matched += 1;
                }
            }
            if used.iter().all(|&u| u) && matched == kept.len() {
                f1_hits += 1;
            }
        }
        let want_pr = if n_targeted == 0 { 0.0 } else { f1_hits as f64 / n_targeted as f64 };
        assert!((got.pr_f1 - want_pr).abs() < 1e-9, "trial {trial}");
        if n_no_target > 0 {
            let want_nacc = nacc_hits as f64 / n_no_target as f64;
            assert!((got.n_acc.unwrap() - want_nacc).abs() < 1e-9, "trial {trial}");
        } else {
            assert!(got.n_acc.is_none());
        }
    }
}
