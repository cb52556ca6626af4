//! Generalized referring-expression metrics: Pr@(F1=1, IoU>=0.5) over
//! targeted expressions and N-acc over no-target expressions, with the
//! score-threshold sweep reported in the benchmark.

use crate::iou::iou_xyxy;

/// One expression: scored detections plus zero or more ground-truth boxes
/// (zero means a no-target expression).
#[derive(Debug, Clone, Default)]
pub struct ExpressionEval {
    pub dets: Vec<(f64, [f64; 4])>,
    pub gt_boxes: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GRefMetrics {
    /// Fraction of targeted expressions predicted perfectly one-to-one.
    pub pr_f1: f64,
    /// Fraction of no-target expressions with zero kept detections;
    /// NaN-free: `None` when the split has no no-target expressions.
    pub n_acc: Option<f64>,
    pub n_targeted: usize,
    pub n_no_target: usize,
}

pub const DEFAULT_SWEEP: [f64; 4] = [0.5, 0.6, 0.7, 0.8];

/// Evaluate at one score threshold. Kept detections are matched greedily in
/// score-descending order, one-to-one at IoU >= 0.5; an expression scores
/// F1 = 1 exactly when every GT box is matched and no kept detection is left
/// unmatched.
pub fn grefcoco_metrics(expressions: &[ExpressionEval], threshold: f64) -> GRefMetrics {
    let mut n_targeted = 0usize;
    let mut n_no_target = 0usize;
    let mut f1_hits = 0usize;
    let mut n_acc_hits = 0usize;

    for expr in expressions {
        let mut kept: Vec<&(f64, [f64; 4])> =
            expr.dets.iter().filter(|(s, _)| *s >= threshold).collect();
        kept.sort_by(|a, b| {
            b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal)
        });

        if expr.gt_boxes.is_empty() {
            n_no_target += 1;
            if kept.is_empty() {
                n_acc_hits += 1;
            }
            continue;
        }
        n_targeted += 1;

        let mut taken = vec![false; expr.gt_boxes.len()];
        let mut matched_dets = 0usize;
        for (_, dbox) in &kept {
            let mut best: Option<(usize, f64)> = None;
            for (gi, g) in expr.gt_boxes.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let iou = iou_xyxy(dbox, g);
                if iou >= 0.5 && best.map_or(true, |(_, b)| iou > b) {
                    best = Some((gi, iou));
                }
            }
            if let Some((gi, _)) = best {
                taken[gi] = true;
                matched_dets += 1;
            }
        }
        let all_gt_matched = taken.iter().all(|&t| t);
        let no_spurious = matched_dets == kept.len();
        if all_gt_matched && no_spurious {
            f1_hits += 1;
        }
    }

    GRefMetrics {
        pr_f1: if n_targeted == 0 {
            0.0
        } else {
            f1_hits as f64 / n_targeted as f64
        },
        n_acc: if n_no_target == 0 {
            None
        } else {
            Some(n_acc_hits as f64 / n_no_target as f64)
        },
        n_targeted,
        n_no_target,
    }
}

/// The benchmark's threshold table.
pub fn threshold_sweep(
    expressions: &[ExpressionEval],
    thresholds: &[f64],
) -> Vec<(f64, GRefMetrics)> {
    thresholds
        .iter()
        .map(|&t| (t, grefcoco_metrics(expressions, t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: [f64; 4] = [0.0, 0.0, 10.0, 10.0];
    const B: [f64; 4] = [20.0, 0.0, 30.0, 10.0];

    #[test]
    fn two_gts_two_matching_dets_is_a_hit() {
        let e = ExpressionEval {
            dets: vec![(0.9, A), (0.8, B)],
            gt_boxes: vec![A, B],
        };
        let m = grefcoco_metrics(&[e], 0.5);
        assert_eq!(m.pr_f1, 1.0);
        assert_eq!(m.n_targeted, 1);
    }

    #[test]
    fn extra_kept_detection_breaks_precision() {
        let e = ExpressionEval {
            dets: vec![(0.9, A), (0.8, [50.0, 50.0, 60.0, 60.0])],
            gt_boxes: vec![A],
        };
        let m = grefcoco_metrics(&[e], 0.5);
        assert_eq!(m.pr_f1, 0.0);
    }

    #[test]
    fn no_target_with_zero_kept_is_n_acc_hit() {
        let e = ExpressionEval {
            dets: vec![(0.3, A)],
            gt_boxes: vec![],
        };
        let m = grefcoco_metrics(&[e], 0.5);
        assert_eq!(m.n_acc, Some(1.0));
        let m = grefcoco_metrics(&[ExpressionEval {
            dets: vec![(0.9, A)],
            gt_boxes: vec![],
        }], 0.5);
        assert_eq!(m.n_acc, Some(0.0));
    }

    #[test]
    fn missing_gt_breaks_recall() {
        let e = ExpressionEval {
            dets: vec![(0.9, A)],
            gt_boxes: vec![A, B],
        };
        let m = grefcoco_metrics(&[e], 0.5);
        assert_eq!(m.pr_f1, 0.0);
    }

    #[test]
    fn default_sweep_matches_benchmark_thresholds() {
        assert_eq!(DEFAULT_SWEEP, [0.5, 0.6, 0.7, 0.8]);
        let e = ExpressionEval {
            dets: vec![(0.55, A)],
            gt_boxes: vec![A],
        };
        let rows = threshold_sweep(&[e], &DEFAULT_SWEEP);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].1.pr_f1, 1.0); // kept at 0.5
        assert_eq!(rows[1].1.pr_f1, 0.0); // dropped at 0.6
    }

    #[test]
    fn threshold_zero_keeps_everything() {
        let e = ExpressionEval {
            dets: vec![(0.0, A)],
            gt_boxes: vec![A],
        };
        assert_eq!(grefcoco_metrics(&[e], 0.0).pr_f1, 1.0);
    }

    #[test]
    fn n_acc_never_decreases_with_threshold() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let exprs: Vec<ExpressionEval> = (0..100)
            .map(|_| ExpressionEval {
                dets: (0..rng.gen_range(0..5))
                    .map(|_| {
                        let x = rng.gen_range(0.0..50.0);
                        (rng.gen_range(0.0..1.0), [x, x, x + 5.0, x + 5.0])
                    })
                    .collect(),
                gt_boxes: vec![],
            })
            .collect();
        let mut prev = -1.0;
        for t in [0.0, 0.2, 0.5, 0.6, 0.7, 0.8, 1.0] {
            let m = grefcoco_metrics(&exprs, t);
            let acc = m.n_acc.unwrap();
            assert!(acc >= prev, "N-acc decreased at threshold {t}");
            prev = acc;
        }
    }
}
