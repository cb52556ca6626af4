//! Matching cost between every (query, ground truth) pair, mirroring the
//! loss terms: focal-style classification against the GT's token row, L1
//! box distance, and 1 - GIoU.

use grounder_autodiff::Tensor;
use grounder_text::PositiveMap;

use crate::error::{LossError, Result};
use crate::focal::focal_cell;
use crate::giou::{cxcywh_to_xyxy, giou_xyxy};
use crate::total::LossWeights;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `logits` `[num_query, n_tokens]` and `boxes` `[num_query, 4]` are the
/// detached prediction values of one supervision set; boxes and `gt_boxes`
/// are normalized cxcywh.
pub fn match_cost(
    logits: &Tensor,
    boxes: &Tensor,
    gt_boxes: &[[f64; 4]],
    positive_map: &PositiveMap,
    weights: &LossWeights,
) -> Result<Vec<Vec<f64>>> {
    let nq = logits.shape()[0];
    let n_tokens = logits.shape()[1];
    if positive_map.n_tokens() != n_tokens {
        return Err(LossError::TokenCountMismatch {
            map_tokens: positive_map.n_tokens(),
            pred_tokens: n_tokens,
        });
    }
    if positive_map.n_instances() != gt_boxes.len() {
        return Err(LossError::GtCountMismatch {
            map_rows: positive_map.n_instances(),
            n_gt: gt_boxes.len(),
        });
    }

    let mut cost = vec![vec![0.0; gt_boxes.len()]; nq];
    for q in 0..nq {
        let box_q = [
            boxes.at(&[q, 0]),
            boxes.at(&[q, 1]),
            boxes.at(&[q, 2]),
            boxes.at(&[q, 3]),
        ];
        let box_q_xyxy = cxcywh_to_xyxy(box_q);
        for (g, gt) in gt_boxes.iter().enumerate() {
            // classification: focal positive-minus-negative over the GT's
            // positive tokens
            let mut cls = 0.0;
            for t in 0..n_tokens {
                if positive_map.get(g, t) {
                    let p = sigmoid(logits.at(&[q, t]));
                    cls += focal_cell(p, true, weights.focal_alpha, weights.focal_gamma)
                        - focal_cell(p, false, weights.focal_alpha, weights.focal_gamma);
                }
            }
            let l1: f64 = (0..4).map(|c| (box_q[c] - gt[c]).abs()).sum();
            let giou_cost = 1.0 - giou_xyxy(box_q_xyxy, cxcywh_to_xyxy(*gt));
            cost[q][g] = weights.cls * cls + weights.l1 * l1 + weights.giou * giou_cost;
        }
    }
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use grounder_text::{build_positive_map, tokenize, Vocabulary};

    fn simple_map(n_tokens: usize) -> PositiveMap {
        // one instance positive on token 0
        let vocab = Vocabulary::from_words(["a", "b", "c", "d"]);
        let text = ["a", "b", "c", "d"][..n_tokens].join(" ");
        let caption = tokenize(&text, &vocab, 64)
            .unwrap()
            .with_phrase_spans(&[(0, 1)])
            .unwrap();
        build_positive_map(&caption, &[0]).unwrap()
    }

    #[test]
    fn identical_box_zeroes_regression_terms() {
        let weights = LossWeights {
            cls: 0.0,
            ..LossWeights::default()
        };
        let logits = Tensor::zeros(&[1, 2]);
        let b = [0.5, 0.5, 0.2, 0.3];
        let boxes = Tensor::new(vec![1, 4], b.to_vec()).unwrap();
        let cost = match_cost(&logits, &boxes, &[b], &simple_map(2), &weights).unwrap();
        assert!(cost[0][0].abs() < 1e-12);
    }

    #[test]
    fn weight_isolation_reduces_to_pure_l1() {
        let weights = LossWeights {
            cls: 0.0,
            l1: 1.0,
            giou: 0.0,
            ..LossWeights::default()
        };
        let logits = Tensor::zeros(&[1, 2]);
        let boxes = Tensor::new(vec![1, 4], vec![0.5, 0.5, 0.2, 0.2]).unwrap();
        let gt = [0.4, 0.7, 0.25, 0.1];
        let cost = match_cost(&logits, &boxes, &[gt], &simple_map(2), &weights).unwrap();
        let want = (0.5f64 - 0.4).abs() + (0.5f64 - 0.7).abs() + (0.2f64 - 0.25).abs() + (0.2f64 - 0.1).abs();
        assert!((cost[0][0] - want).abs() < 1e-12);
    }

    #[test]
    fn moving_away_in_l1_never_lowers_costs() {
        use rand::{Rng, SeedableRng};
        let weights = LossWeights {
            cls: 0.0,
            l1: 1.0,
            giou: 0.0,
            ..LossWeights::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let map = simple_map(2);
        for _ in 0..200 {
            let logits = Tensor::zeros(&[1, 2]);
            let gt = [
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.3..0.7),
                rng.gen_range(0.1..0.3),
                rng.gen_range(0.1..0.3),
            ];
            // moving each coordinate further from the GT along its sign
            let base = [gt[0] + 0.05, gt[1] - 0.05, gt[2] + 0.02, gt[3] + 0.01];
            let further = [gt[0] + 0.15, gt[1] - 0.12, gt[2] + 0.08, gt[3] + 0.02];
            let near = Tensor::new(vec![1, 4], base.to_vec()).unwrap();
            let far = Tensor::new(vec![1, 4], further.to_vec()).unwrap();
            let c_near = match_cost(&logits, &near, &[gt], &map, &weights).unwrap();
            let c_far = match_cost(&logits, &far, &[gt], &map, &weights).unwrap();
            assert!(c_far[0][0] >= c_near[0][0]);
        }
    }
}
