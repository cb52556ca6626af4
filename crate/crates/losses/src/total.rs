//! The full training loss: one independent Hungarian match per supervision
//! set (every decoder layer plus the encoder output), then weighted focal
//! classification, L1, and GIoU terms.

use serde::{Deserialize, Serialize};

use grounder_autodiff::{Tape, Tensor, Var};
use grounder_model::Prediction;
use grounder_text::PositiveMap;

use crate::cost::match_cost;
use crate::error::{LossError, Result};
use crate::focal::focal_loss_matrix;
use crate::giou::giou_pairs;
use crate::hungarian::hungarian_match;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 2.0,
            l1: 5.0,
            giou: 2.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

/// What the per-set loss is divided by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossNormalization {
    /// Number of matched queries (empty-GT images fall back to 1).
    #[default]
    MatchedCount,
    /// Number of ground-truth boxes (empty-GT images fall back to 1).
    GtCount,
}

/// Ground truth for one image, already in model space.
#[derive(Debug, Clone)]
pub struct GroundTruthTargets {
    /// Normalized cxcywh.
    pub boxes: Vec<[f64; 4]>,
    pub positive_map: PositiveMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerLossValues {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
}

/// Unweighted component sums plus the weighted total; `per_layer` holds one
/// entry per supervision set (decoder layers in order, encoder output last).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub per_layer: Vec<LayerLossValues>,
    pub total: f64,
}

/// Build the loss graph for one image; returns the scalar loss variable for
/// backward plus the detached breakdown.
pub fn total_loss(
    tape: &mut Tape,
    prediction: &Prediction,
    gt: &GroundTruthTargets,
    weights: &LossWeights,
    normalization: LossNormalization,
) -> Result<(Var, LossBreakdown)> {
    if gt.positive_map.n_instances() != gt.boxes.len() {
        return Err(LossError::GtCountMismatch {
            map_rows: gt.positive_map.n_instances(),
            n_gt: gt.boxes.len(),
        });
    }

    let mut total_var = tape.scalar(0.0);
    let mut per_layer = Vec::new();
    let (mut cls_sum, mut l1_sum, mut giou_sum) = (0.0, 0.0, 0.0);

    for set in prediction.supervision_sets() {
        let logits_val = tape.value(set.token_logits).clone();
        let boxes_val = tape.value(set.boxes).clone();
        let nq = logits_val.shape()[0];
        let n_tokens = logits_val.shape()[1];
        if gt.positive_map.n_tokens() != n_tokens {
            return Err(LossError::TokenCountMismatch {
                map_tokens: gt.positive_map.n_tokens(),
                pred_tokens: n_tokens,
            });
        }

        let matches = if gt.boxes.is_empty() {
            Vec::new()
        } else {
            let cost = match_cost(&logits_val, &boxes_val, &gt.boxes, &gt.positive_map, weights)?;
            hungarian_match(&cost)?.pairs
        };
        let normalizer = match normalization {
            LossNormalization::MatchedCount => matches.len().max(1) as f64,
            LossNormalization::GtCount => gt.boxes.len().max(1) as f64,
        };

        // classification: matched queries take their GT's token row, the
        // rest all-zero targets
        let mut target_data = vec![0.0; nq * n_tokens];
        for &(q, g) in &matches {
            for t in 0..n_tokens {
                if gt.positive_map.get(g, t) {
                    target_data[q * n_tokens + t] = 1.0;
                }
            }
        }
        let targets = Tensor::new(vec![nq, n_tokens], target_data)?;
        let cls_var = focal_loss_matrix(
            tape,
            set.token_logits,
            &targets,
            weights.focal_alpha,
            weights.focal_gamma,
            normalizer,
        )?;

        let (l1_var, giou_var) = if matches.is_empty() {
            (tape.scalar(0.0), tape.scalar(0.0))
        } else {
            let rows: Vec<usize> = matches.iter().map(|&(q, _)| q).collect();
            let gt_rows: Vec<[f64; 4]> = matches.iter().map(|&(_, g)| gt.boxes[g]).collect();
            let pred_rows = tape.gather_rows(set.boxes, &rows)?;
            let gt_tensor = Tensor::new(
                vec![gt_rows.len(), 4],
                gt_rows.iter().flatten().copied().collect(),
            )?;
            let gt_const = tape.constant(gt_tensor);
            let diff = tape.sub(pred_rows, gt_const)?;
            let absdiff = tape.abs(diff)?;
            let l1_total = tape.sum(absdiff)?;
            let l1_var = tape.scale(l1_total, 1.0 / normalizer)?;

            let gious = giou_pairs(tape, pred_rows, &gt_rows)?;
            let neg = tape.neg(gious)?;
            let losses = tape.add_scalar(neg, 1.0)?;
            let giou_total = tape.sum(losses)?;
            let giou_var = tape.scale(giou_total, 1.0 / normalizer)?;
            (l1_var, giou_var)
        };

        let layer = LayerLossValues {
            cls: tape.value(cls_var).scalar_value(),
            l1: tape.value(l1_var).scalar_value(),
            giou: tape.value(giou_var).scalar_value(),
        };
        cls_sum += layer.cls;
        l1_sum += layer.l1;
        giou_sum += layer.giou;
        per_layer.push(layer);

        let wc = tape.scale(cls_var, weights.cls)?;
        let wl = tape.scale(l1_var, weights.l1)?;
        let wg = tape.scale(giou_var, weights.giou)?;
        let set_sum = tape.add(wc, wl)?;
        let set_sum = tape.add(set_sum, wg)?;
        total_var = tape.add(total_var, set_sum)?;
    }

    let breakdown = LossBreakdown {
        cls: cls_sum,
        l1: l1_sum,
        giou: giou_sum,
        per_layer,
        total: tape.value(total_var).scalar_value(),
    };
    Ok((total_var, breakdown))
}
