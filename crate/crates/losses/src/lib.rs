//! Set-prediction training loss with Hungarian bipartite matching: focal
//! contrastive classification over (query, token) cells plus L1 and GIoU box
//! regression, replicated over every decoder layer and the encoder output.

mod cost;
mod error;
mod focal;
mod giou;
mod hungarian;
mod total;

pub use cost::match_cost;
pub use error::{LossError, Result};
pub use focal::{focal_cell, focal_loss_matrix};
pub use giou::{cxcywh_to_xyxy, giou_pairs, giou_xyxy, iou_xyxy};
pub use hungarian::{hungarian_match, MatchResult};
pub use total::{
    total_loss, GroundTruthTargets, LayerLossValues, LossBreakdown, LossNormalization, LossWeights,
};
