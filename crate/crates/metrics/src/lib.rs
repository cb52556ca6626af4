//! Benchmark metrics over an in-memory detection store: COCO-style mAP with
//! 101-point interpolation, frequency-bucketed and base/novel-partitioned
//! AP, phrase-grounding recall@k, referring-expression accuracy, the
//! thresholded perfect-F1 protocol, and description-partitioned AP.

mod ap;
mod d3;
mod error;
mod grefcoco;
mod grounding;
mod iou;
mod report;
mod store;

pub use ap::{
    base_novel_split_ap, evaluate_ap, lvis_style_ap, macro_average, ApConfig, ApResult,
    BaseNovelAp, FrequencyBucket, LvisAp, RECALL_POINTS,
};
pub use d3::{d3_evaluate, D3Mode, DescriptionMeta, LengthBuckets};
pub use error::{MetricError, Result};
pub use grefcoco::{grefcoco_metrics, threshold_sweep, ExpressionEval, GRefMetrics, DEFAULT_SWEEP};
pub use grounding::{rec_accuracy, recall_at_k, FlickrProtocol, PhraseInstance, RecInstance, RecallAtK};
pub use iou::{iou_matrix, iou_xyxy};
pub use report::EvalReport;
pub use store::{validate_box, Detection, GtBox};
