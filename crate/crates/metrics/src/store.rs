use serde::{Deserialize, Serialize};

use crate::error::{MetricError, Result};

/// One detection in absolute pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: u64,
    /// (x1, y1, x2, y2), x2 > x1 and y2 > y1.
    #[serde(rename = "box")]
    pub box_xyxy: [f64; 4],
    pub score: f64,
    /// Category id or phrase/description id, depending on the task.
    pub label_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phrase_id: Option<u64>,
}

/// One ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtBox {
    pub image_id: u64,
    #[serde(rename = "box")]
    pub box_xyxy: [f64; 4],
    pub label_id: u64,
}

pub fn validate_box(b: &[f64; 4]) -> Result<()> {
    if !(b[2] > b[0] && b[3] > b[1]) || b.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::InvalidBox(b[0], b[1], b[2], b[3]));
    }
    Ok(())
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        validate_box(&self.box_xyxy)?;
        if !self.score.is_finite() {
            return Err(MetricError::InvalidScore(self.score));
        }
        Ok(())
    }
}
