//! Generalized IoU: plain f64 box math plus a differentiable tape version
//! over matched prediction/ground-truth pairs.

use grounder_autodiff::{Tape, Tensor, Var};

use crate::error::Result;

pub fn cxcywh_to_xyxy(b: [f64; 4]) -> [f64; 4] {
    let [cx, cy, w, h] = b;
    [cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0]
}

pub fn iou_xyxy(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area_a = (a[2] - a[0]).max(0.0) * (a[3] - a[1]).max(0.0);
    let area_b = (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0);
    let union = area_a + area_b - inter;
    if union > 0.0 {
        inter / union
    } else {
        // degenerate boxes: IoU defined as zero
        0.0
    }
}

/// GIoU = IoU - (enclosing - union) / enclosing, in [-1, 1]. Zero-area boxes
/// contribute IoU 0 while the enclosure penalty stays intact.
pub fn giou_xyxy(a: [f64; 4], b: [f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let area_a = (a[2] - a[0]).max(0.0) * (a[3] - a[1]).max(0.0);
    let area_b = (b[2] - b[0]).max(0.0) * (b[3] - b[1]).max(0.0);
    let union = area_a + area_b - inter;
    let iou = if union > 0.0 { inter / union } else { 0.0 };
    let ew = a[2].max(b[2]) - a[0].min(b[0]);
    let eh = a[3].max(b[3]) - a[1].min(b[1]);
    let enclosing = ew * eh;
    if enclosing > 0.0 {
        iou - (enclosing - union) / enclosing
    } else {
        iou
    }
}

/// Per-pair GIoU between predicted boxes `[k, 4]` (normalized cxcywh, each
/// coordinate in (0,1)) and constant ground-truth boxes. Returns `[k, 1]`.
pub fn giou_pairs(tape: &mut Tape, pred_cxcywh: Var, gt_cxcywh: &[[f64; 4]]) -> Result<Var> {
    let k = gt_cxcywh.len();
    let gt_xyxy: Vec<f64> = gt_cxcywh
        .iter()
        .flat_map(|&b| cxcywh_to_xyxy(b))
        .collect();
    let gt = Tensor::new(vec![k, 4], gt_xyxy)?;
    let gx1 = tape.constant(slice_col(&gt, 0));
    let gy1 = tape.constant(slice_col(&gt, 1));
    let gx2 = tape.constant(slice_col(&gt, 2));
    let gy2 = tape.constant(slice_col(&gt, 3));

    let cx = tape.slice_cols(pred_cxcywh, 0, 1)?;
    let cy = tape.slice_cols(pred_cxcywh, 1, 1)?;
    let w = tape.slice_cols(pred_cxcywh, 2, 1)?;
    let h = tape.slice_cols(pred_cxcywh, 3, 1)?;
    let half_w = tape.scale(w, 0.5)?;
    let half_h = tape.scale(h, 0.5)?;
    let px1 = tape.sub(cx, half_w)?;
    let px2 = tape.add(cx, half_w)?;
    let py1 = tape.sub(cy, half_h)?;
    let py2 = tape.add(cy, half_h)?;

    // intersection
    let ix2 = tape.minimum(px2, gx2)?;
    let ix1 = tape.maximum(px1, gx1)?;
    let iy2 = tape.minimum(py2, gy2)?;
    let iy1 = tape.maximum(py1, gy1)?;
    let iw_raw = tape.sub(ix2, ix1)?;
    let iw = tape.relu(iw_raw)?;
    let ih_raw = tape.sub(iy2, iy1)?;
    let ih = tape.relu(ih_raw)?;
    let inter = tape.mul(iw, ih)?;

    // areas (w, h are sigmoid outputs, strictly positive)
    let area_p = tape.mul(w, h)?;
    let area_g: Vec<f64> = gt_cxcywh.iter().map(|b| b[2] * b[3]).collect();
    let area_g = tape.constant(Tensor::new(vec![k, 1], area_g)?);
    let sum_areas = tape.add(area_p, area_g)?;
    let union = tape.sub(sum_areas, inter)?;
    let iou = tape.div(inter, union)?;

    // enclosing box
    let ex2 = tape.maximum(px2, gx2)?;
    let ex1 = tape.minimum(px1, gx1)?;
    let ey2 = tape.maximum(py2, gy2)?;
    let ey1 = tape.minimum(py1, gy1)?;
    let ew = tape.sub(ex2, ex1)?;
    let eh = tape.sub(ey2, ey1)?;
    let enclosing = tape.mul(ew, eh)?;
    let hull_gap = tape.sub(enclosing, union)?;
    let penalty = tape.div(hull_gap, enclosing)?;
    Ok(tape.sub(iou, penalty)?)
}

fn slice_col(t: &Tensor, col: usize) -> Tensor {
    let k = t.shape()[0];
    let data: Vec<f64> = (0..k).map(|r| t.at(&[r, col])).collect();
    Tensor::new(vec![k, 1], data).expect("column slice")
}
