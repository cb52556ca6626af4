/// Intersection over union of two xyxy boxes.
pub fn iou_xyxy(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let area_a = (a[2] - a[0]) * (a[3] - a[1]);
    let area_b = (b[2] - b[0]) * (b[3] - b[1]);
    inter / (area_a + area_b - inter)
}

/// Pairwise IoU: `out[i][j] = IoU(preds[i], gts[j])`.
pub fn iou_matrix(preds: &[[f64; 4]], gts: &[[f64; 4]]) -> Vec<Vec<f64>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| iou_xyxy(p, g)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_boxes() {
        assert_eq!(iou_xyxy(&[0.0, 0.0, 2.0, 2.0], &[0.0, 0.0, 2.0, 2.0]), 1.0);
    }

    #[test]
    fn offset_overlap_is_one_seventh() {
        // inter 1, union 7
        let v = iou_xyxy(&[0.0, 0.0, 2.0, 2.0], &[1.0, 1.0, 3.0, 3.0]);
        assert!((v - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_boxes() {
        assert_eq!(iou_xyxy(&[0.0, 0.0, 1.0, 1.0], &[5.0, 5.0, 6.0, 6.0]), 0.0);
    }

    #[test]
    fn matrix_shape() {
        let m = iou_matrix(
            &[[0.0, 0.0, 1.0, 1.0], [1.0, 1.0, 2.0, 2.0]],
            &[[0.0, 0.0, 1.0, 1.0]],
        );
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].len(), 1);
        assert_eq!(m[0][0], 1.0);
    }
}
